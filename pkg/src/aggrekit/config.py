"""Experiment configuration: JSON documents validated against a shipped schema."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .grid import Grid
from .kernels import KernelSpec, kernel_from_dict
from .solver import Bump, Caps, InitialData, SimConfig


class ConfigError(ValueError):
    """Invalid configuration; ``where`` locates the problem (line/column or JSON path)."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def load_schema(name: str = "config.schema.json") -> dict:
    return json.loads(resources.files("aggrekit").joinpath("schemas", name).read_text())


@dataclass
class ExperimentConfig:
    raw: dict
    name: str = "experiment"
    grid: Grid = None
    kernel: KernelSpec = None
    sim: SimConfig = None
    outputs: dict = field(default_factory=dict)
    picard: dict = field(default_factory=dict)
    sweep: dict | None = None

    @property
    def plot(self) -> bool:
        return bool(self.outputs.get("plot", True))

    @property
    def delta(self) -> float:
        return float(self.outputs.get("delta", 1.0))

    @property
    def s_max(self) -> float:
        return float(self.outputs.get("s_max", 100.0))

    def total_mass(self) -> float:
        bumps = self.raw["initial_data"].get("bumps")
        return sum(b["mass"] for b in bumps) if bumps else math.nan


def _check_finite(obj, path="$"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ConfigError("non-finite number", path)
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def _json_path(err: jsonschema.ValidationError) -> str:
    p = "$"
    for part in err.absolute_path:
        p += f"[{part}]" if isinstance(part, int) else f".{part}"
    return p


def validate_document(doc: dict):
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _json_path(e))
    _check_finite(doc)


def parse_text(text: str, source: str = "<config>") -> dict:
    try:
        return json.loads(text, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, f"{source}:{e.lineno}:{e.colno}") from None


def from_dict(doc: dict, base_dir=None) -> ExperimentConfig:
    validate_document(doc)
    g = doc["grid"]
    grid = Grid(g["dim"], float(g["half_length"]), g["points"])
    kdoc = dict(doc["kernel"])
    if "csv" in kdoc and base_dir is not None and not kdoc["csv"].startswith("/"):
        kdoc["csv"] = str(base_dir / kdoc["csv"])
    try:
        kernel = kernel_from_dict(kdoc, grid.dim)
    except (ValueError, OSError) as e:
        raise ConfigError(str(e), "$.kernel") from None
    if kernel.dim is not None and kernel.dim != grid.dim:
        raise ConfigError(f"kernel defined for n={kernel.dim}, grid has n={grid.dim}", "$.kernel")
    init = doc["initial_data"]
    if "file" in init:
        path = init["file"]
        if base_dir is not None and not path.startswith("/"):
            path = str(base_dir / path)
        u0 = InitialData(file=path)
    else:
        bumps = []
        for i, b in enumerate(init["bumps"]):
            c = tuple(float(x) for x in b.get("center", [0.0] * grid.dim))
            if len(c) != grid.dim:
                raise ConfigError("center length must match grid dim", f"$.initial_data.bumps[{i}].center")
            bumps.append(Bump(float(b["mass"]), float(b["width"]), c))
        u0 = InitialData(bumps)
    t = doc["time"]
    caps = Caps(**doc.get("caps", {}))
    out = doc.get("outputs", {})
    t_end = float(t["t_end"])
    dt_init = float(t.get("dt_init", min(1e-3, t_end) if t_end > 0 else 1e-3))
    sim = SimConfig(
        grid=grid, kernel=kernel, u0=u0, t_end=t_end, dt_init=dt_init,
        dt_min=float(t.get("dt_min", min(1e-9, dt_init))), scheme=t.get("scheme", "etd_rk2"),
        caps=caps, diagnostics_stride=int(t.get("diagnostics_stride", 1)),
        cfl_safety=float(t.get("cfl_safety", 0.4)), stiffness_guard=float(t.get("stiffness_guard", 0.5)),
        lq_exponent=float(out.get("lq_exponent", 2.0)), snapshot_stride=int(out.get("snapshot_stride", 0)),
        record_virial=bool(out.get("record_virial", True)),
    )
    if not (0 < sim.dt_min <= sim.dt_init):
        raise ConfigError("need 0 < dt_min <= dt_init", "$.time")
    if caps.linf_cap is not None and "file" not in init:
        try:
            u = u0.build(grid)
            if not caps.linf_cap > float(abs(u.values).max()):
                raise ConfigError("linf_cap must exceed ||u0||_inf", "$.caps.linf_cap")
        except ValueError as e:
            raise ConfigError(str(e), "$.initial_data") from None
    return ExperimentConfig(doc, doc.get("name", "experiment"), grid, kernel, sim, dict(out),
                            dict(doc.get("picard", {})), doc.get("sweep"))


def load(path) -> ExperimentConfig:
    from pathlib import Path

    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(str(e), str(p)) from None
    return from_dict(parse_text(text, str(p)), base_dir=p.parent)


def with_override(doc: dict, path: str, value) -> dict:
    """Copy of ``doc`` with the dotted ``path`` (list indices allowed) set to ``value``."""
    out = copy.deepcopy(doc)
    parts = path.split(".")
    node = out
    for i, part in enumerate(parts[:-1]):
        key = int(part) if isinstance(node, list) else part
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"sweep path {path!r} does not exist", "$.sweep.path") from None
    last = parts[-1]
    key = int(last) if isinstance(node, list) else last
    if isinstance(node, list):
        if not 0 <= key < len(node):
            raise ConfigError(f"sweep path {path!r} does not exist", "$.sweep.path")
    elif not isinstance(node, dict):
        raise ConfigError(f"sweep path {path!r} does not exist", "$.sweep.path")
    node[key] = value
    out.pop("sweep", None)
    return out
