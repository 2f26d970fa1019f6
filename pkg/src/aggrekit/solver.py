"""Pseudospectral time integration of u_t = Lap u - div(u grad(K * u)).

The state is advanced in Fourier space.  Diffusion is integrated exactly
by the exponential factor exp(-|xi|^2 dt); the transport term is explicit
and dealiased by the 2/3 rule, so the xi = 0 mode (the mass) is untouched.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .grid import Field, Grid, gaussian_bump, inverse, lp_norm, mass_and_moment
from .kernels import KernelSpec, profile, symbol_on_grid

log = logging.getLogger(__name__)

SCHEMES = ("etd_rk2", "strang")
PHI_SERIES_RADIUS = 1e-2


class NumericalFailure(RuntimeError):
    pass


def phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """phi_1, phi_2, phi_3 of z with the Taylor series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < PHI_SERIES_RADIUS
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        em1 = np.expm1(zs)
        p1 = em1 / zs
        p2 = (em1 - zs) / zs ** 2
        p3 = (em1 - zs - 0.5 * zs ** 2) / zs ** 3
    zz = np.where(small, z, 0.0)
    s1 = 1 + zz * (1 / 2 + zz * (1 / 6 + zz * (1 / 24 + zz / 120)))
    s2 = 1 / 2 + zz * (1 / 6 + zz * (1 / 24 + zz * (1 / 120 + zz / 720)))
    s3 = 1 / 6 + zz * (1 / 24 + zz * (1 / 120 + zz * (1 / 720 + zz / 5040)))
    return np.where(small, s1, p1), np.where(small, s2, p2), np.where(small, s3, p3)


class Transport:
    """Dealiased nonlinear operator N(u) = -div(u grad(K * u)) in Fourier space."""

    def __init__(self, grid: Grid, kernel: KernelSpec):
        self.grid = grid
        self.kernel = kernel
        self.khat = symbol_on_grid(kernel, grid).modes
        self.mask = grid.dealias_mask
        self.dw = grid.derivative_wavevectors
        self.trivial = not np.any(self.khat)

    def velocity(self, uh: np.ndarray) -> list[np.ndarray]:
        g = self.grid
        return [inverse(g, 1j * w * self.khat * uh) for w in self.dw]

    def __call__(self, uh: np.ndarray) -> np.ndarray:
        if self.trivial:
            return np.zeros_like(uh)
        g = self.grid
        ud_h = self.mask * uh
        ud = inverse(g, ud_h)
        out = np.zeros_like(uh)
        for w, v in zip(self.dw, self.velocity(ud_h)):
            out -= 1j * w * np.fft.rfftn(ud * v)
        return self.mask * out

    def rates(self, uh: np.ndarray) -> tuple[float, float]:
        """(||grad K * u||_inf, ||Lap K * u||_inf) for step-size control."""
        if self.trivial:
            return 0.0, 0.0
        vmax = 0.0
        for v in self.velocity(uh):
            vmax = max(vmax, float(np.max(np.abs(v))))
        div = inverse(self.grid, -self.grid.xi_sq * self.khat * uh)
        return vmax, float(np.max(np.abs(div)))


class Integrator:
    def __init__(self, grid: Grid, kernel: KernelSpec, scheme: str = "etd_rk2"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.grid = grid
        self.scheme = scheme
        self.N = Transport(grid, kernel)
        self._cache_dt = None

    def _coeffs(self, dt: float):
        if self._cache_dt != dt:
            z = -self.grid.xi_sq * dt
            self._E = np.exp(z)
            self._Eh = np.exp(0.5 * z)
            p1, p2, _ = phi_functions(z)
            self._p1, self._p2 = p1, p2
            self._cache_dt = dt
        return self._E, self._Eh, self._p1, self._p2

    def advance(self, uh: np.ndarray, dt: float) -> np.ndarray:
        E, Eh, p1, p2 = self._coeffs(dt)
        if self.scheme == "etd_rk2":
            n0 = self.N(uh)
            a = E * uh + dt * p1 * n0
            return a + dt * p2 * (self.N(a) - n0)
        u = Eh * uh
        k1 = self.N(u)
        k2 = self.N(u + dt * k1)
        u = u + 0.5 * dt * (k1 + k2)
        return Eh * u


def step(u: Field, dt: float, kernel: KernelSpec, scheme: str = "etd_rk2") -> Field:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    with np.errstate(over="ignore", invalid="ignore"):
        uh = Integrator(u.grid, kernel, scheme).advance(np.fft.rfftn(u.values), dt)
        out = inverse(u.grid, uh)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite values after step")
    return Field(u.grid, out, u.t + dt, u.density)


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class Bump:
    mass: float
    width: float
    center: tuple = ()


@dataclass
class InitialData:
    bumps: list = field(default_factory=list)
    file: str | None = None

    def build(self, grid: Grid) -> Field:
        if self.file is not None:
            from .snapshots import read_snapshot

            f = read_snapshot(self.file)
            if f.grid != grid:
                raise ValueError("snapshot grid does not match the configured grid")
            return Field(grid, f.values, 0.0)
        vals = np.zeros(grid.shape)
        for b in self.bumps:
            vals = vals + gaussian_bump(grid, b.mass, b.width, b.center or None)
        return Field(grid, vals, 0.0)


@dataclass(frozen=True)
class Caps:
    linf_cap: float | None = None  # absolute; None -> linf_factor * ||u0||_inf
    linf_factor: float = 1e6
    negativity_cap: float = 1e-3
    moment_floor: float = 1e-2

    def resolved_linf(self, u0_linf: float) -> float:
        if self.linf_cap is not None:
            return self.linf_cap
        return self.linf_factor * u0_linf if u0_linf > 0 else math.inf


@dataclass
class SimConfig:
    grid: Grid
    kernel: KernelSpec
    u0: object  # Field or InitialData
    t_end: float
    dt_init: float = 1e-3
    dt_min: float = 1e-9
    scheme: str = "etd_rk2"
    caps: Caps = field(default_factory=Caps)
    diagnostics_stride: int = 1
    cfl_safety: float = 0.4
    stiffness_guard: float = 0.5
    lq_exponent: float = 2.0
    snapshot_stride: int = 0
    record_virial: bool = True

    def initial_field(self) -> Field:
        u0 = self.u0.build(self.grid) if isinstance(self.u0, InitialData) else self.u0
        if u0.grid != self.grid:
            raise ValueError("initial field grid does not match config grid")
        return u0

    def validate(self, u0: Field):
        if not (0 < self.dt_min <= self.dt_init):
            raise ValueError("need 0 < dt_min <= dt_init")
        if not self.t_end >= 0:
            raise ValueError("t_end must be >= 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.diagnostics_stride < 1:
            raise ValueError("diagnostics_stride must be >= 1")
        if not self.kernel.has_symbol:
            raise ValueError(f"{self.kernel.variant} kernel has no Fourier symbol; cannot simulate")
        linf0 = lp_norm(u0, math.inf)
        cap = self.caps.resolved_linf(linf0)
        if not cap > linf0:
            raise ValueError("linf_cap must exceed ||u0||_inf")


# ---------------------------------------------------------------- results


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    BLOWUP_DETECTED = "blowup_detected"
    NUMERICAL_FAILURE = "numerical_failure"


class Trigger(str, enum.Enum):
    LINF_CAP = "linf_cap"
    DT_COLLAPSE = "dt_collapse"
    MOMENT_FLOOR = "moment_floor"
    NEGATIVITY_CAP = "negativity_cap"


@dataclass(frozen=True)
class BlowupReport:
    trigger: Trigger
    t_detect: float
    linf_at_detect: float
    moment_at_detect: float


@dataclass
class RunResult:
    termination: Termination
    series: diagnostics.DiagnosticsSeries
    snapshots: list
    final: Field
    report: BlowupReport | None = None
    steps: int = 0
    boundary_leakage: float = 0.0
    max_negativity: float = 0.0
    message: str = ""


def detect_blowup(u: Field, caps: Caps, linf_cap: float, initial_moment: float,
                  dt: float | None = None, dt_min: float | None = None) -> BlowupReport | None:
    """First matching trigger among the detection caps, or None."""
    vals = u.values
    linf = float(np.max(np.abs(vals)))
    _, moment = mass_and_moment(u)
    rep = lambda trig: BlowupReport(trig, u.t, linf, moment)
    if linf > linf_cap:
        return rep(Trigger.LINF_CAP)
    if float(vals.min()) < -caps.negativity_cap * linf:
        return rep(Trigger.NEGATIVITY_CAP)
    if initial_moment > 0 and moment < caps.moment_floor * initial_moment:
        return rep(Trigger.MOMENT_FLOOR)
    if dt is not None and dt_min is not None and dt < dt_min:
        return rep(Trigger.DT_COLLAPSE)
    return None


def _boundary_ratio(vals: np.ndarray, linf: float) -> float:
    if linf == 0:
        return 0.0
    edge = 0.0
    for ax in range(vals.ndim):
        edge = max(edge, float(np.max(np.abs(np.take(vals, 0, axis=ax)))),
                   float(np.max(np.abs(np.take(vals, -1, axis=ax)))))
    return edge / linf


def run(cfg: SimConfig) -> RunResult:
    grid = cfg.grid
    u0 = cfg.initial_field()
    cfg.validate(u0)
    integ = Integrator(grid, cfg.kernel, cfg.scheme)
    virial_kernel = cfg.kernel if (cfg.record_virial and cfg.kernel.variant != "custom_radial") else None
    if virial_kernel is not None:
        try:
            profile(virial_kernel)
        except Exception:  # pragma: no cover - every symbol kernel has a profile
            virial_kernel = None

    series = diagnostics.DiagnosticsSeries(lq_exponent=cfg.lq_exponent)
    linf0 = lp_norm(u0, math.inf)
    linf_cap = cfg.caps.resolved_linf(linf0)
    _, moment0 = mass_and_moment(u0)
    snapshots = []

    def record(f: Field):
        series.append_field(f, virial_kernel)
        if cfg.snapshot_stride and (len(series) - 1) % cfg.snapshot_stride == 0:
            snapshots.append((f.t, f.copy()))

    u = Field(grid, u0.values.copy(), 0.0)
    record(u)
    uh = np.fft.rfftn(u.values)
    t, steps = 0.0, 0
    leak = _boundary_ratio(u.values, linf0)
    max_neg = 0.0
    warned = False
    h = grid.spacing
    termination, report, message = Termination.COMPLETED, None, ""

    while t < cfg.t_end:
        vmax, divmax = integ.N.rates(uh)
        dt_adapt = cfg.dt_init
        if vmax > 0:
            dt_adapt = min(dt_adapt, cfg.cfl_safety * h / vmax)
        if divmax > 0:
            dt_adapt = min(dt_adapt, cfg.stiffness_guard / divmax)
        if dt_adapt < cfg.dt_min:
            report = detect_blowup(u, cfg.caps, linf_cap, moment0, dt_adapt, cfg.dt_min)
            termination = Termination.BLOWUP_DETECTED
            break
        dt = min(dt_adapt, cfg.t_end - t)
        last = dt >= cfg.t_end - t or (cfg.t_end - t - dt) <= 1e-12 * cfg.t_end
        if last:
            dt = cfg.t_end - t
        with np.errstate(over="ignore", invalid="ignore"):
            uh = integ.advance(uh, dt)
            vals = inverse(grid, uh)
        steps += 1
        t = cfg.t_end if last else t + dt
        if not np.all(np.isfinite(vals)):
            termination, message = Termination.NUMERICAL_FAILURE, f"non-finite state at t={t:.6g}"
            break
        u = Field(grid, vals, t)
        linf = float(np.max(np.abs(vals)))
        neg = max(0.0, -float(vals.min())) / linf if linf > 0 else 0.0
        max_neg = max(max_neg, neg)
        if neg > 1e-8 and not warned:
            log.warning("density undershoot %.3g * ||u||_inf at t=%.6g", neg, t)
            warned = True
        report = detect_blowup(u, cfg.caps, linf_cap, moment0)
        if report is not None or last or steps % cfg.diagnostics_stride == 0:
            record(u)
            leak = max(leak, _boundary_ratio(vals, linf))
        if report is not None:
            termination = Termination.BLOWUP_DETECTED
            break

    if series.t[-1] != u.t:
        record(u)
    if cfg.snapshot_stride and (not snapshots or snapshots[-1][0] != u.t):
        snapshots.append((u.t, u.copy()))
    return RunResult(termination, series, snapshots, u, report, steps, leak, max_neg, message)
