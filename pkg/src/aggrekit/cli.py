"""Command-line entry point: ``aggrekit {analyze|simulate|sweep|picard}``.

Exit codes
    0   completed (or report produced)
    2   invalid configuration, kernel or arguments
    3   indeterminate kernel classification (analyze)
    10  blow-up detected
    11  Picard iteration not contractive
    20  numerical failure
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics as dg
from . import duhamel as dh
from .grid import lp_norm, mass_and_moment
from .kernels import (NotBlowupAdmissible, UnsupportedKernelError, Verdict, blowup_params, classify,
                      critical_mass, decompose, grad_norm, kernel_from_dict, osgood)
from .snapshots import write_snapshot
from .solver import Termination, run
from .svgplot import write_series_svg

log = logging.getLogger("aggrekit")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INDETERMINATE = 3
EXIT_BLOWUP = 10
EXIT_NONCONTRACTIVE = 11
EXIT_FAILURE = 20

EXIT_FOR_TERMINATION = {
    Termination.COMPLETED: EXIT_OK,
    Termination.BLOWUP_DETECTED: EXIT_BLOWUP,
    Termination.NUMERICAL_FAILURE: EXIT_FAILURE,
}


# ---------------------------------------------------------------- JSON helpers


def clean(obj):
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- analysis pieces


def classification_dict(k, n) -> dict:
    c = classify(k, n)
    return {"verdict": c.verdict.value, "exponent": c.exponent, "qprime_sup": c.qprime_sup,
            "bounded": c.bounded, "fitted": c.fitted, "fit_residual": c.fit_residual, "note": c.note}


def _blowup(k, delta, s_max):
    try:
        return blowup_params(k, delta, s_max)
    except NotBlowupAdmissible:
        return None


def local_existence(k, n, u0) -> dict:
    """Local existence horizon in the regime picked by the kernel's class."""
    c = classify(k, n)
    m = float(np.sum(np.abs(u0.values)) * u0.grid.cell_volume)
    if c.verdict is Verdict.MILD:
        q = 1.0
        regime, qp = "mild", math.inf
    elif c.verdict is Verdict.STRONGLY_SINGULAR and n >= 2:
        qp = 0.5 * (1.0 + min(c.qprime_sup, float(n)))
        q = qp / (qp - 1)
        regime = "strong"
    else:
        return {"applicable": False, "reason": f"no local theory for verdict {c.verdict.value} in n={n}"}
    gk = grad_norm(k, qp, n)
    lq = m if q == 1 else lp_norm(u0, q)
    est = dh.local_existence_time(regime, m, lq, gk, q, n)
    return {"applicable": True, "regime": regime, "q": q, "qprime": qp, "T": est.T,
            "contraction_bound": est.contraction_bound, "constants": est.constants_ledger,
            "constants_note": "traced from the proof; not optimal"}


# ---------------------------------------------------------------- analyze


def _add_kernel_args(p):
    p.add_argument("--kernel", required=True, help="kernel variant")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--alpha", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--width", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--coeff", type=float)
    p.add_argument("--sign", type=int, choices=(1, -1))
    p.add_argument("--csv", help="radial profile table r,k,k' for custom_radial")


def cmd_analyze(args) -> int:
    spec = {"variant": args.kernel}
    for key in ("alpha", "amplitude", "width", "beta", "coeff", "sign", "csv"):
        v = getattr(args, key)
        if v is not None:
            spec[key] = v
    n = args.dim
    try:
        if n not in (1, 2, 3, 4):
            raise ValueError("dim must be 1..4")
        k = kernel_from_dict(spec, n)
        if k.dim is not None and k.dim != n:
            raise ValueError(f"{k.variant} kernel is defined for n={k.dim}")
        cls = classification_dict(k, n)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    fin, val = osgood(k) if k.variant != "zero" else (False, math.inf)
    bp, cm = [], []
    for delta in args.delta:
        p = _blowup(k, delta, args.s_max)
        if p is None:
            continue
        bp.append({"delta": delta, "gamma": p.gamma, "c_bar": p.c_bar})
        for i0 in args.i0:
            cm.append({"delta": delta, "i0": i0, "critical_mass": critical_mass(p, n, i0)})
    qtab = None
    if n >= 2:
        qtab = [{"qprime": qp, "q_star": dh.q_star(n, qp)} for qp in np.linspace(1.0, n, 5)[1:]]
    out = {
        "kernel": k.describe(), "dim": n, "class": cls["verdict"], "classification": cls,
        "qprime_sup": cls["qprime_sup"], "osgood": {"finite": fin, "value": val},
        "blowup_params": bp if bp else "not admissible",
        "critical_mass": cm if cm else "not admissible", "q_star": qtab,
    }
    sys.stdout.write(dumps(out))
    return EXIT_INDETERMINATE if cls["verdict"] == Verdict.INDETERMINATE.value else EXIT_OK


# ---------------------------------------------------------------- simulate


def _check_dict(c):
    return None if c is None else {k: getattr(c, k) for k in c.__dataclass_fields__}


def build_verdict(ec: cfgmod.ExperimentConfig, res) -> dict:
    n = ec.grid.dim
    s = res.series
    u0 = ec.sim.initial_field()
    mass0, i0 = mass_and_moment(u0)
    v = {"name": ec.name, "termination": res.termination.value,
         "exit_code": EXIT_FOR_TERMINATION[res.termination], "steps": res.steps,
         "t_final": float(s.t[-1]), "rows": len(s), "message": res.message,
         "boundary_leakage": res.boundary_leakage, "max_negativity": res.max_negativity,
         "max_linf": float(np.max(s.linf)), "min_moment": float(np.min(s.moment)),
         "mass": mass0, "moment0": i0}
    rep = res.report
    v["trigger"] = rep.trigger.value if rep else None
    v["t_detect"] = rep.t_detect if rep else None
    v["linf_at_detect"] = rep.linf_at_detect if rep else None
    v["moment_at_detect"] = rep.moment_at_detect if rep else None
    v["mass_drift"] = dg.mass_drift(s) if mass0 != 0 else 0.0
    try:
        v["classification"] = classification_dict(ec.kernel, n)
    except ValueError as e:
        v["classification"] = {"verdict": "indeterminate", "note": str(e)}
    p = _blowup(ec.kernel, ec.delta, ec.s_max) if ec.kernel.variant != "zero" else None
    if p is not None:
        v["blowup_params"] = {"delta": p.delta, "gamma": p.gamma, "c_bar": p.c_bar}
        v["critical_mass"] = critical_mass(p, n, i0)
        v["blowup_time_bound"] = dg.blowup_time_bound(mass0, i0, p, n) if mass0 > 0 and i0 > 0 else None
        try:
            v["virial_bound_check"] = _check_dict(dg.virial_bound_check(s, p, n))
        except ValueError as e:
            v["virial_bound_check"] = {"skipped": str(e)}
    else:
        v["blowup_params"] = None
        v["critical_mass"] = None
        v["blowup_time_bound"] = None
        v["virial_bound_check"] = None
    v["gronwall_check"] = None
    if ec.outputs.get("gronwall", True):
        try:
            dec = decompose(ec.kernel)
        except UnsupportedKernelError:
            dec = None
        if dec is not None:
            q = ec.sim.lq_exponent
            c_eps = dg.gronwall_rate_constant(q, ec.outputs.get("gronwall_eps", 1.0))
            g = dg.gronwall_check(s, q, dec.k2_grad_inf_bound, mass0, c_eps)
            v["gronwall_check"] = dict(_check_dict(g), q=q, k2_grad_inf=dec.k2_grad_inf_bound, c_eps=c_eps)
    try:
        v["local_existence_time"] = local_existence(ec.kernel, n, u0)
    except (ValueError, UnsupportedKernelError) as e:
        v["local_existence_time"] = {"applicable": False, "reason": str(e)}
    return v


def simulate_to_dir(ec: cfgmod.ExperimentConfig, outdir: Path, plot: bool = True) -> tuple[int, dict]:
    res = run(ec.sim)
    outdir.mkdir(parents=True, exist_ok=True)
    dg.write_series_csv(res.series, outdir / "series.csv")
    if res.snapshots:
        sd = outdir / "snapshots"
        sd.mkdir(exist_ok=True)
        for i, (_, f) in enumerate(res.snapshots):
            write_snapshot(f, sd / f"snap_{i:05d}.aggf")
    verdict = build_verdict(ec, res)
    (outdir / "verdict.json").write_text(dumps(verdict))
    if plot and ec.plot:
        write_series_svg(res.series, outdir / "plot.svg")
    return verdict["exit_code"], verdict


def _load(path):
    try:
        return cfgmod.load(path), None
    except cfgmod.ConfigError as e:
        return None, str(e)
    except ValueError as e:  # grid or kernel constructor
        return None, str(e)


def cmd_simulate(args) -> int:
    ec, err = _load(args.config)
    if ec is None:
        print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) if args.out else Path("runs") / ec.name
    try:
        code, verdict = simulate_to_dir(ec, out, plot=not args.no_plot)
    except ValueError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    log.info("%s: %s (t=%g) -> %s", ec.name, verdict["termination"], verdict["t_final"], out)
    return code


# ---------------------------------------------------------------- sweep


def parallelism() -> int:
    env = os.environ.get("AGGREKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring AGGREKIT_THREADS=%r", env)
    try:
        import psutil

        return max(1, psutil.cpu_count(logical=False) or 1)
    except Exception:  # pragma: no cover
        return max(1, os.cpu_count() or 1)


def _sweep_worker(doc: dict, base_dir: str, outdir: str, plot: bool) -> dict:
    try:
        ec = cfgmod.from_dict(doc, base_dir=Path(base_dir))
        code, v = simulate_to_dir(ec, Path(outdir), plot=plot)
        return {"termination": v["termination"], "t_detect": v["t_detect"],
                "min_moment": v["min_moment"], "max_linf": v["max_linf"], "exit_code": code}
    except Exception as e:  # recorded per row
        return {"termination": f"error: {type(e).__name__}: {e}", "t_detect": None,
                "min_moment": None, "max_linf": None, "exit_code": EXIT_FAILURE}


def bracket(values, rows) -> dict:
    done = [v for v, r in zip(values, rows) if r["termination"] == Termination.COMPLETED.value]
    blow = [v for v, r in zip(values, rows) if r["termination"] == Termination.BLOWUP_DETECTED.value]
    return {"largest_completed": max(done) if done else None,
            "smallest_blowup": min(blow) if blow else None,
            "consistent": bool(done and blow and max(done) < min(blow))}


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".16e")
    return str(x).replace(",", ";")


def cmd_sweep(args) -> int:
    ec, err = _load(args.config)
    if ec is None:
        print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_INVALID
    sw = ec.sweep
    if not sw or not sw.get("values"):
        print("invalid config: sweep section needs a nonempty values list", file=sys.stderr)
        return EXIT_INVALID
    values = [float(x) for x in sw["values"]]
    base = Path(args.config).parent
    docs = []
    try:
        for val in values:
            d = cfgmod.with_override(ec.raw, sw["path"], val)
            cfgmod.from_dict(d, base_dir=base)
            docs.append(d)
    except (cfgmod.ConfigError, ValueError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) if args.out else Path("runs") / f"{ec.name}_sweep"
    out.mkdir(parents=True, exist_ok=True)
    dirs = [str(out / f"run_{i:03d}") for i in range(len(values))]
    jobs = args.jobs or parallelism()
    plot = not args.no_plot
    if jobs == 1 or len(values) == 1:
        rows = [_sweep_worker(d, str(base), o, plot) for d, o in zip(docs, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(values))) as ex:
            rows = list(ex.map(_sweep_worker, docs, [str(base)] * len(docs), dirs, [plot] * len(docs)))
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write("value,termination,t_detect,min_moment,max_linf\n")
        for val, r in zip(values, rows):
            fh.write(",".join(_csv_cell(x) for x in (val, r["termination"], r["t_detect"],
                                                     r["min_moment"], r["max_linf"])) + "\n")
    summary = {"path": sw["path"], "values": values, "rows": rows, "bracket": bracket(values, rows)}
    (out / "summary.json").write_text(dumps(summary))
    sys.stdout.write(dumps(summary["bracket"]))
    return EXIT_OK


# ---------------------------------------------------------------- picard


def picard_report(ec: cfgmod.ExperimentConfig) -> tuple[int, dict]:
    n = ec.grid.dim
    u0 = ec.sim.initial_field()
    pc = ec.picard
    est = local_existence(ec.kernel, n, u0)
    if not est.get("applicable"):
        return EXIT_INVALID, {"error": est["reason"]}
    regime = est["regime"]
    q = float(pc.get("q", est["q"]))
    T_est = est["T"]
    T = float(pc["horizon"]) if "horizon" in pc else T_est
    if math.isinf(T):
        T = ec.sim.t_end if ec.sim.t_end > 0 else 1.0
    if not T > 0:
        return EXIT_INVALID, {"error": "local existence time is 0 (infinite kernel norm)",
                              "local_existence_time": est}
    tol = float(pc.get("tol", 1e-12))
    st = dh.picard_solve(u0, ec.kernel, T, tol=tol, max_iter=int(pc.get("max_iter", 50)), q=q,
                         panels=int(pc.get("panels", 64)), regime=regime, raise_on_failure=False)
    rep = {"name": ec.name, "local_existence_time": est, "horizon": T, "regime": regime, "q": q,
           "iterate_index": st.iterate_index, "contraction_ratios": st.contraction_ratios,
           "distances": st.distances, "weighted_norm": st.weighted_norm, "residual": st.residual,
           "converged": st.converged, "tol": tol,
           "mass_final": float(np.sum(st.final().values) * ec.grid.cell_volume)}
    contraction_bound = est["contraction_bound"] * (T / T_est) ** est["constants"]["time_exponent"] \
        if math.isfinite(T_est) and T_est > 0 else 0.0
    rep["theoretical_contraction_bound"] = contraction_bound
    sim = ec.sim
    dt = float(pc.get("solver_dt", T / 200))
    sim_cfg = replace(sim, t_end=T, dt_init=dt, dt_min=min(sim.dt_min, dt), record_virial=False)
    res = run(sim_cfg)
    rep["solver_termination"] = res.termination.value
    rep["solver_agreement_linf"] = float(np.max(np.abs(res.final.values - st.final().values)))
    if not st.converged:
        return EXIT_NONCONTRACTIVE, rep
    return EXIT_OK, rep


def cmd_picard(args) -> int:
    ec, err = _load(args.config)
    if ec is None:
        print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        code, rep = picard_report(ec)
    except ValueError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    text = dumps(rep)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    if code == EXIT_NONCONTRACTIVE:
        print(f"not contractive: ratios {rep['contraction_ratios']}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aggrekit", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="classify a kernel and print its constants")
    _add_kernel_args(a)
    a.add_argument("--delta", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    a.add_argument("--i0", type=float, nargs="+", default=[0.0, 1.0])
    a.add_argument("--s-max", type=float, default=100.0)
    a.set_defaults(fn=cmd_analyze)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(fn=cmd_simulate)

    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--out")
    w.add_argument("--jobs", type=int)
    w.add_argument("--no-plot", action="store_true")
    w.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("picard", help="Picard iteration of the mild formulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_picard)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
