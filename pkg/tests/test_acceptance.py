"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from aggrekit import cli
from aggrekit import config as cfgmod
from aggrekit import diagnostics as dg
from aggrekit import duhamel as dh
from aggrekit.grid import gaussian_bump
from aggrekit.heat import grad_heat_l1_norm, heat_lq_norm
from aggrekit.kernels import (KernelSpec, Verdict, blowup_params, classify, critical_mass, decompose,
                              symbol_on_grid)

from conftest import COMPLETED_DRIFTS, record_acceptance
from test_heat import gauss, radial_lq

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
_RUNS: dict = {}


def simulate(name: str, tmp_root: Path, tag: str = "a"):
    """Run configs/<name>.json through the CLI once per tag; returns (exit, verdict, series, dir, seconds)."""
    key = (name, tag)
    if key not in _RUNS:
        out = tmp_root / f"{name}_{tag}"
        t0 = time.perf_counter()
        code = cli.main(["simulate", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out), "--no-plot"])
        secs = time.perf_counter() - t0
        verdict = json.loads((out / "verdict.json").read_text())
        lq = cfgmod.load(CONFIGS / f"{name}.json").sim.lq_exponent
        _RUNS[key] = (code, verdict, dg.read_series_csv(out / "series.csv", lq), out, secs)
        if verdict["termination"] == "completed":
            COMPLETED_DRIFTS.append((f"acceptance:{name}", verdict["mass_drift"]))
    return _RUNS[key]


@pytest.fixture(scope="module")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_criterion_01_heat_oracle():
    ec = cfgmod.load(CONFIGS / "heat1d.json")
    t0 = time.perf_counter()
    res = cli.run(ec.sim)
    secs = time.perf_counter() - t0
    exact = gaussian_bump(ec.grid, 1.0, math.sqrt(0.5 ** 2 + 2 * 1.0))
    err = float(np.max(np.abs(res.final.values - exact)))
    ok = res.termination.value == "completed" and res.final.t == 1.0 and err < 1e-8 and secs < 5
    record_acceptance(1, "heat oracle", ok, f"Linf error {err:.2e}, {secs:.2f} s")
    assert ok


def test_criterion_03_heat_norm_formulas():
    worst = 0.0
    for n in (1, 2):
        for t in (0.1, 1.0, 10.0):
            g = gauss(n, t)
            for q in (1.0, 1.5, 2.0, math.inf):
                oracle = g(0.0) if math.isinf(q) else radial_lq(g, q, n, t)
                worst = max(worst, abs(heat_lq_norm(t, q, n) / oracle - 1))
            grad_oracle = radial_lq(lambda r: r / (2 * t) * g(r), 1.0, n, t)
            worst = max(worst, abs(grad_heat_l1_norm(t, n) / grad_oracle - 1))
    ok = worst < 1e-6
    record_acceptance(3, "heat-norm formulas vs quadrature", ok, f"max rel error {worst:.2e}")
    assert ok


def test_criterion_04_virial_identity(runs_dir):
    code, _, s, _, secs = simulate("virial1d", runs_dir)
    t, rate = dg.centered_rate(s)
    v = s.virial_rhs[1:-1]
    sel = (t >= 0.1) & (t <= 1.0)
    rel = float(np.max(np.abs(rate[sel] - v[sel]) / np.abs(v[sel])))
    ok = code == 0 and sel.sum() > 10 and rel < 1e-2 and secs < 30
    record_acceptance(4, "virial identity", ok, f"max rel deviation {rel:.2e} on {sel.sum()} rows, {secs:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_05_virial_inequality(runs_dir):
    details, ok = [], True
    for name in ("newton2d_sub", "newton2d_super"):
        _, v, s, _, secs = simulate(name, runs_dir)
        ec = cfgmod.load(CONFIGS / f"{name}.json")
        p = blowup_params(ec.kernel, 1.0, 100.0)
        chk = dg.virial_bound_check(s, p, 2, slack=0.05)
        good = (chk.passed and abs(p.gamma - 1 / (2 * math.pi)) < 1e-9 and abs(p.c_bar - 1 / (2 * math.pi)) < 1e-9
                and ec.sim.t_end <= 4 and ec.grid.points == 128 and secs < 300)
        ok &= good
        details.append(f"{name}: max violation {chk.max_violation:+.3f} over {chk.checked} rows, {secs:.1f} s")
    record_acceptance(5, "virial inequality, sub- and supercritical", ok, "; ".join(details))
    assert ok


@pytest.mark.slow
def test_criterion_06_dichotomy(runs_dir):
    c_sub, v_sub, s_sub, _, _ = simulate("newton2d_sub", runs_dir)
    c_sup, v_sup, _, _, _ = simulate("newton2d_super", runs_dir)
    late = s_sub.t >= 0.5
    nonincr = bool(np.all(np.diff(s_sub.linf[late]) <= 0))
    p = blowup_params(KernelSpec("newtonian", dim=2), 1.0, 100.0)
    m_crit = critical_mass(p, 2, 0.0)
    m_sub, m_sup = v_sub["mass"], v_sup["mass"]
    bracket = m_sub < m_crit < m_sup and m_crit / m_sub <= 2 + 1e-12 and m_sup / m_crit <= 2 + 1e-12
    finite_detect = v_sup["t_detect"] is not None and math.isfinite(v_sup["t_detect"])
    ok = c_sub == 0 and nonincr and c_sup == 10 and finite_detect and bracket
    record_acceptance(6, "sub/supercritical dichotomy", ok,
                      f"M={m_sub / (8 * math.pi):.1f}x8pi completed, linf nonincreasing after 0.5: {nonincr}; "
                      f"M={m_sup / (8 * math.pi):.1f}x8pi {v_sup['trigger']} at t={v_sup['t_detect']:.4g}; "
                      f"critical mass {m_crit:.6f}")
    assert ok


@pytest.mark.slow
def test_criterion_07_blowup_time_bound(runs_dir):
    p = blowup_params(KernelSpec("newtonian", dim=2), 1.0, 100.0)
    bound = dg.blowup_time_bound(32 * math.pi, math.pi, p, 2)
    code, v, _, _, _ = simulate("newton2d_i0pi", runs_dir)
    setup = abs(v["mass"] / (32 * math.pi) - 1) < 1e-12 and abs(v["moment0"] / math.pi - 1) < 1e-8
    ok = (abs(bound - 1 / 256) <= 1e-12 / 256 and code == 10 and math.isfinite(v["t_detect"]) and setup
          and abs(v["blowup_time_bound"] - 1 / 256) < 1e-8)
    record_acceptance(7, "blow-up time bound 1/256", ok,
                      f"bound {bound!r}, I0/pi = {v['moment0'] / math.pi:.10f}, t_detect {v['t_detect']:.4g}")
    assert ok


def test_criterion_08_picard_contraction():
    ec = cfgmod.load(CONFIGS / "picard1d.json")
    code, rep = cli.picard_report(ec)
    ratios = rep["contraction_ratios"]
    ok = (code == 0 and ec.kernel.variant == "gaussian" and abs(ec.total_mass() - 1) < 1e-15
          and all(r < 1 for r in ratios) and rep["solver_agreement_linf"] < 1e-4 and rep["residual"] < 1e-6
          and math.isfinite(rep["local_existence_time"]["T"]) and rep["horizon"] == rep["local_existence_time"]["T"])
    record_acceptance(8, "Picard contraction at the local existence time", ok,
                      f"T={rep['horizon']:.6g}, max ratio {max(ratios):.2e}, solver gap "
                      f"{rep['solver_agreement_linf']:.2e}, residual {rep['residual']:.2e}")
    assert ok


def test_criterion_09_q_star_table():
    cases = {(3, 1.5): 1.5, (2, 2.0): 1.0, (4, 2.0): 4 / 3}
    errs = {k: abs(dh.q_star(*k) - v) for k, v in cases.items()}
    ok = all(e <= 1e-12 for e in errs.values())
    record_acceptance(9, "q* table", ok, ", ".join(f"{k}->{dh.q_star(*k):.15g}" for k in cases))
    assert ok


def test_criterion_10_gronwall_repulsive_bessel(runs_dir):
    code, v, s, _, _ = simulate("repulsive2d", runs_dir)
    ec = cfgmod.load(CONFIGS / "repulsive2d.json")
    d = decompose(ec.kernel)
    g = dg.gronwall_check(s, 2.0, d.k2_grad_inf_bound, v["mass"], dg.gronwall_rate_constant(2.0, 1.0), rtol=0.0)
    k1, k2 = d.on_grid(ec.grid)
    recon = float(np.max(np.abs(k1.modes + k2.modes - symbol_on_grid(ec.kernel, ec.grid).modes)))
    lap_k1 = -ec.grid.xi_sq * k1.modes
    ok = (code == 0 and s.lq_exponent == 2.0 and g.passed and v["gronwall_check"]["passed"] and recon < 1e-12
          and bool(np.all(lap_k1 >= 0)))
    record_acceptance(10, "Gronwall bound for repulsive_bessel", ok,
                      f"min margin {g.min_margin:.3f} over {len(s)} rows, reconstruction {recon:.1e}, "
                      f"min -|xi|^2 K1 {lap_k1.min():.3g}")
    assert ok


def test_criterion_11_classification_table():
    cases = [
        (KernelSpec("gaussian"), 2, Verdict.MILD, None),
        (KernelSpec("exponential", alpha=1.0), 1, Verdict.MILD, None),
        (KernelSpec("bessel", alpha=1.0, dim=2), 2, Verdict.STRONGLY_SINGULAR, 2.0),
        (KernelSpec("newtonian", dim=2), 2, Verdict.STRONGLY_SINGULAR, 2.0),
        (KernelSpec("power_law", beta=1.5, dim=2), 2, Verdict.STRONGLY_SINGULAR, None),
    ]
    got = []
    ok = True
    for k, n, verdict, qsup in cases:
        c = classify(k, n)
        ok &= c.verdict is verdict and (qsup is None or c.qprime_sup == qsup)
        got.append(f"{k.variant}:{c.verdict.value}" + (f"/{c.qprime_sup:g}" if qsup else ""))
    record_acceptance(11, "classification table", ok, ", ".join(got))
    assert ok


@pytest.mark.slow
def test_criterion_12_determinism(runs_dir):
    same = {}
    for name in ("heat1d", "newton2d_sub", "newton2d_super"):
        first = simulate(name, runs_dir)[3] / "series.csv"
        again = simulate(name, runs_dir, tag="b")[3] / "series.csv"
        same[name] = first.read_bytes() == again.read_bytes()
    ok = all(same.values())
    record_acceptance(12, "byte-identical series.csv on repeat", ok, ", ".join(f"{k}: {v}" for k, v in same.items()))
    assert ok


def test_criterion_02_mass_conservation():
    drifts = [d for _, d in COMPLETED_DRIFTS]
    worst = max(drifts) if drifts else math.nan
    ok = bool(drifts) and worst < 1e-10
    record_acceptance(2, "mass conservation over all Completed runs", ok,
                      f"{len(drifts)} runs, worst drift {worst:.2e}")
    assert ok
