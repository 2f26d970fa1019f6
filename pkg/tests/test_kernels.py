import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggrekit.grid import Grid
from aggrekit.kernels import (KernelSpec, NotBlowupAdmissible, UnsupportedKernelError, Verdict,
                              blowup_params, classify, critical_mass, decompose, fit_near_origin_exponent,
                              BlowupParams, grad_norm, kernel_from_dict, osgood, profile,
                              radial_derivative, symbol, symbol_on_grid)

EULER = 0.5772156649015329


def k0_series(x, terms=40):
    """K_0 by its ascending series (independent of scipy)."""
    y = x * x / 4
    i0 = sum(y ** k / math.factorial(k) ** 2 for k in range(terms))
    h, tail = 0.0, 0.0
    for k in range(1, terms):
        h += 1.0 / k
        tail += h * y ** k / math.factorial(k) ** 2
    return -(math.log(x / 2) + EULER) * i0 + tail


def k1_series(x, terms=40):
    y = x * x / 4
    i1 = (x / 2) * sum(y ** k / (math.factorial(k) * math.factorial(k + 1)) for k in range(terms))
    psi = lambda m: -EULER + sum(1.0 / j for j in range(1, m))
    s = sum((psi(k + 1) + psi(k + 2)) * y ** k / (math.factorial(k) * math.factorial(k + 1))
            for k in range(terms))
    return 1 / x + math.log(x / 2) * i1 - (x / 4) * s


def test_construction_rules():
    with pytest.raises(ValueError):
        KernelSpec("bessel", alpha=0.0, dim=2)
    with pytest.raises(ValueError):
        KernelSpec("power_law", beta=2.5, dim=2)
    with pytest.raises(ValueError):
        KernelSpec("newtonian")
    with pytest.raises(ValueError):
        KernelSpec("nope")
    with pytest.raises(ValueError):
        kernel_from_dict({"variant": "gaussian", "colour": 1})
    assert kernel_from_dict({"variant": "bessel", "alpha": 2.0}, 2) == KernelSpec("bessel", alpha=2.0, dim=2)
    with pytest.raises(UnsupportedKernelError):
        symbol(KernelSpec("custom_radial", table=((1.0, 2.0), (0.0, 0.0), (1.0, 1.0))), 1.0, 1)


def test_symbol_values():
    assert symbol(KernelSpec("bessel", alpha=1.0, dim=2), 0.0, 2) == pytest.approx(1.0)
    assert symbol(KernelSpec("repulsive_bessel"), 0.0, 2) == pytest.approx(-1.0)
    assert symbol(KernelSpec("newtonian", dim=2), 2.0, 2) == pytest.approx(0.25)
    assert symbol(KernelSpec("newtonian", dim=2), 0.0, 2) == 0.0
    assert symbol(KernelSpec("zero"), 3.0, 1) == 0.0


@pytest.mark.parametrize("spec,n", [
    (KernelSpec("gaussian", amplitude=1.3, width=0.7), 1),
    (KernelSpec("gaussian", amplitude=1.0, width=1.2), 2),
    (KernelSpec("exponential", alpha=2.0), 1),
    (KernelSpec("exponential", alpha=1.0), 2),
    (KernelSpec("bessel", alpha=1.5, dim=2), 2),
    (KernelSpec("bessel", alpha=1.0, dim=1), 1),
])
def test_symbol_matches_profile_transform(spec, n):
    """Check K^ against a Hankel-transform quadrature of the radial profile."""
    from scipy import integrate, special

    k = profile(spec).k
    for xi in (0.3, 1.0, 2.5):
        if n == 1:
            f = lambda r: 2 * float(k(r)) * math.cos(xi * r)
        else:
            f = lambda r: 2 * math.pi * r * float(k(r)) * special.j0(xi * r)
        val = integrate.quad(f, 0, 1, limit=400)[0] + integrate.quad(f, 1, 60, limit=800)[0]
        assert symbol(spec, xi, n) == pytest.approx(val, rel=1e-6)


def test_profile_examples():
    assert radial_derivative(KernelSpec("newtonian", dim=2), 1.0) == pytest.approx(-1 / (2 * math.pi))
    assert radial_derivative(KernelSpec("exponential", alpha=1.0), 2.0) == pytest.approx(-math.exp(-2))
    b = KernelSpec("bessel", alpha=1.0, dim=2)
    r = 1e-4
    assert r * radial_derivative(b, r) == pytest.approx(-1 / (2 * math.pi), abs=1e-3)
    for x in (0.05, 0.5, 1.7):
        assert float(profile(b).k(x)) == pytest.approx(k0_series(x) / (2 * math.pi), rel=1e-10)
        assert float(profile(b).k_prime(x)) == pytest.approx(-k1_series(x) / (2 * math.pi), rel=1e-10)
    with pytest.raises(ValueError):
        radial_derivative(b, 0.0)


def test_newtonian_flux_is_unit():
    # -div grad K = delta: outward flux of -grad K through any circle equals 1
    kp = profile(KernelSpec("newtonian", dim=2)).k_prime
    for r in (0.1, 1.0, 7.0):
        assert -2 * math.pi * r * float(kp(r)) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("spec", [
    KernelSpec("gaussian"), KernelSpec("exponential", alpha=2.0), KernelSpec("bessel", alpha=1.0, dim=2),
    KernelSpec("newtonian", dim=2), KernelSpec("power_law", beta=1.5, dim=2), KernelSpec("repulsive_bessel"),
])
def test_profile_derivative_consistency(spec):
    assert profile(spec).check_derivative()


def test_classification_examples():
    b = classify(KernelSpec("bessel", alpha=1.0, dim=2), 2)
    assert b.verdict is Verdict.STRONGLY_SINGULAR and b.qprime_sup == 2.0
    e = classify(KernelSpec("exponential", alpha=1.0), 1)
    assert e.verdict is Verdict.MILD and e.bounded and math.isinf(e.qprime_sup)
    for n in (1, 2):
        g = classify(KernelSpec("gaussian"), n)
        assert g.verdict is Verdict.MILD and g.exponent == 0.0
    # verdict <-> qprime_sup relation
    for spec, n in [(KernelSpec("newtonian", dim=2), 2), (KernelSpec("power_law", beta=1.5, dim=2), 2),
                    (KernelSpec("gaussian"), 2)]:
        c = classify(spec, n)
        assert (c.verdict is Verdict.MILD) == (c.qprime_sup > n)


def _table(fn, dfn, lo=1e-6, hi=10.0, m=400):
    r = np.geomspace(lo, hi, m)
    return (tuple(r), tuple(fn(r)), tuple(dfn(r)))


@settings(max_examples=15, deadline=None)
@given(beta=st.floats(1.05, 1.95), lam=st.floats(0.2, 5.0))
def test_power_law_fit_and_scale_covariance(beta, lam):
    n = 2
    a, res = fit_near_origin_exponent(KernelSpec("power_law", beta=beta, dim=n))
    assert a == pytest.approx(n - beta + 1, abs=1e-3)
    # K(lam x) as a custom profile keeps the verdict
    tab = _table(lambda r: (lam * r) ** (beta - n), lambda r: lam * (beta - n) * (lam * r) ** (beta - n - 1),
                 lo=1e-6, hi=10.0)
    c = classify(KernelSpec("custom_radial", table=tab), n)
    assert c.fitted and c.verdict is Verdict.STRONGLY_SINGULAR


def test_custom_profile_indeterminate_and_mild():
    wiggly = _table(lambda r: np.sin(1 / r), lambda r: -np.cos(1 / r) / r ** 2, lo=1e-6)
    assert classify(KernelSpec("custom_radial", table=wiggly), 2).verdict is Verdict.INDETERMINATE
    smooth = _table(lambda r: np.exp(-r ** 2), lambda r: -2 * r * np.exp(-r ** 2))
    assert classify(KernelSpec("custom_radial", table=smooth), 2).verdict is Verdict.MILD


def test_osgood():
    fin, val = osgood(KernelSpec("newtonian", dim=2))
    assert fin and val == pytest.approx(math.pi, rel=1e-8)
    lin = KernelSpec("custom_radial", table=_table(lambda r: r, lambda r: np.ones_like(r), lo=1e-30, hi=2.0))
    fin, val = osgood(lin)
    assert fin and val == pytest.approx(1.0, rel=1e-8)
    fin, val = osgood(KernelSpec("gaussian"))
    assert not fin and math.isinf(val)
    # strong singularity implies finite Osgood integral on the catalog
    for spec in (KernelSpec("newtonian", dim=2), KernelSpec("bessel", alpha=1.0, dim=2),
                 KernelSpec("power_law", beta=1.5, dim=2)):
        assert classify(spec, 2).exponent >= 1 and osgood(spec)[0]


def test_grad_norm():
    assert grad_norm(KernelSpec("gaussian"), math.inf, 1) == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert grad_norm(KernelSpec("zero"), 2.0, 2) == 0.0
    assert math.isinf(grad_norm(KernelSpec("newtonian", dim=2), math.inf, 2))
    # ||K'||_1 on R of exp(-|x|) is 2
    assert grad_norm(KernelSpec("exponential", alpha=1.0), 1.0, 1) == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("delta", [0.25, 1.0, 3.0])
def test_blowup_params_newtonian(delta):
    p = blowup_params(KernelSpec("newtonian", dim=2), delta, 100.0)
    assert p.gamma == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    assert p.c_bar == pytest.approx(1 / (2 * math.pi * delta ** 2), rel=1e-9)


def test_blowup_params_bessel_and_gaussian():
    p = blowup_params(KernelSpec("bessel", alpha=1.0, dim=2), 0.1, 100.0)
    assert p.gamma == pytest.approx(1 / (2 * math.pi), rel=0.05)
    # oracle: s K'(s) from the K_1 series at the right end of (0, delta]
    assert p.gamma == pytest.approx(0.1 * k1_series(0.1) / (2 * math.pi), rel=1e-6)
    with pytest.raises(NotBlowupAdmissible):
        blowup_params(KernelSpec("gaussian"), 1.0, 10.0)


@pytest.mark.parametrize("spec,delta", [(KernelSpec("bessel", alpha=2.0, dim=2), 0.5),
                                       (KernelSpec("power_law", beta=1.5, dim=2), 1.0),
                                       (KernelSpec("newtonian", dim=2), 0.7)])
def test_blowup_params_hold_on_refined_sample(spec, delta):
    p = blowup_params(spec, delta, 50.0)
    kp = profile(spec).k_prime
    s = delta * np.geomspace(1e-9, 1.0, 6400)
    assert np.all(s * kp(s) <= -p.gamma * (1 - 1e-6))
    s = np.geomspace(delta, 50.0, 6400)
    assert np.all(np.abs(s * kp(s)) <= p.c_bar * s ** 2 * (1 + 1e-6))


def test_critical_mass():
    p = blowup_params(KernelSpec("newtonian", dim=2), 1.0, 100.0)
    assert critical_mass(p, 2, 0.0) == pytest.approx(8 * math.pi, rel=1e-12)
    assert critical_mass(p, 2, math.pi) == pytest.approx(16 * math.pi, rel=1e-9)
    assert critical_mass(BlowupParams(1.0, 1.0, 0.0), 1, 0.0) == 2.0
    with pytest.raises(ValueError):
        critical_mass(p, 2, -1.0)


def test_decomposition():
    d = decompose(KernelSpec("repulsive_bessel"))
    # |xi| >= pi/L for any box with L <= 30; below that the two parts cancel in floating point
    xi = np.geomspace(0.1, 1e3, 500)
    assert np.max(np.abs(d.k1_symbol(xi) + d.k2_symbol(xi) + 1 / (xi ** 2 + 1))) <= 1e-12
    assert d.k2_symbol(1.0) == pytest.approx(0.5)
    assert np.all(-xi ** 2 * d.k1_symbol(xi) >= 0)
    assert np.allclose(-xi ** 2 * d.k1_symbol(xi), 1.0)
    assert d.k2_grad_inf_bound == pytest.approx(0.25, rel=1e-8)
    g = Grid(2, 5.0, 64)
    k1, k2 = d.on_grid(g)
    full = symbol_on_grid(KernelSpec("repulsive_bessel"), g).modes
    assert np.max(np.abs(k1.modes + k2.modes - full)) <= 1e-12
    with pytest.raises(UnsupportedKernelError):
        decompose(KernelSpec("gaussian"))
