"""Interaction kernel catalog and the analysis built on it.

Kernels are radial, K(x) = k(|x|).  The solver only ever sees the Fourier
symbol; radial profiles are used by the classification, the Osgood
quantity, the blow-up constants and the virial diagnostics.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .grid import FourierField, Grid

VARIANTS = (
    "zero",
    "gaussian",
    "exponential",
    "bessel",
    "newtonian",
    "power_law",
    "repulsive_bessel",
    "custom_radial",
)


class UnsupportedKernelError(ValueError):
    pass


class NotBlowupAdmissible(ValueError):
    """The kernel fails the near-origin hypothesis sup_{0<s<=delta} s K'(s) <= -gamma < 0."""


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    amplitude: float = 1.0  # gaussian A
    width: float = 1.0  # gaussian sigma
    alpha: float = 1.0  # exponential / bessel
    beta: float = 1.5  # power_law
    coeff: float = 1.0  # power_law c
    dim: int | None = None  # bessel / newtonian / power_law / repulsive_bessel
    sign: int = 1  # +1 as given, -1 flips attraction <-> repulsion
    table: tuple | None = field(default=None, repr=False)  # custom_radial (r, k, k')

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise ValueError(f"unknown kernel variant {v!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if v in ("exponential", "bessel") and not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if v == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be > 0")
        if v in ("bessel", "newtonian", "power_law") and (self.dim is None or self.dim < 1):
            raise ValueError(f"{v} kernel needs dim >= 1")
        if v == "power_law" and not (1.0 < self.beta < self.dim):
            raise ValueError("power_law needs 1 < beta < n")
        if v == "repulsive_bessel":
            if self.dim not in (None, 2):
                raise ValueError("repulsive_bessel is defined for n = 2")
            object.__setattr__(self, "dim", 2)
        if v == "custom_radial":
            if self.table is None:
                raise ValueError("custom_radial needs a (r, k, k') table")
            r, k, kp = (np.asarray(a, dtype=float) for a in self.table)
            if not (r.ndim == 1 and r.size >= 2 and r.shape == k.shape == kp.shape):
                raise ValueError("custom_radial table needs matching 1-D columns")
            if np.any(r <= 0) or np.any(np.diff(r) <= 0):
                raise ValueError("custom_radial radii must be positive and strictly increasing")
            if not (np.all(np.isfinite(k)) and np.all(np.isfinite(kp))):
                raise ValueError("custom_radial table must be finite")
            object.__setattr__(self, "table", (tuple(r), tuple(k), tuple(kp)))

    @property
    def has_symbol(self) -> bool:
        return self.variant != "custom_radial"

    def describe(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == "gaussian":
            d.update(amplitude=self.amplitude, width=self.width)
        elif self.variant in ("exponential", "bessel"):
            d["alpha"] = self.alpha
        elif self.variant == "power_law":
            d.update(beta=self.beta, coeff=self.coeff)
        if self.dim is not None:
            d["dim"] = self.dim
        if self.sign != 1:
            d["sign"] = self.sign
        return d


def kernel_from_dict(d: dict, dim: int | None = None) -> KernelSpec:
    """Build a kernel from the config DSL, e.g. ``{"variant": "bessel", "alpha": 1.0}``."""
    d = dict(d)
    variant = d.pop("variant")
    kw = {}
    names = {"amplitude", "width", "alpha", "beta", "coeff", "dim", "sign"}
    for key in list(d):
        if key in names:
            kw[key] = d.pop(key)
    if "table" in d:
        kw["table"] = d.pop("table")
    if "csv" in d:
        kw["table"] = load_profile_csv(d.pop("csv"))
    if d:
        raise ValueError(f"unknown kernel keys: {sorted(d)}")
    if variant in ("bessel", "newtonian", "power_law") and "dim" not in kw:
        kw["dim"] = dim
    if "dim" in kw and kw["dim"] is not None:
        kw["dim"] = int(kw["dim"])
    return KernelSpec(variant, **kw)


def load_profile_csv(path) -> tuple:
    """Read (r, k, k') triples; a header row is skipped if present."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append(tuple(float(x) for x in rec[:3]))
            except ValueError:
                if rows:
                    raise
                continue  # header
    if not rows:
        raise ValueError(f"no profile rows in {path}")
    r, k, kp = zip(*rows)
    return (r, k, kp)


# ---------------------------------------------------------------- symbols


def _dim_for(k: KernelSpec, dim: int) -> int:
    if k.dim is not None and k.dim != dim:
        raise ValueError(f"kernel built for n={k.dim} used in n={dim}")
    return dim


def symbol(k: KernelSpec, xi, dim: int) -> np.ndarray:
    """Fourier symbol K^(xi) as a function of |xi| (real, radial)."""
    xi = np.asarray(xi, dtype=float)
    n = _dim_for(k, dim)
    v = k.variant
    with np.errstate(divide="ignore", invalid="ignore"):
        if v == "zero":
            out = np.zeros_like(xi)
        elif v == "gaussian":
            s2 = k.width ** 2
            out = k.amplitude * (2 * np.pi * s2) ** (n / 2) * np.exp(-0.5 * s2 * xi ** 2)
        elif v == "exponential":
            c = math.sqrt(k.alpha)
            pref = math.gamma((n + 1) / 2) * math.pi ** ((n - 1) / 2) * 2 ** n * c
            out = pref / (c * c + xi ** 2) ** ((n + 1) / 2)
        elif v == "bessel":
            out = 1.0 / (xi ** 2 + k.alpha)
        elif v == "newtonian":
            out = np.where(xi > 0, 1.0 / np.where(xi > 0, xi, 1.0) ** 2, 0.0)
        elif v == "power_law":
            b = k.beta
            pref = k.coeff * math.pi ** (n / 2) * 2 ** b * math.gamma(b / 2) / math.gamma((n - b) / 2)
            out = np.where(xi > 0, pref * np.where(xi > 0, xi, 1.0) ** (-b), 0.0)
        elif v == "repulsive_bessel":
            out = -1.0 / (xi ** 2 + 1.0)
        else:
            raise UnsupportedKernelError(f"{v} kernel has no Fourier symbol")
    return k.sign * out


def symbol_on_grid(k: KernelSpec, grid: Grid) -> FourierField:
    return FourierField(grid, symbol(k, grid.xi_norm, grid.dim))


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class RadialProfile:
    k: Callable
    k_prime: Callable
    near_origin_exponent: float | None  # a with |K'(r)| ~ r^-a; None -> fit

    def check_derivative(self, radii=None, rel: float = 1e-6) -> bool:
        radii = np.geomspace(1e-2, 10.0, 10) if radii is None else np.asarray(radii)
        for r in radii:
            dr = 1e-5 * r
            fd = (self.k(r + dr) - self.k(r - dr)) / (2 * dr)
            kp = self.k_prime(r)
            if abs(fd - kp) > rel * max(abs(kp), 1e-300):
                return False
        return True


def _custom_profile(table) -> RadialProfile:
    r, kv, kp = (np.asarray(a) for a in table)
    lr = np.log(r)

    def _interp(vals):
        def fn(s):
            s = np.asarray(s, dtype=float)
            if np.any(s < r[0] * (1 - 1e-12)) or np.any(s > r[-1] * (1 + 1e-12)):
                raise ValueError(f"radius outside custom profile range [{r[0]}, {r[-1]}]")
            return np.interp(np.log(s), lr, vals)

        return fn

    return RadialProfile(_interp(kv), _interp(kp), None)


def profile(k: KernelSpec) -> RadialProfile:
    """Radial profile k(r), k'(r) with the analytically known near-origin exponent."""
    v, sg = k.variant, k.sign
    if v == "zero":
        z = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        return RadialProfile(z, z, 0.0)
    if v == "gaussian":
        A, s2 = sg * k.amplitude, k.width ** 2
        return RadialProfile(
            lambda r: A * np.exp(-0.5 * np.asarray(r) ** 2 / s2),
            lambda r: -A * np.asarray(r) / s2 * np.exp(-0.5 * np.asarray(r) ** 2 / s2),
            0.0,
        )
    if v == "exponential":
        c = math.sqrt(k.alpha)
        return RadialProfile(
            lambda r: sg * np.exp(-c * np.asarray(r)),
            lambda r: -sg * c * np.exp(-c * np.asarray(r)),
            0.0,
        )
    if v in ("bessel", "repulsive_bessel"):
        n = k.dim
        c = math.sqrt(k.alpha if v == "bessel" else 1.0)
        sgn = sg * (1.0 if v == "bessel" else -1.0)
        nu = n / 2.0 - 1.0
        pref = (2 * math.pi) ** (-n / 2.0)
        return RadialProfile(
            lambda r: sgn * pref * c ** nu * np.asarray(r) ** (-nu) * special.kv(nu, c * np.asarray(r)),
            lambda r: -sgn * pref * c ** (nu + 1) * np.asarray(r) ** (-nu) * special.kv(nu + 1, c * np.asarray(r)),
            float(max(n - 1, 0)),
        )
    if v == "newtonian":
        n = k.dim
        area = sphere_area(n)
        if n == 1:
            kf = lambda r: -sg * 0.5 * np.asarray(r)
        elif n == 2:
            kf = lambda r: -sg * np.log(np.asarray(r)) / (2 * math.pi)
        else:
            kf = lambda r: sg * np.asarray(r) ** (2.0 - n) / ((n - 2) * area)
        return RadialProfile(kf, lambda r: -sg * np.asarray(r, dtype=float) ** (1.0 - n) / area, float(n - 1))
    if v == "power_law":
        n, b, c = k.dim, k.beta, sg * k.coeff
        return RadialProfile(
            lambda r: c * np.asarray(r, dtype=float) ** (b - n),
            lambda r: c * (b - n) * np.asarray(r, dtype=float) ** (b - n - 1),
            float(n - b + 1),
        )
    if v == "custom_radial":
        return _custom_profile(k.table)
    raise UnsupportedKernelError(v)


def radial_derivative(k: KernelSpec, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radius must be > 0")
    return profile(k).k_prime(r)


# ---------------------------------------------------------------- classification


class Verdict(str, enum.Enum):
    MILD = "mild"
    STRONGLY_SINGULAR = "strongly_singular"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class SingularityClass:
    verdict: Verdict
    exponent: float  # a with |grad K| ~ |x|^-a near 0 (clamped at 0)
    qprime_sup: float  # sup of q' with grad K in L^{q'} near the origin
    weak_qprime: float  # grad K in L^{q',inf} with this q'
    bounded: bool  # grad K bounded near the origin (a = 0)
    fitted: bool
    fit_residual: float = 0.0
    note: str = ""


FIT_RADII = 2.0 ** -np.arange(4, 15)


def fit_near_origin_exponent(k: KernelSpec, radii=FIT_RADII) -> tuple[float, float]:
    """Least-squares slope of log|K'| against log r; returns (a, rms residual)."""
    prof = profile(k)
    radii = np.asarray(radii, dtype=float)
    if k.variant == "custom_radial":
        lo, hi = k.table[0][0], k.table[0][-1]
        radii = radii[(radii >= lo) & (radii <= hi)]
    if radii.size < 3:
        return math.nan, math.inf
    kp = prof.k_prime(radii)
    if np.any(kp == 0) or np.any(np.sign(kp) != np.sign(kp[0])) or not np.all(np.isfinite(kp)):
        return math.nan, math.inf
    x, y = np.log(radii), np.log(np.abs(kp))
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(-slope), resid


def classify(k: KernelSpec, n: int, fit_tol: float = 0.05) -> SingularityClass:
    if k.dim is not None and k.dim != n:
        raise ValueError(f"kernel built for n={k.dim}, asked about n={n}")
    prof = profile(k)
    fitted = prof.near_origin_exponent is None
    resid = 0.0
    if fitted:
        a, resid = fit_near_origin_exponent(k)
        if not (np.isfinite(a) and resid <= fit_tol):
            return SingularityClass(
                Verdict.INDETERMINATE, math.nan, math.nan, math.nan, False, True, resid,
                note="near-origin profile is not power-law within tolerance",
            )
        a = max(a, 0.0)
    else:
        a = prof.near_origin_exponent
    qsup = math.inf if a == 0 else n / a
    verdict = Verdict.MILD if a < 1 else Verdict.STRONGLY_SINGULAR
    return SingularityClass(verdict, a, qsup, qsup, a == 0, fitted, resid)


# ---------------------------------------------------------------- improper integrals


def _dyadic_sum(fn, shells, base: float = 1.0, inward: bool = True, ratio_tol: float = 1e-3):
    """Sum int fn over dyadic shells [base 2^-(j+1), base 2^-j] (or outward)
    and decide convergence from the asymptotic shell ratio."""
    parts = []
    for j in range(shells):
        a, b = (base * 2.0 ** -(j + 1), base * 2.0 ** -j) if inward else (base * 2.0 ** j, base * 2.0 ** (j + 1))
        val, _ = integrate.quad(fn, a, b, limit=200, epsabs=0.0, epsrel=1e-12)
        parts.append(val)
    parts = np.asarray(parts)
    total = float(parts.sum())
    if not np.isfinite(total):
        return False, math.inf
    last, prev = abs(parts[-1]), abs(parts[-2])
    if last == 0.0:
        return True, total
    if prev == 0.0 or not np.isfinite(last / prev):
        return False, math.inf
    rho = last / prev
    if rho >= 1.0 - ratio_tol:
        return False, math.inf
    return True, total + float(parts[-1] * rho / (1.0 - rho))


def _sign_check(kp: Callable, lo: float = 1e-12, hi: float = 1.0) -> int:
    s = np.concatenate([np.geomspace(lo, hi, 400), np.linspace(lo, hi, 400)])
    vals = kp(s)
    if np.any(vals == 0) or not (np.all(vals > 0) or np.all(vals < 0)):
        raise ValueError("k' changes sign (or vanishes) on (0, 1]")
    return int(np.sign(vals[0]))


def osgood(k: KernelSpec) -> tuple[bool, float]:
    """int_0^1 dr / |k'(r)|; returns (finite, value)."""
    prof = profile(k)
    _sign_check(prof.k_prime)
    return _dyadic_sum(lambda r: 1.0 / abs(float(prof.k_prime(r))), shells=60)


def grad_norm(k: KernelSpec, qprime: float, n: int) -> float:
    """||grad K||_{L^{q'}(R^n)} from the radial profile (inf when divergent)."""
    if k.variant == "zero":
        return 0.0
    prof = profile(k)
    if math.isinf(qprime):
        a = prof.near_origin_exponent
        if a is None:
            a, _ = fit_near_origin_exponent(k)
        if a is not None and a > 1e-9:
            return math.inf
        s = np.geomspace(1e-12, 1e4, 4000)
        vals = np.abs(prof.k_prime(s))
        i = int(np.argmax(vals))
        lo, hi = np.log(s[max(i - 1, 0)]), np.log(s[min(i + 1, s.size - 1)])
        res = optimize.minimize_scalar(
            lambda x: -abs(float(prof.k_prime(math.exp(x)))), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        return float(max(vals[i], -res.fun))
    q = float(qprime)
    fn = lambda r: abs(float(prof.k_prime(r))) ** q * r ** (n - 1)
    ok_in, v_in = _dyadic_sum(fn, shells=80, inward=True)
    ok_out, v_out = _dyadic_sum(fn, shells=80, inward=False)
    if not (ok_in and ok_out):
        return math.inf
    return float((sphere_area(n) * (v_in + v_out)) ** (1.0 / q))


# ---------------------------------------------------------------- blow-up constants


@dataclass(frozen=True)
class BlowupParams:
    delta: float
    gamma: float
    c_bar: float
    certified_to: float = 1e-6

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0 and self.c_bar >= 0):
            raise ValueError("BlowupParams need delta > 0, gamma > 0, c_bar >= 0")


def _polished_max(fn, s: np.ndarray) -> float:
    """Max of fn over a sorted geometric sample, polished locally in log s."""
    vals = fn(s)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = math.log(s[max(i - 1, 0)]), math.log(s[min(i + 1, s.size - 1)])
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -float(fn(np.array([math.exp(x)]))[0]),
                                       bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def blowup_params(k: KernelSpec, delta: float, s_max: float, rel: float = 1e-6) -> BlowupParams:
    if not (delta > 0 and s_max > delta):
        raise ValueError("need 0 < delta < s_max")
    kp = profile(k).k_prime
    sk = lambda s: s * kp(s)

    prev = None
    m, depth = 64, 20
    for _ in range(10):
        s = delta * np.geomspace(2.0 ** -depth, 1.0, m)
        sup = _polished_max(sk, s)
        if sup >= 0:
            raise NotBlowupAdmissible(f"sup s K'(s) on (0, {delta}] is {sup:.3g} >= 0")
        if prev is not None and abs(sup - prev) <= rel * abs(prev):
            break
        prev = sup
        m, depth = 2 * m, depth + 10
    else:
        raise NotBlowupAdmissible("sup s K'(s) near the origin does not stabilise away from 0")
    gamma = -sup

    ratio = lambda s: np.abs(sk(s)) / s ** 2
    prev, m = None, 64
    for _ in range(12):
        c = _polished_max(ratio, np.geomspace(delta, s_max, m))
        if prev is not None and abs(c - prev) <= rel * max(abs(prev), 1e-300):
            break
        prev, m = c, 2 * m
    return BlowupParams(delta, gamma, c, rel)


def critical_mass(p: BlowupParams, n: int, i0: float) -> float:
    if not p.gamma > 0:
        raise ValueError("gamma must be > 0")
    if i0 < 0:
        raise ValueError("I0 must be >= 0")
    return (2 * n + 4 * (p.c_bar + p.gamma / p.delta ** 2) * i0) / p.gamma


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class Decomposition:
    """K = K1 + K2 with Laplacian of K1 nonnegative and grad K2 bounded."""

    k1_symbol: Callable
    k2_symbol: Callable
    k2_grad_inf_bound: float
    dim: int
    zero_mode: float = 0.0  # full symbol at xi = 0, assigned to K2

    def on_grid(self, grid: Grid) -> tuple[FourierField, FourierField]:
        """Both symbols on the grid; the xi = 0 mode of K2 carries the full symbol's value."""
        xi = grid.xi_norm
        nz = xi > 0
        safe = np.where(nz, xi, 1.0)
        k1 = np.where(nz, self.k1_symbol(safe), 0.0)
        k2 = np.where(nz, self.k2_symbol(safe), self.zero_mode)
        return FourierField(grid, k1), FourierField(grid, k2)


def _grad_sup_bound(k2: Callable, n: int) -> float:
    """(2 pi)^-n int |xi| |K2^(xi)| dxi, an upper bound on sup |grad K2|."""
    fn = lambda rho: rho ** n * abs(float(k2(rho)))
    v1, _ = integrate.quad(fn, 0.0, 1.0, limit=200)
    v2, _ = integrate.quad(fn, 1.0, np.inf, limit=200)
    return sphere_area(n) * (v1 + v2) / (2 * math.pi) ** n


def decompose(k: KernelSpec, k1_symbol: Callable | None = None, k2_symbol: Callable | None = None) -> Decomposition:
    if k1_symbol is not None and k2_symbol is not None:
        n = k.dim or 2
        return Decomposition(k1_symbol, k2_symbol, _grad_sup_bound(k2_symbol, n), n)
    if k.variant != "repulsive_bessel" or k.sign != 1:
        raise UnsupportedKernelError(f"no admissible split known for {k.variant}")
    k1 = lambda xi: -1.0 / np.asarray(xi, dtype=float) ** 2
    k2 = lambda xi: 1.0 / (np.asarray(xi, dtype=float) ** 2 * (np.asarray(xi, dtype=float) ** 2 + 1.0))
    return Decomposition(k1, k2, _grad_sup_bound(k2, 2), 2, zero_mode=-1.0)
