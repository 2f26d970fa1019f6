"""Checks of the mass, virial and Gronwall identities on simulation output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .grid import Field, Grid, lp_norm, mass_and_moment
from .kernels import BlowupParams, KernelSpec, profile

COLUMNS = ("t", "mass", "moment", "l2", "linf", "lq", "min_u", "virial_rhs")


@dataclass
class DiagnosticsSeries:
    lq_exponent: float = 2.0
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def append(self, row):
        row = tuple(float(x) for x in row)
        if len(row) != len(COLUMNS):
            raise ValueError(f"row needs {len(COLUMNS)} entries")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError("series timestamps must be strictly increasing")
        self.rows.append(row)

    def append_field(self, f: Field, kernel: KernelSpec | None = None):
        mass, moment = mass_and_moment(f)
        vr = virial_rhs(f, kernel) if kernel is not None else math.nan
        self.append((f.t, mass, moment, lp_norm(f, 2), lp_norm(f, math.inf),
                     lp_norm(f, self.lq_exponent), float(f.values.min()), vr))

    def column(self, name: str) -> np.ndarray:
        j = COLUMNS.index(name)
        return np.array([r[j] for r in self.rows])

    def __getattr__(self, name):
        if name in COLUMNS:
            return self.column(name)
        raise AttributeError(name)


def write_series_csv(series: DiagnosticsSeries, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in series.rows:
            fh.write(",".join(format(x, ".16e") for x in row) + "\n")


def read_series_csv(path, lq_exponent: float = 2.0) -> DiagnosticsSeries:
    s = DiagnosticsSeries(lq_exponent=lq_exponent)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(h.strip() for h in header) != COLUMNS:
            raise ValueError(f"unexpected series header {header}")
        for rec in reader:
            if rec:
                s.append([float(x) for x in rec])
    return s


# ---------------------------------------------------------------- virial


@lru_cache(maxsize=16)
def _lag_weights(grid: Grid, kernel: KernelSpec) -> np.ndarray:
    """w(d) = |d| K'(|d|) on all lattice separations, w(0) = 0."""
    N, h = grid.points, grid.spacing
    d = h * np.arange(-(N - 1), N)
    r = np.sqrt(sum(c * c for c in np.meshgrid(*([d] * grid.dim), indexing="ij")))
    kp = profile(kernel).k_prime
    w = np.zeros_like(r)
    nz = r > 0
    w[nz] = r[nz] * kp(r[nz])
    return w


def virial_rhs(u: Field, kernel: KernelSpec, method: str = "fft") -> float:
    """2nM + sum_{i != j} u_i u_j |x_i - x_j| K'(|x_i - x_j|) h^{2n}.

    ``fft`` evaluates the pair sum as a zero-padded linear convolution of u
    with the lag table (same sum, O(N log N)); ``direct`` loops over pairs.
    """
    g = u.grid
    n, hv = g.dim, g.cell_volume
    mass = float(u.values.sum() * hv)
    if kernel.variant == "zero":
        return 2 * n * mass
    if method == "direct":
        return 2 * n * mass + _pair_sum_direct(u, kernel)
    w = _lag_weights(g, kernel)
    N = g.points
    conv = fftconvolve(u.values, w, mode="full")
    conv = conv[(slice(N - 1, 2 * N - 1),) * n]
    return 2 * n * mass + float(np.sum(u.values * conv)) * hv * hv


def _pair_sum_direct(u: Field, kernel: KernelSpec, active_tol: float = 1e-14) -> float:
    g = u.grid
    vals = u.values.ravel()
    pts = np.stack([c.ravel() for c in g.coords], axis=1)
    act = np.abs(vals) > active_tol * np.max(np.abs(vals)) if vals.size else vals > 0
    vals, pts = vals[act], pts[act]
    kp = profile(kernel).k_prime
    total = 0.0
    for i in range(0, vals.size, 512):
        diff = pts[i:i + 512, None, :] - pts[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        w = np.zeros_like(r)
        nz = r > 0
        w[nz] = r[nz] * kp(r[nz])
        total += float(vals[i:i + 512] @ (w @ vals))
    return total * g.cell_volume ** 2


def _check_times(t: np.ndarray):
    if np.any(np.diff(t) <= 0):
        raise ValueError("series timestamps must be strictly increasing")


def centered_rate(series: DiagnosticsSeries, name: str = "moment") -> tuple[np.ndarray, np.ndarray]:
    """Interior times and centred-difference time derivative of a column."""
    t = series.t
    _check_times(t)
    y = series.column(name)
    return t[1:-1], np.gradient(y, t)[1:-1]


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    max_violation: float  # max (lhs - bound) / |bound| over checked times
    checked: int
    worst_t: float
    slack: float


def virial_bound_check(series: DiagnosticsSeries, p: BlowupParams, n: int, slack: float = 0.05,
                       window: tuple | None = None) -> BoundCheck:
    """dI/dt <= M (2n - gamma M + 4 (C + gamma/delta^2) I(t)) at interior rows."""
    if not p.gamma > 0:
        raise ValueError("gamma must be > 0")
    if len(series) < 3:
        raise ValueError("need at least 3 rows")
    t_all = series.t
    _check_times(t_all)
    mass = series.mass
    if np.max(np.abs(mass - mass[0])) > 1e-6 * abs(mass[0]):
        raise ValueError("virial bound check needs a mass-conserving series")
    t, rate = centered_rate(series)
    moment = series.moment[1:-1]
    M = mass[0]
    bound = M * (2 * n - p.gamma * M + 4 * (p.c_bar + p.gamma / p.delta ** 2) * moment)
    sel = np.ones_like(t, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    if not np.any(sel):
        raise ValueError("no interior rows inside the window")
    viol = (rate - bound)[sel] / np.maximum(np.abs(bound[sel]), 1e-300)
    i = int(np.argmax(viol))
    return BoundCheck(bool(viol[i] <= slack), float(viol[i]), int(sel.sum()), float(t[sel][i]), slack)


def blowup_time_bound(M: float, I0: float, p: BlowupParams, n: int) -> float:
    """I0 / c with c = M (gamma M - 2n - 4 (C + gamma/delta^2) I0), or inf when c <= 0."""
    if not M > 0:
        raise ValueError("M must be > 0")
    if not I0 > 0:
        raise ValueError("I0 must be > 0 (point masses are outside the function framework)")
    c = M * (p.gamma * M - 2 * n - 4 * (p.c_bar + p.gamma / p.delta ** 2) * I0)
    return I0 / c if c > 0 else math.inf


def gronwall_rate_constant(q: float, eps: float = 1.0) -> float:
    """C(eps) in d/dt ||u||_q <= C(eps) ||grad K2||_inf^2 M^2 ||u||_q.

    From eps-Young on (q-1) u^{q-1} grad u . w <= (q-1)[eps u^{q-2}|grad u|^2 + u^q |w|^2 / (4 eps)].
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return (q - 1) / (4 * eps)


@dataclass(frozen=True)
class GronwallCheck:
    passed: bool
    rate: float
    min_margin: float  # min over t > 0 of 1 - lq(t) / (exp(C t) lq(0))
    worst_t: float


def gronwall_check(series: DiagnosticsSeries, q: float, k2_grad_inf: float, M: float, c_eps: float,
                   rtol: float = 1e-12) -> GronwallCheck:
    if len(series) < 1 or series.lq_exponent != q:
        raise ValueError(f"series has no L^{q} column (recorded exponent {series.lq_exponent})")
    t, lq = series.t, series.lq
    C = c_eps * k2_grad_inf ** 2 * M ** 2
    bound = np.exp(C * t) * lq[0]
    margin = 1.0 - lq / bound
    ok = bool(np.all(margin >= -rtol))
    later = np.flatnonzero(t > t[0])
    idx = later if later.size else np.arange(t.size)
    i = int(idx[np.argmin(margin[idx])])
    return GronwallCheck(ok, float(C), float(margin[i]), float(t[i]))


def mass_drift(series: DiagnosticsSeries) -> float:
    if len(series) < 1:
        raise ValueError("empty series")
    m = series.mass
    if m[0] == 0:
        raise ValueError("M(0) = 0")
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))
