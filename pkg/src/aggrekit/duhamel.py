"""Mild formulation: the bilinear Duhamel term, Picard iteration and the
explicit smallness conditions for local and small-data global existence.

Trajectories live on a uniform time grid t_j = j T / m.  The Duhamel
integral is evaluated per Fourier mode by exponential product integration:
the integrand s -> xi . F(s)^ is replaced by its quadratic interpolant on
three neighbouring nodes, and the weight exp(-|xi|^2 (t - s)) is integrated
exactly through phi-functions.  The (t - s)^{-1/2} singularity of the
physical-space estimate never appears explicitly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .grid import Field, Grid, inverse, lp_norm
from .heat import grad_heat_constant, heat_constant
from .kernels import KernelSpec, ball_volume, sphere_area, symbol_on_grid
from .solver import phi_functions


class NonContractive(RuntimeError):
    """Picard iteration did not reach the tolerance; carries the measured ratios."""

    def __init__(self, message: str, state: "PicardState"):
        super().__init__(message)
        self.state = state


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    """Field values on the uniform grid t_j = j * T / (len(values) - 1)."""

    grid: Grid
    horizon: float
    values: np.ndarray  # shape (m + 1, *grid.shape)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.values.shape[0])

    @property
    def panels(self) -> int:
        return self.values.shape[0] - 1

    def at(self, j: int) -> Field:
        return Field(self.grid, self.values[j], float(self.nodes[j]))

    @classmethod
    def zeros(cls, grid: Grid, horizon: float, panels: int) -> "Trajectory":
        return cls(grid, horizon, np.zeros((panels + 1,) + grid.shape))

    @classmethod
    def heat(cls, u0: Field, horizon: float, panels: int) -> "Trajectory":
        g = u0.grid
        uh = np.fft.rfftn(u0.values)
        ts = np.linspace(0.0, horizon, panels + 1)
        vals = np.stack([inverse(g, np.exp(-g.xi_sq * t) * uh) for t in ts])
        return cls(g, horizon, vals)


def _check_pair(u: Trajectory, v: Trajectory):
    if u.grid != v.grid:
        raise ValueError("trajectories live on different grids")
    if u.values.shape != v.values.shape or u.horizon != v.horizon:
        raise ValueError("trajectories use different time grids")


class _Flux:
    """Fourier transform of div(u (grad K * v)) at every node."""

    def __init__(self, grid: Grid, kernel: KernelSpec):
        self.grid = grid
        self.khat = symbol_on_grid(kernel, grid).modes
        self.dw = grid.derivative_wavevectors
        self.trivial = not np.any(self.khat)

    def __call__(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        g = self.grid
        vh = np.fft.rfftn(v)
        out = np.zeros(g.spectral_shape, dtype=complex)
        if self.trivial:
            return out
        for w in self.dw:
            vel = inverse(g, 1j * w * self.khat * vh)
            out += 1j * w * np.fft.rfftn(u * vel)
        return out


def _quad_coeffs(h0, h1, h2, backward: bool):
    """Coefficients c0 + c1 th + c2 th^2 on the panel th in [0, 1].

    Forward: samples at th = 0, 1, 2.  Backward: samples at th = -1, 0, 1.
    """
    if backward:
        return h1, 0.5 * (h2 - h0), 0.5 * (h2 - 2 * h1 + h0)
    return h0, 0.5 * (-3 * h0 + 4 * h1 - h2), 0.5 * (h0 - 2 * h1 + h2)


class _Duhamel:
    """Node values of B(u, v) for fixed grid, kernel and time step."""

    def __init__(self, grid: Grid, kernel: KernelSpec, horizon: float, panels: int):
        self.grid = grid
        self.flux = _Flux(grid, kernel)
        self.panels = panels
        self.d = horizon / panels if panels else 0.0
        z = -grid.xi_sq * self.d
        self.E = np.exp(z)
        self.p1, self.p2, self.p3 = phi_functions(z)

    def _nodes_flux(self, u: Trajectory, v: Trajectory) -> list:
        return [self.flux(u.values[j], v.values[j]) for j in range(u.values.shape[0])]

    def _panel(self, H, j: int):
        """Integral over panel j of exp(-|xi|^2 (t_{j+1} - s)) H(s) ds."""
        m = self.panels
        if m == 1:
            # linear interpolant only
            c0, c1, c2 = H[0], H[1] - H[0], 0.0
        elif j + 2 <= m:
            c0, c1, c2 = _quad_coeffs(H[j], H[j + 1], H[j + 2], backward=False)
        else:
            c0, c1, c2 = _quad_coeffs(H[j - 1], H[j], H[j + 1], backward=True)
        return self.d * (c0 * self.p1 + c1 * self.p2 + 2 * c2 * self.p3)

    def nodes(self, u: Trajectory, v: Trajectory) -> np.ndarray:
        g = self.grid
        out = np.zeros((self.panels + 1,) + g.shape)
        if self.flux.trivial or self.panels == 0:
            return out
        H = self._nodes_flux(u, v)
        acc = np.zeros(g.spectral_shape, dtype=complex)
        for j in range(self.panels):
            acc = self.E * acc - self._panel(H, j)
            out[j + 1] = inverse(g, acc)
        return out


def bilinear_term(u: Trajectory, v: Trajectory, t: float, kernel: KernelSpec) -> Field:
    """B(u, v)(t) = -int_0^t grad G(t - s) * (u (grad K * v))(s) ds.

    Off-node times are reached by propagating the previous node value with
    the heat semigroup and integrating the partial panel exactly.
    """
    _check_pair(u, v)
    if not 0 <= t <= u.horizon * (1 + 1e-12):
        raise ValueError(f"t={t} outside the trajectory support [0, {u.horizon}]")
    t = min(t, u.horizon)
    g, m = u.grid, u.panels
    if m == 0 or t == 0:
        return Field(g, np.zeros(g.shape), t)
    D = _Duhamel(g, kernel, u.horizon, m)
    if D.flux.trivial:
        return Field(g, np.zeros(g.shape), t)
    d = D.d
    j = min(int(math.floor(t / d + 1e-9)), m)
    if abs(t - j * d) <= 1e-12 * max(1.0, t):
        return Field(g, D.nodes(u, v)[j], t)
    H = D._nodes_flux(u, v)
    acc = np.zeros(g.spectral_shape, dtype=complex)
    for i in range(j):
        acc = D.E * acc - D._panel(H, i)
    tau = t - j * d
    if m == 1:
        c0, c1, c2 = H[0], H[1] - H[0], 0.0
    elif j + 2 <= m:
        c0, c1, c2 = _quad_coeffs(H[j], H[j + 1], H[j + 2], backward=False)
    else:
        c0, c1, c2 = _quad_coeffs(H[j - 1], H[j], H[j + 1], backward=True)
    a1, a2 = c1 / d, c2 / d ** 2
    z = -g.xi_sq * tau
    p1, p2, p3 = phi_functions(z)
    acc = np.exp(z) * acc - tau * (c0 * p1 + a1 * tau * p2 + 2 * a2 * tau ** 2 * p3)
    return Field(g, inverse(g, acc), t)


# ---------------------------------------------------------------- Picard


def weight_exponent(q: float, n: int) -> float:
    return 0.0 if math.isinf(q) else (n / 2) * (1 - 1 / q)


def weighted_norm(traj: Trajectory, q: float, regime: str = "mild") -> float:
    """X_T norm (mild: sup ||u||_1 + sup t^a ||u||_q) or Y_T norm (strong)."""
    g = traj.grid
    a = weight_exponent(q, g.dim) if regime == "mild" else 0.0
    l1 = lq = 0.0
    for j, t in enumerate(traj.nodes):
        f = Field(g, traj.values[j], float(t), density=False)
        l1 = max(l1, lp_norm(f, 1))
        if t > 0 or a == 0:
            lq = max(lq, (t ** a if a else 1.0) * lp_norm(f, q))
    return l1 + lq


@dataclass
class PicardState:
    iterate_index: int
    trajectory: Trajectory
    contraction_ratios: list
    weighted_norm: float
    distances: list = field(default_factory=list)
    residual: float = math.nan
    converged: bool = True
    q: float = 1.0
    regime: str = "mild"

    def final(self) -> Field:
        return self.trajectory.at(self.trajectory.panels)


def picard_solve(u0: Field, kernel: KernelSpec, T: float, tol: float = 1e-12, max_iter: int = 50,
                 q: float = 1.0, panels: int = 64, initial: Trajectory | None = None,
                 regime: str = "mild", raise_on_failure: bool = True) -> PicardState:
    """Iterate u_{m+1} = G(t) * u0 + B(u_m, u_m) starting from ``initial`` (zero by default)."""
    if not T > 0 or math.isinf(T):
        raise ValueError("T must be finite and > 0")
    if panels < 1:
        raise ValueError("need at least one time panel")
    g = u0.grid
    y = Trajectory.heat(u0, T, panels)
    D = _Duhamel(g, kernel, T, panels)
    cur = initial if initial is not None else Trajectory.zeros(g, T, panels)
    _check_pair(cur, y)
    dists, ratios = [], []
    for m in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = Trajectory(g, T, y.values + D.nodes(cur, cur))
        if not np.all(np.isfinite(nxt.values)):
            dists.append(math.inf)
            ratios.append(math.inf)
            break
        dists.append(weighted_norm(Trajectory(g, T, nxt.values - cur.values), q, regime))
        if len(dists) > 1:
            ratios.append(dists[-1] / dists[-2] if dists[-2] > 0 else 0.0)
        cur = nxt
        if dists[-1] < tol:
            break
    converged = dists[-1] < tol
    wn = weighted_norm(cur, q, regime)
    state = PicardState(m, cur, ratios, wn, dists, q=q, regime=regime, converged=converged)
    with np.errstate(over="ignore", invalid="ignore"):
        state.residual = integral_residual(state, u0, kernel, D=D, y=y)
    if not converged and raise_on_failure:
        raise NonContractive(f"no convergence to {tol:g} after {max_iter} iterates", state)
    return state


def integral_residual(state: PicardState, u0: Field, kernel: KernelSpec, D=None, y=None) -> float:
    """||u - (G * u0 + B(u, u))|| in the weighted norm of the state."""
    u = state.trajectory
    D = D or _Duhamel(u.grid, kernel, u.horizon, u.panels)
    y = y or Trajectory.heat(u0, u.horizon, u.panels)
    r = u.values - y.values - D.nodes(u, u)
    if not np.all(np.isfinite(r)):
        return math.inf
    return weighted_norm(Trajectory(u.grid, u.horizon, r), state.q, state.regime)


# ---------------------------------------------------------------- existence times


class Regime(str, enum.Enum):
    MILD = "mild"
    STRONG = "strong"


def conjugate(q: float) -> float:
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1)


def _g1(n: int) -> float:
    """||grad G(t)||_1 sqrt(t)."""
    return math.exp(math.lgamma((n + 1) / 2) - math.lgamma(n / 2))


@dataclass(frozen=True)
class LocalExistenceEstimate:
    regime: Regime
    q: float
    qprime: float
    T: float
    constants_ledger: dict
    contraction_bound: float  # 4 * eta * ||y|| at T (1/2 by construction)

    def contraction_bound_at(self, t: float) -> float:
        """4 * eta(t) * ||y|| for a shorter horizon t <= T."""
        if math.isinf(self.T):
            return 0.0
        return self.contraction_bound * (t / self.T) ** self.constants_ledger["time_exponent"]


def local_existence_time(regime, u0_l1: float, u0_lq: float, grad_k_norm: float, q: float, n: int,
                         margin: float = 0.5) -> LocalExistenceEstimate:
    """Horizon T at which the contraction condition's left side equals ``margin``.

    Mild: 4 C1 T^beta ||grad K||_{q'} ||u0||_1 (1 + C(q,1)), beta = (1 - n(1-1/q))/2,
    with C1 = g1 [B(1-a, 1/2) + B(1-2a, 1/2)], a = (n/2)(1-1/q), g1 = ||grad G(1)||_1.
    Strong: 4 C sqrt(T) ||grad K||_{q'} (||u0||_1 + ||u0||_q), C = 4 g1.
    """
    regime = Regime(regime)
    if n < 1:
        raise ValueError("n must be >= 1")
    if min(u0_l1, u0_lq, grad_k_norm) < 0:
        raise ValueError("norms must be >= 0")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    qp = conjugate(q)
    g1 = _g1(n)
    if regime is Regime.MILD:
        if not (q >= 1 and (n == 1 or q < n / (n - 1))):
            raise ValueError(f"mild regime needs q in [1, n/(n-1)); got q={q}, n={n}")
        a = weight_exponent(q, n)
        beta = 0.5 - a
        b1 = special.beta(1 - a, 0.5)
        b2 = special.beta(1 - 2 * a, 0.5)
        b1, b2 = float(b1), float(b2)
        C1 = g1 * (b1 + b2)
        Cq1 = heat_constant(q, 1.0, n)
        scale = 4 * C1 * grad_k_norm * u0_l1 * (1 + Cq1)
        ledger = {"C1": C1, "C(q,1)": Cq1, "beta_value": b1, "beta_value_lq": b2,
                  "time_exponent": beta, "grad_k_norm": grad_k_norm, "u0_l1": u0_l1, "u0_lq": u0_lq,
                  "g1": g1}
    else:
        if not (n >= 2 and q >= n / (n - 1)):
            raise ValueError(f"strong regime needs n >= 2 and q >= n/(n-1); got q={q}, n={n}")
        beta = 0.5
        C = 4 * g1
        scale = 4 * C * grad_k_norm * (u0_l1 + u0_lq)
        ledger = {"C": C, "time_exponent": beta, "grad_k_norm": grad_k_norm, "u0_l1": u0_l1,
                  "u0_lq": u0_lq, "g1": g1}
    if scale == 0:
        T, bound = math.inf, 0.0
    elif math.isinf(scale):
        T, bound = 0.0, math.inf
    else:
        T, bound = (margin / scale) ** (1 / beta), margin
    ledger["traced"] = True
    return LocalExistenceEstimate(regime, q, qp, T, ledger, bound)


# ---------------------------------------------------------------- small-data criterion


def q_star(n: int, qprime: float) -> float:
    return n / (n + 1 - n / qprime)


def _p_interval(n: int, qprime: float) -> tuple[float, float]:
    lo = max(q_star(n, qprime), 1 / (1 - 1 / (2 * qprime)), 1.0)
    hi = 1 / (1 - 1 / qprime + 1 / (2 * n))
    return lo, hi


def weak_young_estimate(n: int, p: float, qprime: float) -> float:
    """||(|x|^{-n/q'}) * f||_k / (|||x|^{-n/q'}||_{q',inf} ||f||_p) for a Gaussian f.

    A lower estimate of the sharp weak Young constant (Gaussian trial function).
    The convolution of |x|^{-lam} with exp(-|x|^2) is the radial function
    pi^{n/2} Gamma((n-lam)/2)/Gamma(n/2) 1F1(lam/2; n/2; -rho^2).
    """
    lam = n / qprime
    inv_k = 1 / p + 1 / qprime - 1
    if not 0 < inv_k < 1:
        raise ValueError("exponents outside the weak Young range")
    k = 1 / inv_k
    pref = math.pi ** (n / 2) * math.exp(math.lgamma((n - lam) / 2) - math.lgamma(n / 2))
    conv = lambda r: pref * special.hyp1f1(lam / 2, n / 2, -r * r)
    # large-rho asymptote Gamma(n/2)/Gamma((n-lam)/2) rho^{-lam} gives the tail in closed form
    R = 30.0
    head, _ = integrate.quad(lambda r: r ** (n - 1) * conv(r) ** k, 0, R, limit=400)
    tail = (math.pi ** (n / 2)) ** k * R ** (n - lam * k) / (lam * k - n)
    fk = (sphere_area(n) * (head + tail)) ** (1 / k)
    f_p = (math.pi / p) ** (n / (2 * p))
    weak = ball_volume(n) ** (1 / qprime)
    return fk / (weak * f_p)


@dataclass(frozen=True)
class SmallDataCriterion:
    q_star: float
    small_enough: bool
    bound_used: float
    admissible: bool
    constants: dict
    empirical: bool


def q_star_smallness(n: int, qprime: float, u0_qstar_norm: float, weak_norm: float = 1.0,
                     weak_young_constant: float | None = None) -> SmallDataCriterion:
    """q* = n/(n+1-n/q') and the threshold 1/(4 eta C3) on ||u0||_{q*}.

    ``weak_norm`` is ||grad K||_{L^{q',inf}}.  Without ``weak_young_constant``
    the weak Young constant is the Gaussian-trial estimate and the result is
    flagged empirical.  When the admissible p-interval is empty (q' = n) no
    threshold is available and bound_used = 0.
    """
    if n < 2:
        raise ValueError("the small-data criterion needs n >= 2")
    if not 1 < qprime <= n:
        raise ValueError(f"q' must lie in (1, n]; got {qprime}")
    if u0_qstar_norm < 0 or weak_norm < 0:
        raise ValueError("norms must be >= 0")
    qs = q_star(n, qprime)
    lo, hi = _p_interval(n, qprime)
    if not lo < hi:
        return SmallDataCriterion(qs, False, 0.0, False, {"p_interval": (lo, hi)},
                                  weak_young_constant is None)
    p = 0.5 * (lo + hi)
    r = 1 / (2 / p + 1 / qprime - 1)
    cw = weak_young_constant if weak_young_constant is not None else weak_young_estimate(n, p, qprime)
    cl = cw * weak_norm
    e_s = n * (1 / qs - 1 / p)
    b_star = special.beta(1 - e_s, 0.5 * (1 - n * (1 / r - 1 / qs)))
    b_p = special.beta(1 - e_s, 0.5 * (1 - n * (1 / r - 1 / p)))
    b_star, b_p = float(b_star), float(b_p)
    d_star = grad_heat_constant(qs, r, n)
    d_p = grad_heat_constant(p, r, n)
    eta = cl * (d_star * b_star + d_p * b_p)
    c3 = 1.0 + heat_constant(p, qs, n)
    bound = 0.0 if eta == 0 else 1 / (4 * eta * c3)
    if eta == 0:
        bound = math.inf
    consts = {"p": p, "r": r, "p_interval": (lo, hi), "weak_young": cw, "eta": eta, "C3": c3,
              "beta_qstar": b_star, "beta_p": b_p}
    return SmallDataCriterion(qs, bool(u0_qstar_norm < bound), bound, True, consts,
                              weak_young_constant is None)
