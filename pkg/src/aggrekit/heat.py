"""Heat kernel, heat propagator and the L^q -> L^p smoothing constants.

All constants come from Young's inequality with the exact Lebesgue norms
of G(., t) and grad G(., t) on R^n, so that

    ||G(t) * f||_p      <= C(p, q) t^{-(n/2)(1/q - 1/p)}       ||f||_q
    ||grad G(t) * f||_p <= D(p, q) t^{-(n/2)(1/q - 1/p) - 1/2} ||f||_q

for 1 <= q <= p <= inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, forward, inverse


def heat_kernel_value(x, t: float, n: int):
    if not t > 0:
        raise ValueError("t must be > 0")
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1) if x.ndim and x.shape[-1] == n else x * x
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-r2 / (4 * t))


def apply_heat(f: Field, t: float) -> Field:
    """G(., t) * f on the torus (exact Fourier multiplier exp(-|xi|^2 t))."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return f.copy()
    out = inverse(f.grid, np.exp(-f.grid.xi_sq * t) * forward(f))
    return Field(f.grid, out, f.t + t, f.density)


def _conj_young(p: float, q: float) -> float:
    """r with 1 + 1/p = 1/r + 1/q."""
    if q > p:
        raise ValueError("heat estimates need q <= p")
    inv_r = 1.0 + (0.0 if math.isinf(p) else 1.0 / p) - (0.0 if math.isinf(q) else 1.0 / q)
    return math.inf if inv_r == 0 else 1.0 / inv_r


def heat_lq_norm(t: float, q: float, n: int) -> float:
    """||G(., t)||_{L^q(R^n)}."""
    if not t > 0:
        raise ValueError("t must be > 0")
    if not q >= 1:
        raise ValueError("q must be >= 1")
    if math.isinf(q):
        return (4 * math.pi * t) ** (-n / 2)
    return (4 * math.pi * t) ** (-(n / 2) * (1 - 1 / q)) * q ** (-n / (2 * q))


def grad_heat_lq_norm(t: float, r: float, n: int) -> float:
    """||grad G(., t)||_{L^r(R^n)} (Euclidean length of the gradient)."""
    if not t > 0:
        raise ValueError("t must be > 0")
    if math.isinf(r):
        # max of rho/(2t) exp(-rho^2/4t) at rho = sqrt(2t)
        return math.sqrt(2 * t) * math.exp(-0.5) / (2 * t) * (4 * math.pi * t) ** (-n / 2)
    log_rr = (
        -r * math.log(2 * t)
        - (n * r / 2) * math.log(4 * math.pi * t)
        + (n / 2) * math.log(math.pi)
        - math.lgamma(n / 2)
        + ((r + n) / 2) * math.log(4 * t / r)
        + math.lgamma((r + n) / 2)
    )
    return math.exp(log_rr / r)


def grad_heat_l1_norm(t: float, n: int) -> float:
    if not t > 0:
        raise ValueError("t must be > 0")
    return t ** -0.5 * math.exp(math.lgamma((n + 1) / 2) - math.lgamma(n / 2))


def heat_constant(p: float, q: float, n: int) -> float:
    """C(p, q): t-independent constant of the L^q -> L^p heat estimate."""
    return heat_lq_norm(1.0, _conj_young(p, q), n)


def grad_heat_constant(p: float, q: float, n: int) -> float:
    return grad_heat_lq_norm(1.0, _conj_young(p, q), n)


STANDARD_EXPONENTS = (1.0, 1.5, 2.0, 3.0, 4.0, math.inf)


@dataclass(frozen=True)
class HeatConstants:
    n: int
    exponents: tuple = STANDARD_EXPONENTS
    table: dict = field(default_factory=dict, compare=False)
    grad_table: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for q in self.exponents:
            for p in self.exponents:
                if q <= p:
                    self.table[(p, q)] = heat_constant(p, q, self.n)
                    self.grad_table[(p, q)] = grad_heat_constant(p, q, self.n)

    def C(self, p: float, q: float) -> float:
        return self.table.get((p, q)) or heat_constant(p, q, self.n)

    def D(self, p: float, q: float) -> float:
        return self.grad_table.get((p, q)) or grad_heat_constant(p, q, self.n)
