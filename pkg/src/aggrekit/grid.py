"""Periodic box discretization, density fields and spectral primitives.

The box is [-L, L)^n sampled at x_j = -L + j*h, h = 2L/N.  Transforms use
the convention  f^(xi) = int f exp(-i xi.x) dx  with discrete wavevectors
xi_j = pi*j/L, and are stored in numpy's ``rfftn`` layout (the last axis
keeps only non-negative frequencies; conjugate symmetry is implied).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    half_length: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = int(self.points)
        if n < 8 or n & (n - 1):
            raise ValueError(f"points per dim must be a power of two >= 8, got {self.points}")
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise ValueError("half_length must be positive and finite")
        object.__setattr__(self, "points", n)
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.points)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the full grid shape (``ij`` indexing)."""
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return sum(c * c for c in self.coords)

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, ...]:
        """Components of xi on the rfftn grid, each broadcast to ``spectral_shape``."""
        k = np.pi / self.half_length
        full = k * np.fft.fftfreq(self.points, d=1.0 / self.points)
        half = k * np.fft.rfftfreq(self.points, d=1.0 / self.points)
        axes = [full] * (self.dim - 1) + [half]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return sum(w * w for w in self.wavevectors)

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.points,) * (self.dim - 1) + (self.points // 2 + 1,)

    @cached_property
    def derivative_wavevectors(self) -> tuple[np.ndarray, ...]:
        """Wavevectors with the Nyquist row of each axis zeroed (for odd derivatives)."""
        out = []
        nyq = self.points // 2
        for j, w in enumerate(self.wavevectors):
            w = w.copy()
            idx = [slice(None)] * self.dim
            idx[j] = nyq
            w[tuple(idx)] = 0.0
            out.append(w)
        return tuple(out)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with |j| < N/3 along every axis."""
        cutoff = self.points / 3.0
        kmax = np.pi / self.half_length
        keep = np.ones(self.spectral_shape, dtype=bool)
        for w in self.wavevectors:
            keep &= np.abs(w) / kmax < cutoff
        return keep


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    t: float = 0.0
    density: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v
        if self.t < 0:
            raise ValueError("time tag must be >= 0")

    def negativity_ok(self, rel_tol: float = 1e-8) -> bool:
        """Density validity: min(u) >= -rel_tol * ||u||_inf."""
        vmax = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        return float(self.values.min()) >= -rel_tol * vmax

    def copy(self) -> Field:
        return Field(self.grid, self.values.copy(), self.t, self.density)

    def with_values(self, values, t: float | None = None) -> Field:
        return Field(self.grid, values, self.t if t is None else t, self.density)

    def __mul__(self, c: float) -> Field:
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass
class FourierField:
    """A Fourier multiplier (or transformed field) in rfftn layout."""

    grid: Grid
    modes: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.modes)
        if m.shape == ():
            m = np.full(self.grid.spectral_shape, m[()])
        if m.shape != self.grid.spectral_shape:
            raise ValueError(f"modes shape {m.shape} != {self.grid.spectral_shape}")
        self.modes = m


def sample(grid: Grid, fn, t: float = 0.0) -> Field:
    """Field from a function of the coordinate arrays, ``fn(*coords)``."""
    return Field(grid, np.broadcast_to(fn(*grid.coords), grid.shape).astype(float), t)


def gaussian_bump(grid: Grid, mass: float, width: float, center=None) -> np.ndarray:
    """Samples of a Gaussian with total mass ``mass`` and per-axis std ``width``."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center))
    norm = (2.0 * np.pi * width ** 2) ** (-grid.dim / 2.0)
    return mass * norm * np.exp(-r2 / (2.0 * width ** 2))


def forward(f: Field) -> np.ndarray:
    return np.fft.rfftn(f.values)


def inverse(grid: Grid, modes: np.ndarray) -> np.ndarray:
    return np.fft.irfftn(modes, s=grid.shape, axes=tuple(range(grid.dim)))


def lp_norm(f: Field, p: float) -> float:
    """Midpoint-rule L^p norm; ``p = inf`` gives max |u|."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if np.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum() * f.grid.cell_volume)
    # scale by the max to avoid overflow for large p
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * (np.sum((a / m) ** p) * f.grid.cell_volume) ** (1.0 / p))


def mass_and_moment(f: Field) -> tuple[float, float]:
    hv = f.grid.cell_volume
    return float(f.values.sum() * hv), float(np.sum(f.grid.radius_sq * f.values) * hv)


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def spectral_convolve(f: Field, symbol: FourierField) -> Field:
    _check_grid(f.grid, symbol.grid)
    out = inverse(f.grid, symbol.modes * forward(f))
    return Field(f.grid, out, f.t, density=False)


def spectral_gradient(f: Field) -> tuple[Field, ...]:
    fh = forward(f)
    return tuple(
        Field(f.grid, inverse(f.grid, 1j * w * fh), f.t, density=False)
        for w in f.grid.derivative_wavevectors
    )


def spectral_divergence(components) -> Field:
    grid = components[0].grid
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for w, c in zip(grid.derivative_wavevectors, components):
        _check_grid(grid, c.grid)
        acc += 1j * w * forward(c)
    return Field(grid, inverse(grid, acc), components[0].t, density=False)


def spectral_laplacian(f: Field) -> Field:
    return Field(f.grid, inverse(f.grid, -f.grid.xi_sq * forward(f)), f.t, density=False)
