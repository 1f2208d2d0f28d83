"""Uniform phase-space grids, sampled symbols and the symmetric 2D Fourier pair

    A~(eta, xi) = 1/(2 pi) \\int dq dp exp(-i(eta q + xi p)) A(q, p)

discretized so that the forward transform samples A~ on a zero-centred dual grid
and the inverse is exact up to rounding.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

BOUNDARY_TOL = 1e-6


class GridError(ValueError):
    """Invalid grid construction or mismatched grids."""


class BoundaryWarning(UserWarning):
    """The sampled function has not decayed at the edge of the grid."""


def _check_axis(lo: float, hi: float, n: int, name: str) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise GridError(f"{name}: bounds must be finite, got ({lo}, {hi})")
    if not hi > lo:
        raise GridError(f"{name}: need max > min, got ({lo}, {hi})")
    if int(n) != n or n < 4 or n % 2:
        raise GridError(f"{name}: count must be an even integer >= 4, got {n}")


def axis_points(lo: float, step: float, n: int) -> np.ndarray:
    return lo + step * np.arange(n)


def dual_points(step: float, n: int) -> np.ndarray:
    """Zero-centred frequencies (k - n/2) * 2 pi / (n step), k = 0..n-1."""
    return (np.arange(n) - n // 2) * (2.0 * np.pi / (n * step))


def _alternating(n: int) -> np.ndarray:
    return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)


def ft_axis(values: np.ndarray, lo: float, step: float, axis: int) -> np.ndarray:
    """Unscaled continuous-FT kernel sum along one axis: sum_j exp(-i k_m x_j) v_j."""
    n = values.shape[axis]
    shape = [1] * values.ndim
    shape[axis] = n
    sign = _alternating(n).reshape(shape)
    phase = np.exp(-1j * dual_points(step, n) * lo).reshape(shape)
    return np.fft.fft(values * sign, axis=axis) * phase


def ift_axis(values: np.ndarray, lo: float, step: float, axis: int) -> np.ndarray:
    """Unscaled inverse kernel sum along one axis: sum_m exp(i k_m x_j) v_m."""
    n = values.shape[axis]
    shape = [1] * values.ndim
    shape[axis] = n
    sign = _alternating(n).reshape(shape)
    phase = np.exp(1j * dual_points(step, n) * lo).reshape(shape)
    return np.fft.ifft(values * phase, axis=axis) * n * sign


@dataclass(frozen=True)
class PhaseGrid:
    q_min: float
    q_max: float
    n_q: int
    p_min: float
    p_max: float
    n_p: int

    def __post_init__(self):
        _check_axis(self.q_min, self.q_max, self.n_q, "q")
        _check_axis(self.p_min, self.p_max, self.n_p, "p")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_q, self.n_p)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def deta(self) -> float:
        return 2.0 * np.pi / (self.n_q * self.dq)

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / (self.n_p * self.dp)

    @cached_property
    def q(self) -> np.ndarray:
        return axis_points(self.q_min, self.dq, self.n_q)

    @cached_property
    def p(self) -> np.ndarray:
        return axis_points(self.p_min, self.dp, self.n_p)

    @cached_property
    def eta(self) -> np.ndarray:
        return dual_points(self.dq, self.n_q)

    @cached_property
    def xi(self) -> np.ndarray:
        return dual_points(self.dp, self.n_p)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.p, indexing="ij")

    def dual_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.eta, self.xi, indexing="ij")

    def sample(self, func) -> "GridFunction":
        Q, P = self.mesh()
        return GridFunction(self, np.broadcast_to(func(Q, P), self.shape))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape, dtype=complex))

    def ones(self) -> "GridFunction":
        return GridFunction(self, np.ones(self.shape, dtype=complex))


def make_grid(q_min, q_max, n_q, p_min, p_max, n_p) -> PhaseGrid:
    return PhaseGrid(float(q_min), float(q_max), int(n_q), float(p_min), float(p_max), int(n_p))


def _same_grid(a: PhaseGrid, b: PhaseGrid) -> None:
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


class _Sampled:
    """Shared value semantics for GridFunction and SpectralFunction."""

    def __init__(self, grid: PhaseGrid, values):
        values = np.array(values, dtype=complex)
        if values.shape != grid.shape:
            raise GridError(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("values must be finite")
        self.grid = grid
        self.values = values

    def _new(self, values):
        return type(self)(self.grid, values)

    def _other(self, other):
        if isinstance(other, _Sampled):
            if type(other) is not type(self):
                raise TypeError("cannot mix position-space and spectral samples")
            _same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return self._new(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.values - self._other(other))

    def __rsub__(self, other):
        return self._new(self._other(other) - self.values)

    def __mul__(self, other):
        return self._new(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.values / scalar)

    def __neg__(self):
        return self._new(-self.values)

    def conj(self):
        return self._new(self.values.conj())

    def norm(self) -> float:
        """Discrete L2 norm including the cell measure."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self._cell()))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.values.shape}, max|.|={np.abs(self.values).max():.3g})"


class GridFunction(_Sampled):
    """Complex samples A(q_j, p_k) on a PhaseGrid (row index = q)."""

    def _cell(self):
        return self.grid.dq * self.grid.dp

    @property
    def real(self) -> "GridFunction":
        return self._new(self.values.real)

    def max_imag(self) -> float:
        return float(np.abs(self.values.imag).max())


class SpectralFunction(_Sampled):
    """Samples of A~(eta_j, xi_k) on the dual grid, physical (zero-centred) order."""

    def _cell(self):
        return self.grid.deta * self.grid.dxi


def forward_ft(f: GridFunction) -> SpectralFunction:
    g = f.grid
    out = ft_axis(ft_axis(f.values, g.q_min, g.dq, 0), g.p_min, g.dp, 1)
    return SpectralFunction(g, out * (g.dq * g.dp / (2.0 * np.pi)))


def inverse_ft(F: SpectralFunction) -> GridFunction:
    g = F.grid
    out = ift_axis(ift_axis(F.values, g.q_min, g.dq, 0), g.p_min, g.dp, 1)
    return GridFunction(g, out * (g.deta * g.dxi / (2.0 * np.pi)))


def boundary_ratio(values: np.ndarray) -> float:
    """max |f| on the outer frame of the array divided by max |f| overall."""
    a = np.abs(values)
    peak = a.max()
    if peak == 0.0:
        return 0.0
    edge = 0.0
    for axis in range(a.ndim):
        edge = max(edge, np.take(a, 0, axis=axis).max(), np.take(a, -1, axis=axis).max())
    return float(edge / peak)


def integrate(f: GridFunction, warn: bool = True) -> complex:
    """Riemann sum of f over the grid; warns if f has not decayed at the edges."""
    if warn and boundary_ratio(f.values) > BOUNDARY_TOL:
        warnings.warn(
            f"integrand has not decayed at the grid boundary (edge/peak = {boundary_ratio(f.values):.2e})",
            BoundaryWarning,
            stacklevel=2,
        )
    return complex(f.values.sum() * f.grid.dq * f.grid.dp)


def pairing(a: GridFunction, b: GridFunction, w) -> complex:
    """The hermitian form <a, b> = \\int conj(a) *_w b dz."""
    from .star import star

    _same_grid(a.grid, b.grid)
    return integrate(star(a.conj(), b, w), warn=False)


def band_mask(grid: PhaseGrid) -> np.ndarray:
    """Boolean mask of the symmetric frequency band (Nyquist row/column excluded)."""
    m = np.ones(grid.shape, dtype=bool)
    m[0, :] = False
    m[:, 0] = False
    return m


def drop_nyquist(values: np.ndarray) -> np.ndarray:
    """Copy of a spectral array with every axis's Nyquist slice set to zero."""
    out = np.array(values, dtype=complex)
    for axis in range(out.ndim):
        idx = [slice(None)] * out.ndim
        idx[axis] = 0
        out[tuple(idx)] = 0.0
    return out
