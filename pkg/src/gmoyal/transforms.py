"""Quantization of phase-space symbols to position-basis kernels and back.

All routes pass through the Weyl symbol: a symbol under weight Omega is first
mapped by its spectrum times Omega, and the Weyl kernel

    A(x, x') = 1/(2 pi hbar) \\int dp g((x + x')/2, p) exp(i p (x - x') / hbar)

is assembled antidiagonal by antidiagonal from g interpolated to the half-step
grid of midpoints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .grid import (GridError, GridFunction, PhaseGrid, SpectralFunction, drop_nyquist,
                   forward_ft, integrate, inverse_ft)
from .orderings import (WeightFunction, apply_weight, check_hermiticity,
                        check_marginal_condition, check_trace_pairing)

INTERP_TOL = 1e-6


class InterpolationWarning(UserWarning):
    """A symbol is not resolved well enough for band-limited interpolation."""


class TransformError(ValueError):
    """Basis and grid are incompatible, or a weight precondition fails."""


@dataclass(frozen=True)
class PositionBasis:
    x_min: float
    x_max: float
    n_x: int
    hbar: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max) and self.x_max > self.x_min):
            raise TransformError(f"bad basis bounds ({self.x_min}, {self.x_max})")
        if int(self.n_x) != self.n_x or self.n_x < 4 or self.n_x % 2:
            raise TransformError(f"basis size must be an even integer >= 4, got {self.n_x}")
        if not self.hbar > 0:
            raise TransformError("hbar must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def momentum_band(self) -> float:
        """Width of the momentum window resolved by the kernel sampling."""
        return math.pi * self.hbar / self.dx

    @classmethod
    def for_grid(cls, grid: PhaseGrid, hbar: float = 1.0, margin: float = 0.25) -> "PositionBasis":
        """Smallest even basis whose momentum band covers the grid's p range, with
        ``margin`` times each range added on both sides: in x so off-diagonal kernel
        entries near the edge stay inside the box, in p so the periodic images of
        the Wigner sum stay clear of the grid."""
        span_q = grid.q_max - grid.q_min
        span_p = (grid.p_max - grid.p_min) * (1 + 2 * margin)
        lo, hi = grid.q_min - margin * span_q, grid.q_max + margin * span_q
        n = math.ceil((hi - lo) * span_p / (math.pi * hbar) - 1e-9)
        n = max(n + (n % 2), 4)
        return cls(lo, hi, n, hbar)


class OperatorMatrix:
    """Kernel density samples A(x_j, x_k); the operator acts as entries * dx."""

    def __init__(self, basis: PositionBasis, entries):
        entries = np.array(entries, dtype=complex)
        if entries.shape != (basis.n_x, basis.n_x):
            raise TransformError(f"matrix shape {entries.shape} does not match basis size {basis.n_x}")
        if not np.all(np.isfinite(entries)):
            raise TransformError("matrix entries must be finite")
        self.basis = basis
        self.entries = entries

    @classmethod
    def from_action(cls, basis: PositionBasis, action) -> "OperatorMatrix":
        return cls(basis, np.asarray(action) / basis.dx)

    @classmethod
    def identity(cls, basis: PositionBasis) -> "OperatorMatrix":
        return cls(basis, np.eye(basis.n_x) / basis.dx)

    @property
    def action(self) -> np.ndarray:
        return self.entries * self.basis.dx

    def _check(self, other):
        if not isinstance(other, OperatorMatrix) or other.basis != self.basis:
            raise TransformError("operator basis mismatch")

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.basis, self.entries @ other.entries * self.basis.dx)

    def __add__(self, other):
        self._check(other)
        return OperatorMatrix(self.basis, self.entries + other.entries)

    def __sub__(self, other):
        self._check(other)
        return OperatorMatrix(self.basis, self.entries - other.entries)

    def __mul__(self, c):
        return OperatorMatrix(self.basis, self.entries * c)

    __rmul__ = __mul__

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.entries.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.entries) * self.basis.dx)

    def hermitian(self, tol: float = 1e-8) -> bool:
        scale = max(1.0, float(np.abs(self.entries).max()))
        return bool(np.abs(self.entries - self.entries.conj().T).max() <= tol * scale)


class PureState:
    """Normalized wavefunction samples psi(x_j)."""

    def __init__(self, basis: PositionBasis, amplitudes, normalize: bool = False):
        psi = np.array(amplitudes, dtype=complex)
        if psi.shape != (basis.n_x,):
            raise TransformError("amplitude length does not match basis")
        nrm = float(np.sum(np.abs(psi) ** 2) * basis.dx)
        if normalize:
            psi = psi / math.sqrt(nrm)
        elif abs(nrm - 1.0) > 1e-10:
            raise TransformError(f"state is not normalized (norm^2 = {nrm:.12g})")
        self.basis = basis
        self.psi = psi

    @classmethod
    def oscillator(cls, basis: PositionBasis, n: int = 0) -> "PureState":
        """n-th eigenfunction of (p^2 + q^2)/2 with the basis hbar."""
        h = basis.hbar
        y = basis.x / math.sqrt(h)
        prev, cur = np.zeros_like(y), np.pi ** -0.25 * np.exp(-y**2 / 2)
        for k in range(n):
            prev, cur = cur, math.sqrt(2.0 / (k + 1)) * y * cur - math.sqrt(k / (k + 1)) * prev
        return cls(basis, cur / h**0.25, normalize=True)

    def projector(self) -> OperatorMatrix:
        return OperatorMatrix(self.basis, np.outer(self.psi, self.psi.conj()))

    def overlap(self, other: "PureState") -> complex:
        """<other|self>."""
        return complex(np.sum(other.psi.conj() * self.psi) * self.basis.dx)

    def momentum_density(self, p: np.ndarray) -> np.ndarray:
        """|psi~(p / hbar)|^2 with psi~(k) = (2 pi)^-1/2 \\int psi(x) exp(-i k x) dx."""
        k = np.asarray(p)[:, None] / self.basis.hbar
        amp = np.exp(-1j * k * self.basis.x[None, :]) @ self.psi * self.basis.dx / math.sqrt(2 * math.pi)
        return np.abs(amp) ** 2


# ---------------------------------------------------------- symbol <-> Weyl

def to_weyl_symbol(f: GridFunction, w: WeightFunction) -> GridFunction:
    """Weyl symbol of the operator that f represents under w (spectrum times Omega)."""
    if w.family == "weyl":
        return f
    spectrum = drop_nyquist(forward_ft(f).values)
    return inverse_ft(SpectralFunction(f.grid, apply_weight(spectrum, w.on_grid(f.grid), 1)))


def from_weyl_symbol(f_w: GridFunction, w: WeightFunction) -> GridFunction:
    """Inverse of to_weyl_symbol; raises WeightOverflowError when 1/Omega would
    amplify resolved modes beyond the growth cap."""
    if w.family == "weyl":
        return f_w
    spectrum = drop_nyquist(forward_ft(f_w).values)
    return inverse_ft(SpectralFunction(f_w.grid, apply_weight(spectrum, w.on_grid(f_w.grid), -1)))


# -------------------------------------------------- interpolation matrices

def _trig_matrix(src_lo: float, period: float, n_src: int, targets: np.ndarray) -> np.ndarray:
    """Band-limited periodic interpolation from n_src equispaced samples to targets."""
    step = period / n_src
    k = (np.arange(n_src) - n_src // 2) * (2 * np.pi / period)
    k = k[1:]  # symmetric band, Nyquist dropped
    xs = src_lo + step * np.arange(n_src)
    out = np.exp(1j * np.subtract.outer(targets, xs)[:, :, None] * k[None, None, :]).sum(axis=2)
    return (out / n_src).real


@lru_cache(maxsize=16)
def _up_matrix(grid: PhaseGrid, basis: PositionBasis) -> np.ndarray:
    """grid q samples -> the 2 n_x half-step midpoints of the basis (zero outside
    the grid's q range)."""
    mids = basis.x_min + 0.5 * basis.dx * np.arange(2 * basis.n_x)
    out = _trig_matrix(grid.q_min, grid.q_max - grid.q_min, grid.n_q, mids)
    outside = (mids < grid.q_min - 1e-12) | (mids >= grid.q_max - 1e-12)
    out[outside] = 0.0
    return out


@lru_cache(maxsize=16)
def _down_matrix(grid: PhaseGrid, basis: PositionBasis) -> np.ndarray:
    """basis half-step midpoints -> grid q samples."""
    return _trig_matrix(basis.x_min, basis.x_max - basis.x_min, 2 * basis.n_x, grid.q)


def _check_compatible(grid: PhaseGrid, basis: PositionBasis, hbar: float):
    if basis.x_min > grid.q_min + 1e-12 or basis.x_max < grid.q_max - 1e-12:
        raise TransformError(
            f"basis range ({basis.x_min}, {basis.x_max}) must contain the grid q range "
            f"({grid.q_min}, {grid.q_max})"
        )
    if not math.isclose(hbar, basis.hbar):
        raise TransformError(f"weight hbar {hbar} differs from basis hbar {basis.hbar}")
    span = grid.p_max - grid.p_min
    if span > basis.momentum_band * (1 + 1e-12):
        raise TransformError(
            f"momentum extent {span:g} exceeds the basis band pi*hbar/dx = {basis.momentum_band:g}; "
            f"use at least {PositionBasis.for_grid(grid, hbar).n_x} basis points"
        )


def _warn_unresolved(g: GridFunction):
    spectrum = np.abs(forward_ft(g).values)
    peak = spectrum.max()
    if peak == 0:
        return
    edge = max(spectrum[:2, :].max(), spectrum[-1, :].max())
    if edge > INTERP_TOL * peak:
        warnings.warn(
            f"symbol carries {edge / peak:.1e} of its peak spectrum at the q-band edge; "
            "midpoint interpolation may be inaccurate",
            InterpolationWarning,
            stacklevel=3,
        )


def _phase(grid: PhaseGrid, basis: PositionBasis, sign: float) -> np.ndarray:
    """exp(sign * i p_l d dx / hbar) for d = -(n-1)..(n-1); shape (n_p, 2n-1)."""
    d = np.arange(-(basis.n_x - 1), basis.n_x)
    return np.exp(sign * 1j * np.outer(grid.p, d) * basis.dx / basis.hbar)


def quantize(f, w: WeightFunction, basis: PositionBasis) -> OperatorMatrix:
    """Operator kernel of the symbol f under weight w.

    ``f`` may be a GridFunction (decaying, band-limited symbol) or a CPolynomial,
    which is quantized exactly and realized with discrete Q and P.
    """
    from .symbolic import CPolynomial, quantize_poly, realize_matrix

    if isinstance(f, CPolynomial):
        return realize_matrix(quantize_poly(f, w), basis)
    grid = f.grid
    _check_compatible(grid, basis, w.hbar)
    g = to_weyl_symbol(f, w)
    _warn_unresolved(g)
    n = basis.n_x
    mid = _up_matrix(grid, basis) @ g.values  # (2n, n_p), rows = midpoints s
    K = (mid @ _phase(grid, basis, 1.0)) * (grid.dp / (2 * math.pi * basis.hbar))  # (2n, 2n-1)
    # the p quadrature makes K periodic in x - x' with period 2 pi hbar / dp;
    # keep the principal window only
    sep = np.abs(np.arange(-(n - 1), n)) * basis.dx
    K[:, sep >= math.pi * basis.hbar / grid.dp] = 0.0
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return OperatorMatrix(basis, K[j + k, j - k + n - 1])


def weyl_symbol_of(M: OperatorMatrix, grid: PhaseGrid) -> GridFunction:
    """A_w(q, p) = 2 \\int dt exp(2 i p t / hbar) <q - t|M|q + t> on the grid."""
    basis = M.basis
    _check_compatible(grid, basis, basis.hbar)
    n = basis.n_x
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    # antidiagonal table T[s, d] with s = j + k, d = k - j
    T = np.zeros((2 * n, 2 * n - 1), dtype=complex)
    T[j + k, k - j + n - 1] = M.entries
    mid = 2 * basis.dx * (T @ _phase(grid, basis, 1.0).T)  # (2n, n_p)
    return GridFunction(grid, _down_matrix(grid, basis) @ mid)


def dequantize(M: OperatorMatrix, w: WeightFunction, grid: PhaseGrid) -> GridFunction:
    if not math.isclose(w.hbar, M.basis.hbar):
        raise TransformError(f"weight hbar {w.hbar} differs from basis hbar {M.basis.hbar}")
    return from_weyl_symbol(weyl_symbol_of(M, grid), w)


# ------------------------------------------------------- traces, marginals

def trace_pair(f: GridFunction, g: GridFunction, w: WeightFunction) -> complex:
    """Tr(Op(f) Op(g)) = Omega(0) / (2 pi hbar) \\int f * g."""
    from .star import star

    return complex(w(0.0, 0.0)) / (2 * math.pi * w.hbar) * integrate(star(f, g, w), warn=False)


def trace_one(f: GridFunction, w: WeightFunction) -> complex:
    return integrate(f, warn=False) / (2 * math.pi * w.hbar)


def marginals(rho: GridFunction, w: WeightFunction) -> tuple[np.ndarray, np.ndarray]:
    """(\\int rho dp over q, \\int rho dq over p); for a pure state these are
    2 pi hbar |psi(q)|^2 and 2 pi |psi~(p/hbar)|^2."""
    if not check_marginal_condition(w, rho.grid):
        raise TransformError(f"{w.describe()} is not 1 on the frequency axes; marginals are not densities")
    g = rho.grid
    return rho.values.sum(axis=1) * g.dp, rho.values.sum(axis=0) * g.dq


@dataclass
class PositivityWitness:
    overlap: complex
    min_symbol: tuple[float, float]
    symbol_overlap_integral: complex

    @property
    def negative_somewhere(self) -> bool:
        return min(self.min_symbol) < -1e-6


def positivity_witness(psi: PureState, phi: PureState, w: WeightFunction,
                       grid: PhaseGrid) -> PositivityWitness:
    """Overlap <phi|psi>, grid minima of both state symbols and \\int A_psi A_phi.

    For weights with the trace-pairing and hermiticity properties the integral
    equals 2 pi hbar |<phi|psi>|^2, so orthogonal states force a sign change.
    """
    if not (check_trace_pairing(w, grid) and check_hermiticity(w, grid)):
        raise TransformError(f"{w.describe()} lacks the trace-pairing or hermiticity property")
    a = dequantize(psi.projector(), w, grid)
    b = dequantize(phi.projector(), w, grid)
    return PositivityWitness(
        overlap=psi.overlap(phi),
        min_symbol=(float(a.values.real.min()), float(b.values.real.min())),
        symbol_overlap_integral=integrate(a * b, warn=False),
    )


def matrix_oracle_product(f: GridFunction, g: GridFunction, w: WeightFunction,
                          basis: PositionBasis | None = None) -> GridFunction:
    """dequantize(quantize(f) quantize(g)): the operator-side star product."""
    basis = basis or PositionBasis.for_grid(f.grid, w.hbar)
    return dequantize(quantize(f, w, basis) @ quantize(g, w, basis), w, f.grid)


def check_basis(grid: PhaseGrid, basis: PositionBasis, hbar: float) -> None:
    _check_compatible(grid, basis, hbar)


__all__ = [
    "GridError", "InterpolationWarning", "OperatorMatrix", "PositionBasis", "PositivityWitness",
    "PureState", "TransformError", "dequantize", "from_weyl_symbol", "marginals",
    "matrix_oracle_product", "positivity_witness", "quantize", "to_weyl_symbol", "trace_one",
    "trace_pair", "weyl_symbol_of",
]
