"""Weight functions Omega(eta, xi) selecting an operator ordering, and pointwise
checks of the structural conditions a weight may satisfy."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import PhaseGrid, SpectralFunction, band_mask, inverse_ft, make_grid

FAMILIES = ("weyl", "lambda", "gauss", "product")
SCALINGS = ("fixed", "linear")
EXP_LIMIT = 700.0
# Largest factor |Omega| or |1/Omega| the spectral gate lets through on retained modes.
GROWTH_CAP = 1e12
# Spectral modes below this fraction of the peak are dropped before a growing factor hits them.
SPECTRAL_FLOOR = 1e-15
PREDICATE_TOL = 1e-12


class WeightOverflowError(ArithmeticError):
    """A weight or its reciprocal is too large to evaluate or apply on the band."""


@dataclass(frozen=True)
class WeightFunction:
    """Omega = exp(lam * eta * xi + kappa * (eta^2 + xi^2)), restricted per family.

    With ``scaling="linear"`` the stored ``lam``/``kappa`` are coefficients of hbar,
    so the effective exponent vanishes as hbar -> 0.
    """

    family: str = "weyl"
    hbar: float = 1.0
    lam: complex = 0.0
    kappa: float = 0.0
    scaling: str = "fixed"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}; expected one of {FAMILIES}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown hbar scaling {self.scaling!r}; expected one of {SCALINGS}")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError(f"hbar must be positive and finite, got {self.hbar}")
        if not (np.isfinite(complex(self.lam)) and np.isfinite(self.kappa)):
            raise ValueError("weight parameters must be finite")
        if np.iscomplexobj(self.kappa) or isinstance(self.kappa, complex):
            raise ValueError("kappa must be real")
        if self.family in ("weyl", "gauss") and self.lam != 0:
            raise ValueError(f"{self.family} weight takes no lambda parameter")
        if self.family in ("weyl", "lambda") and self.kappa != 0:
            raise ValueError(f"{self.family} weight takes no kappa parameter")

    @property
    def mu(self) -> complex:
        return 0.5j * self.hbar

    @property
    def lam_eff(self) -> complex:
        return complex(self.lam) * (self.hbar if self.scaling == "linear" else 1.0)

    @property
    def kappa_eff(self) -> float:
        return float(self.kappa) * (self.hbar if self.scaling == "linear" else 1.0)

    def with_hbar(self, hbar: float) -> "WeightFunction":
        return replace(self, hbar=float(hbar))

    def log(self, eta, xi) -> np.ndarray:
        """The exponent log Omega(eta, xi)."""
        eta = np.asarray(eta, dtype=float)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.broadcast(eta, xi).shape, dtype=complex)
        if self.lam_eff != 0:
            out = out + self.lam_eff * eta * xi
        if self.kappa_eff != 0:
            out = out + self.kappa_eff * (eta**2 + xi**2)
        return out

    def __call__(self, eta, xi) -> np.ndarray:
        return eval_weight(self, eta, xi)

    def on_grid(self, grid: PhaseGrid) -> np.ndarray:
        E, X = grid.dual_mesh()
        return eval_weight(self, E, X)

    def describe(self) -> str:
        parts = [self.family, f"hbar={self.hbar:g}"]
        if self.family in ("lambda", "product"):
            lam = complex(self.lam)
            parts.append(f"lambda={lam.real:g}" if lam.imag == 0 else f"lambda={lam:g}")
        if self.family in ("gauss", "product"):
            parts.append(f"kappa={self.kappa:g}")
        if self.scaling == "linear":
            parts.append("(x hbar)")
        return " ".join(parts)


def weyl(hbar: float = 1.0) -> WeightFunction:
    return WeightFunction("weyl", hbar)


def lambda_family(lam: complex, hbar: float = 1.0, scaling: str = "fixed") -> WeightFunction:
    return WeightFunction("lambda", hbar, lam=lam, scaling=scaling)


def gauss(kappa: float, hbar: float = 1.0, scaling: str = "fixed") -> WeightFunction:
    return WeightFunction("gauss", hbar, kappa=float(kappa), scaling=scaling)


def product(lam: complex, kappa: float, hbar: float = 1.0, scaling: str = "fixed") -> WeightFunction:
    return WeightFunction("product", hbar, lam=lam, kappa=float(kappa), scaling=scaling)


def standard_ordering(hbar: float = 1.0) -> WeightFunction:
    """The QP-ordered weight exp(-mu eta xi) as a member of the lambda family."""
    return lambda_family(-0.5j * hbar, hbar)


def eval_weight(w: WeightFunction, eta, xi) -> np.ndarray:
    expo = w.log(eta, xi)
    top = float(np.max(expo.real)) if expo.size else 0.0
    if top > EXP_LIMIT:
        raise WeightOverflowError(
            f"{w.describe()}: |Omega| reaches exp({top:.1f}) on the requested frequencies"
        )
    out = np.exp(expo)
    return out if out.ndim else complex(out)


def weight_bound(w: WeightFunction, grid: PhaseGrid) -> tuple[float, float]:
    """(max log|Omega|, max log|1/Omega|) over the grid band."""
    E, X = grid.dual_mesh()
    re = w.log(E, X).real[band_mask(grid)]
    return float(re.max()), float(-re.min())


def noise_floor(spectrum: np.ndarray, rim: float = 0.9) -> float:
    """Twice the largest magnitude on the outer rim of a centred spectrum."""
    spectrum = np.abs(np.asarray(spectrum))
    ring = np.zeros(spectrum.shape)
    for axis, n in enumerate(spectrum.shape):
        shape = [1] * spectrum.ndim
        shape[axis] = n
        frac = np.abs(np.arange(n) - n // 2) / max(n // 2 - 1, 1)
        ring = np.maximum(ring, frac.reshape(shape))
    ring = (ring > rim) & (ring <= 1.0)
    if not ring.any():
        return 0.0
    return 2.0 * float(spectrum[ring].max())


def apply_weight(spectrum: np.ndarray, omega: np.ndarray, power: int = 1,
                 floor: float = SPECTRAL_FLOOR, cap: float = GROWTH_CAP,
                 noise: float | str = "auto") -> np.ndarray:
    """spectrum * omega**power with a filter on amplifying modes.

    Where |factor| > 1, modes whose magnitude is below ``floor`` times the peak are
    set to zero first (they carry rounding noise only), as are modes below the
    absolute ``noise`` level (by default measured on the outer rim of the band,
    where a resolved symbol has only rounding left); a retained mode with
    |factor| > ``cap`` raises WeightOverflowError.
    """
    factor = omega if power == 1 else 1.0 / omega
    spectrum = np.asarray(spectrum, dtype=complex)
    if noise == "auto":
        noise = noise_floor(spectrum)
    mag = np.abs(factor)
    grows = mag > 1.0
    if not grows.any():
        return spectrum * factor
    peak = np.abs(spectrum).max()
    keep = np.abs(spectrum) > max(floor * peak, noise)
    drop = grows & ~keep
    out = np.where(drop, 0.0, spectrum * np.where(drop, 0.0, factor))
    bad = grows & keep & (mag > cap)
    if bad.any():
        raise WeightOverflowError(
            f"weight factor reaches {mag[bad].max():.3e} on significant spectral modes (cap {cap:.0e})"
        )
    return out


def inverse_kernel_omega(w: WeightFunction, grid: PhaseGrid):
    """omega(z) = 1/(2 pi) \\int exp(i sigma z) / Omega(sigma) dsigma on the grid."""
    _, grow = weight_bound(w, grid)
    if grow > np.log(GROWTH_CAP):
        raise WeightOverflowError(
            f"{w.describe()}: 1/Omega reaches exp({grow:.1f}) on the band; use the spectral route"
        )
    inv = np.where(band_mask(grid), 1.0 / w.on_grid(grid), 0.0)
    return inverse_ft(SpectralFunction(grid, inv))


_DEFAULT_GRID = make_grid(-8, 8, 64, -8, 8, 64)


def _band(w: WeightFunction, grid: PhaseGrid | None):
    grid = grid or _DEFAULT_GRID
    E, X = grid.dual_mesh()
    m = band_mask(grid)
    return E[m], X[m]


def _close(a, b, tol=PREDICATE_TOL) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(a))))


def check_trace_pairing(w: WeightFunction, grid: PhaseGrid | None = None) -> bool:
    """Omega(s) Omega(-s) == Omega(0) on the band."""
    E, X = _band(w, grid)
    return _close(w(E, X) * w(-E, -X), w(0.0, 0.0))


def check_hermiticity(w: WeightFunction, grid: PhaseGrid | None = None) -> bool:
    """Omega(s) == conj(Omega(-s)) on the band: real symbols map to hermitian operators."""
    E, X = _band(w, grid)
    return _close(w(E, X), np.conj(w(-E, -X)))


def check_marginal_condition(w: WeightFunction, grid: PhaseGrid | None = None) -> bool:
    """Omega == 1 on both frequency axes."""
    E, X = _band(w, grid)
    z = np.zeros_like(E)
    return _close(w(E, z), 1.0) and _close(w(z, X), 1.0)


def check_classical_limit(w: WeightFunction, grid: PhaseGrid | None = None) -> bool:
    """Does Omega tend to 1 pointwise as hbar -> 0?

    The exponent is sampled at hbar * {1, 1/2, 1/4, 1/8}; it must either vanish
    or shrink by at least a factor 0.75 at each halving.
    """
    E, X = _band(w, grid)
    sizes = [float(np.max(np.abs(w.with_hbar(w.hbar * s).log(E, X)), initial=0.0))
             for s in (1.0, 0.5, 0.25, 0.125)]
    if max(sizes) <= PREDICATE_TOL:
        return True
    return all(b <= 0.75 * a for a, b in zip(sizes, sizes[1:]))


@dataclass(frozen=True)
class JointWeight:
    """Weight on a two-party frequency space (s_sys, s_res).

    Omega = Omega_sys(s_sys) * Omega_res(s_res) * exp(cross * eta_sys * xi_res).
    """

    sys: WeightFunction
    res: WeightFunction
    cross: float = 0.0

    @property
    def hbar(self) -> float:
        return self.sys.hbar

    def log(self, es, xs, er, xr):
        out = self.sys.log(es, xs) + self.res.log(er, xr)
        if self.cross:
            out = out + self.cross * np.asarray(es) * np.asarray(xr)
        return out

    def __call__(self, es, xs, er, xr):
        expo = self.log(es, xs, er, xr)
        if np.max(expo.real) > EXP_LIMIT:
            raise WeightOverflowError("joint weight overflows on the requested frequencies")
        return np.exp(expo)


def check_factorization(w_joint: JointWeight, w_sys: WeightFunction, w_res: WeightFunction,
                        n: int = 16, extent: float = 6.0) -> bool:
    """Omega(s_sys, s_res) == Omega(s_sys, 0) * Omega(0, s_res), with the marginals
    equal to the given subsystem weights, on an n^4 band."""
    g = make_grid(-extent, extent, n, -extent, extent, n)
    f = g.eta[1:]
    es, xs, er, xr = np.meshgrid(f, f, f, f, indexing="ij")
    z = np.zeros_like(es)
    joint = w_joint(es, xs, er, xr)
    left = w_joint(es, xs, z, z)
    right = w_joint(z, z, er, xr)
    return (_close(joint, left * right) and _close(left, w_sys(es, xs))
            and _close(right, w_res(er, xr)))
