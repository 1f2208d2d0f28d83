"""Lindblad-type kinetic equations for phase-space symbols.

Bath correlation data enter through their spectra; coupling operators are split
into Bohr-frequency components of the system Hamiltonian; the generator acts on
symbols either through compiled differential operators (polynomial Hamiltonian
and jump symbols) or through nested pairwise star products.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .diffops import CompiledDiffOp, star_operator
from .grid import (GridFunction, PhaseGrid, SpectralFunction, _same_grid, drop_nyquist,
                   forward_ft, integrate, inverse_ft)
from .orderings import WeightFunction, apply_weight, check_hermiticity
from .star import anti_bracket, bracket, star, triple_kernel_sum, _wedge
from .symbolic import CPolynomial, star_poly
from .transforms import OperatorMatrix, PositionBasis, dequantize, quantize

log = logging.getLogger(__name__)

PSD_TOL = 1e-10
DECAY_TOL = 1e-8
STATIONARITY_TOL = 1e-10
AUDIT_TOL = 1e-6
RK4_REAL_BOUND = 2.78  # RK4 stability interval on the negative real axis
STABILITY_SAFETY = 0.5


class KineticsError(ValueError):
    """Invalid kinetic model or correlation data."""


class PSDError(KineticsError):
    def __init__(self, min_eigenvalue: float):
        super().__init__(f"correlation matrix is not positive semidefinite "
                         f"(smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class AuditError(RuntimeError):
    """A conservation audit failed during time integration."""


# ------------------------------------------------------------ Bohr components

def _as_matrix(x):
    if isinstance(x, OperatorMatrix):
        return x.action, x.basis
    return np.asarray(x, dtype=complex), None


def bohr_decompose(Q, H, degeneracy_tol: float | None = None, hbar: float | None = None,
                   n_levels: int | None = None):
    """Split Q into components V(omega) = sum_{E_b - E_a = hbar omega} P_a Q P_b.

    Accepts plain matrices or OperatorMatrix objects (then the basis hbar is
    used). With ``n_levels`` only the lowest eigenstates of H are kept, so the
    components sum to the projection of Q on that subspace. Gaps are clustered
    with tolerance ``degeneracy_tol`` (default 1e-9 times the largest |E|).
    Returns a list of (omega, V) sorted by omega; zero components are dropped.
    """
    Qa, basis = _as_matrix(Q)
    Ha, hb = _as_matrix(H)
    basis = basis or hb
    if hbar is None:
        hbar = basis.hbar if basis is not None else 1.0
    scale = max(1.0, float(np.abs(Ha).max()))
    if np.abs(Ha - Ha.conj().T).max() > 1e-10 * scale:
        raise KineticsError("Hamiltonian is not hermitian")
    E, V = np.linalg.eigh(Ha)
    if n_levels is not None:
        E, V = E[:n_levels], V[:, :n_levels]
    if degeneracy_tol is None:
        degeneracy_tol = 1e-9 * max(float(np.abs(E).max()), 1e-300)
    Qe = V.conj().T @ Qa @ V
    gaps = E[None, :] - E[:, None]  # [a, b] = E_b - E_a
    order = np.argsort(gaps, axis=None)
    flat = gaps.ravel()[order]
    labels = np.empty(flat.size, dtype=int)
    labels[0] = 0
    labels[1:] = np.cumsum(np.diff(flat) > degeneracy_tol)
    cluster = np.empty(flat.size, dtype=int)
    cluster[order] = labels
    cluster = cluster.reshape(gaps.shape)
    qscale = max(float(np.abs(Qe).max()), 1e-300)
    out = []
    for c in range(labels[-1] + 1):
        mask = cluster == c
        block = np.where(mask, Qe, 0.0)
        if np.abs(block).max() <= 1e-12 * qscale:
            continue
        omega = float(gaps[mask].mean()) / hbar
        comp = V @ block @ V.conj().T
        if basis is not None:
            comp = OperatorMatrix.from_action(basis, comp)
        out.append((omega, comp))
    out.sort(key=lambda t: t[0])
    return out


# ---------------------------------------------------------- correlation data

@dataclass
class CorrelationData:
    """Bath correlations h_ab(s) sampled on a uniform grid symmetric about s = 0,
    or spectra h~(omega) and Lamb matrices s(omega) given directly."""

    labels: tuple = ("0",)
    s: np.ndarray | None = None
    h: np.ndarray | None = None  # (n_s, k, k)
    omegas: np.ndarray | None = None
    h_tilde: np.ndarray | None = None  # (n_omega, k, k)
    lamb: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.labels)
        if self.h is not None:
            self.s = np.asarray(self.s, dtype=float)
            h = np.asarray(self.h, dtype=complex)
            if h.ndim == 1:
                h = h[:, None, None]
            if h.shape != (self.s.size, k, k):
                raise KineticsError(f"correlation samples must have shape ({self.s.size}, {k}, {k})")
            ds = np.diff(self.s)
            if self.s.size < 5 or self.s.size % 2 == 0:
                raise KineticsError("time grid needs an odd number (>= 5) of samples")
            if not np.allclose(ds, ds[0], rtol=1e-9, atol=0) or abs(self.s[0] + self.s[-1]) > 1e-9 * abs(self.s[0]):
                raise KineticsError("time grid must be uniform and symmetric about 0")
            self.h = h
        elif self.h_tilde is not None:
            # omegas=None: one matrix used at every frequency
            n_om = 1 if self.omegas is None else np.size(self.omegas)
            if self.omegas is not None:
                self.omegas = np.atleast_1d(np.asarray(self.omegas, dtype=float))
            ht = np.asarray(self.h_tilde, dtype=complex).reshape(n_om, k, k)
            self.h_tilde = ht
            lamb = np.zeros_like(ht) if self.lamb is None else np.asarray(self.lamb, dtype=complex)
            self.lamb = lamb.reshape(ht.shape)
        else:
            raise KineticsError("correlation data needs time samples or spectra")

    @property
    def size(self) -> int:
        return len(self.labels)

    def stationarity_defect(self) -> float:
        """max |h(s) - h(-s)^dagger| relative to max |h|."""
        if self.h is None:
            return 0.0
        mirror = np.conj(np.transpose(self.h[::-1], (0, 2, 1)))
        return float(np.abs(self.h - mirror).max() / max(np.abs(self.h).max(), 1e-300))


def flat_spectrum(gamma, labels=None, lamb=None) -> CorrelationData:
    """Frequency-independent h~ = gamma (scalar or matrix) and Lamb matrix."""
    g = np.atleast_2d(np.asarray(gamma, dtype=complex))
    labels = tuple(str(i) for i in range(g.shape[0])) if labels is None else tuple(labels)
    return CorrelationData(labels=labels, h_tilde=g[None], lamb=None if lamb is None else np.atleast_2d(lamb)[None])


def _half_line(data: CorrelationData, omegas: np.ndarray) -> np.ndarray:
    """h_bar(omega) = \\int_0^inf exp(i omega s) h(s) ds by Simpson's rule."""
    mid = data.s.size // 2
    s = data.s[mid:]
    h = data.h[mid:]
    phase = np.exp(1j * omegas[:, None] * s[None, :])
    integrand = phase[:, :, None, None] * h[None]
    return simpson(integrand, x=s, axis=1)


def correlation_spectrum(data: CorrelationData, omegas):
    """(h~(omega), s(omega)) stacked over ``omegas``.

    From time samples: h~ = h_bar + h_bar^dagger and s = (h_bar - h_bar^dagger)/2i,
    with h_bar the half-line transform. Given spectra are looked up by frequency.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if data.h is None and data.omegas is None:
        n = omegas.size
        return np.repeat(data.h_tilde, n, axis=0), np.repeat(data.lamb, n, axis=0)
    if data.h is None:
        out_h, out_s = [], []
        for w in omegas:
            hit = np.flatnonzero(np.abs(data.omegas - w) <= 1e-9 * max(1.0, abs(w)))
            if hit.size == 0:
                raise KineticsError(f"no spectrum supplied at omega = {w:g}")
            out_h.append(data.h_tilde[hit[0]])
            out_s.append(data.lamb[hit[0]])
        return np.array(out_h), np.array(out_s)
    defect = data.stationarity_defect()
    if defect > STATIONARITY_TOL:
        raise KineticsError(f"correlation samples are not stationary: h(s) != h(-s)^dagger "
                            f"(defect {defect:.2e})")
    peak = np.abs(data.h).max()
    edge = max(np.abs(data.h[0]).max(), np.abs(data.h[-1]).max())
    if edge > DECAY_TOL * peak:
        raise KineticsError(f"correlations have not decayed at the window edge "
                            f"(|h| = {edge:.2e} relative to peak {peak:.2e})")
    hb = _half_line(data, omegas)
    hd = np.conj(np.transpose(hb, (0, 2, 1)))
    return hb + hd, (hb - hd) / 2j


def lorentzian_dataset(rng: np.random.Generator, k: int = 2, n_terms: int = 3,
                       s_max: float | None = None, ds: float = 0.01) -> CorrelationData:
    """Random stationary data h(s) = sum_j M_j exp(-g_j |s| - i w_j s), M_j >= 0.

    Its exact spectrum is sum_j M_j 2 g_j / (g_j^2 + (omega - w_j)^2).
    """
    g = rng.uniform(0.5, 2.0, n_terms)
    w = rng.uniform(-3.0, 3.0, n_terms)
    mats = []
    for _ in range(n_terms):
        b = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        mats.append(b @ b.conj().T / k)
    if s_max is None:
        s_max = math.log(1e10) / g.min()
    n = int(math.ceil(s_max / ds))
    s = ds * np.arange(-n, n + 1)
    h = sum(M[None] * np.exp(-gj * np.abs(s) - 1j * wj * s)[:, None, None]
            for M, gj, wj in zip(mats, g, w))
    data = CorrelationData(labels=tuple(str(i) for i in range(k)), s=s, h=h)
    data.exact = lambda om: sum(M[None] * (2 * gj / (gj**2 + (np.asarray(om)[:, None, None] - wj) ** 2))
                                for M, gj, wj in zip(mats, g, w))
    return data


def _hermitian(h: np.ndarray, tol: float = PSD_TOL) -> bool:
    return bool(np.abs(h - h.conj().T).max() <= tol * max(1.0, np.abs(h).max()))


def psd_check(h_tilde, tol: float = PSD_TOL, raise_on_fail: bool = False) -> bool:
    """True when h~ is hermitian with all eigenvalues >= -tol."""
    h = np.atleast_2d(np.asarray(h_tilde, dtype=complex))
    if not _hermitian(h):
        if raise_on_fail:
            raise KineticsError("correlation matrix is not hermitian")
        return False
    lo = float(np.linalg.eigvalsh((h + h.conj().T) / 2).min())
    if lo < -tol:
        if raise_on_fail:
            raise PSDError(lo)
        return False
    return True


def factor_correlation(h_tilde, tol: float = PSD_TOL) -> np.ndarray:
    """k with k^dagger k = h~, one row per nonzero eigenvalue (may be empty)."""
    h = np.atleast_2d(np.asarray(h_tilde, dtype=complex))
    psd_check(h, tol, raise_on_fail=True)
    lam, vec = np.linalg.eigh((h + h.conj().T) / 2)
    # eigenvalues at rounding level count as zero, so rank-deficient input keeps its rank
    keep = lam > 64 * np.finfo(float).eps * max(1.0, float(np.abs(lam).max()))
    return np.sqrt(lam[keep])[:, None] * vec[:, keep].conj().T


# ------------------------------------------------------------------ models

def _sym_num(c):
    """A numeric scalar as a sympy value without rational guessing."""
    import sympy as sp

    c = complex(c)
    return sp.Float(c.real) + sp.I * sp.Float(c.imag) if c.imag else sp.Float(c.real)


def _adjoint_symbol(a):
    return a.conj() if isinstance(a, (CPolynomial, GridFunction)) else np.conj(a)


@dataclass
class LindbladModel:
    """Hamiltonian and jump symbols of a phase-space Lindblad generator.

    ``rates`` is the matrix h_nm coupling jump m on the left to the adjoint of
    jump n on the right (identity when omitted). Adjoint symbols default to
    complex conjugates, which is exact when the weight is hermitian.
    """

    w: WeightFunction
    hamiltonian: object
    jumps: list = field(default_factory=list)
    jump_adjoints: list | None = None
    lamb_shift: object = None
    coupling: float = 1.0
    rates: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.jumps)
        if self.jump_adjoints is None:
            if self.jumps and not check_hermiticity(self.w):
                raise KineticsError(
                    f"{self.w.describe()} does not map real symbols to hermitian operators; "
                    "pass jump_adjoints explicitly")
            self.jump_adjoints = [_adjoint_symbol(a) for a in self.jumps]
        if len(self.jump_adjoints) != n:
            raise KineticsError("one adjoint symbol is needed per jump symbol")
        self.rates = np.eye(n, dtype=complex) if self.rates is None else np.asarray(self.rates, dtype=complex)
        if self.rates.shape != (n, n):
            raise KineticsError(f"rate matrix must be {n} x {n}")
        for name, sym in (("hamiltonian", self.hamiltonian), ("lamb_shift", self.lamb_shift)):
            if isinstance(sym, GridFunction) and sym.max_imag() > 1e-12 * max(1.0, np.abs(sym.values).max()):
                raise KineticsError(f"{name} symbol must be real")

    @property
    def hbar(self) -> float:
        return self.w.hbar

    @property
    def polynomial(self) -> bool:
        syms = [self.hamiltonian, *self.jumps, *self.jump_adjoints]
        if self.lamb_shift is not None:
            syms.append(self.lamb_shift)
        return all(isinstance(s, CPolynomial) for s in syms)

    def effective_hamiltonian(self):
        if self.lamb_shift is None:
            return self.hamiltonian
        return self.hamiltonian + self.lamb_shift * (self.coupling ** 2)

    def dissipator_scale(self) -> float:
        return self.coupling ** 2 / self.hbar ** 2


class Generator:
    """Linear map rho -> L(rho) on symbols over a fixed grid."""

    def __init__(self, grid: PhaseGrid, apply, route: str):
        self.grid = grid
        self._apply = apply
        self.route = route

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        return self._apply(values)

    def __call__(self, rho: GridFunction) -> GridFunction:
        _same_grid(rho.grid, self.grid)
        return GridFunction(self.grid, self._apply(rho.values))

    def __add__(self, other: "Generator") -> "Generator":
        _same_grid(self.grid, other.grid)
        return Generator(self.grid, lambda v: self._apply(v) + other._apply(v),
                         f"{self.route}+{other.route}")


def _poly_generator_op(model: LindbladModel):
    """The whole generator as one DiffOp (exact for polynomial symbols)."""
    w = model.w
    H = model.effective_hamiltonian()
    op = (star_operator(H, w, True) - star_operator(H, w, False)) * _sym_num(1 / (1j * model.hbar))
    scale = model.dissipator_scale()
    for n, an in enumerate(model.jump_adjoints):
        for m, am in enumerate(model.jumps):
            r = model.rates[n, m]
            if r == 0:
                continue
            sandwich = star_operator(am, w, True) @ star_operator(an, w, False)
            both = star_poly(an, am, w)
            op = op + (sandwich - (star_operator(both, w, True) + star_operator(both, w, False))
                       * _sym_num(0.5)) * _sym_num(scale * r)
    return op


def _as_grid_symbol(x, grid: PhaseGrid, hbar: float):
    if isinstance(x, CPolynomial):
        Q, P = grid.mesh()
        return GridFunction(grid, x.evaluate(Q, P, hbar=hbar))
    return x


def build_generator(model: LindbladModel, grid: PhaseGrid, route: str = "auto") -> Generator:
    """L(rho) = bracket(H + coupling^2 F, rho)
    + coupling^2 / hbar^2 sum_nm h_nm [A_m * rho * A_n^* - 1/2 {A_n^* * A_m, rho}].

    The Hamiltonian part equals -(i/hbar)(H * rho - rho * H). ``route`` is
    "diffop" (all symbols polynomial; compiled once), "star" (nested pairwise
    star products) or "auto".
    """
    if route == "auto":
        route = "diffop" if model.polynomial else "star"
    w = model.w
    if route == "diffop":
        if not model.polynomial:
            raise KineticsError("the differential-operator route needs polynomial symbols")
        compiled = CompiledDiffOp(_poly_generator_op(model), grid, model.hbar)
        return Generator(grid, compiled.apply_array, "diffop")
    if route != "star":
        raise KineticsError(f"unknown generator route {route!r}")
    H = model.effective_hamiltonian()
    scale = model.dissipator_scale()
    terms = []
    for n, an in enumerate(model.jump_adjoints):
        for m, am in enumerate(model.jumps):
            r = model.rates[n, m]
            if r == 0:
                continue
            if isinstance(an, CPolynomial) and isinstance(am, CPolynomial):
                both = star_poly(an, am, w)
            else:
                both = star(_as_grid_symbol(an, grid, w.hbar), _as_grid_symbol(am, grid, w.hbar), w)
            terms.append((r * scale, am, an, both))

    def apply(values):
        rho = GridFunction(grid, values)
        out = bracket(H, rho, w, grid)
        for c, am, an, both in terms:
            out = out + (star(am, star(rho, an, w), w) - anti_bracket(both, rho, w) * 0.5) * c
        return out.values

    return Generator(grid, apply, "star")


# --------------------------------------------------- Fourier-side dissipator

def _dissipator_kernel(mu: complex):
    """exp(mu X) sinh(mu (Y + Z)) + exp(mu Y) sinh(mu (X + Z)) with
    X = s2^s1, Y = s3^s2, Z = s3^s1 (s1: jump, s2: state, s3: adjoint jump)."""
    def k(e1, x1, e2, x2, e3, x3):
        X = _wedge(e2, x2, e1, x1)
        Y = _wedge(e3, x3, e2, x2)
        Z = _wedge(e3, x3, e1, x1)
        return np.exp(mu * X) * np.sinh(mu * (Y + Z)) + np.exp(mu * Y) * np.sinh(mu * (X + Z))
    return k


def _bilinear_sum(bils, R: np.ndarray, grid: PhaseGrid, mu: complex) -> np.ndarray:
    """sum over s1 + s2 + s3 = s of Bil(s3, s1) K(s1, s2, s3) R(s2) (de dx / 2 pi)^2,
    summed over the given bilinears.

    Each entry of ``bils`` has shape (M, M) over band modes (row s3, column s1);
    ``R`` is a full spectral array. Returns a full spectral array. With
    s2 = s - s1 - s3 the kernel splits as
    exp(-mu s3^s1) [sinh(mu s3^s) exp(mu s^s1) + exp(mu s3^s) sinh(mu s^s1)],
    so only rank-two factors depend on the output mode s.
    """
    nq, np_ = grid.shape
    mq, mp = nq - 1, np_ - 1
    oq, op = mq // 2, mp // 2
    ai, bi = np.meshgrid(np.arange(mq) - oq, np.arange(mp) - op, indexing="ij")
    ai, bi = ai.ravel(), bi.ravel()
    de, dx = grid.deta, grid.dxi
    e, x = ai * de, bi * dx
    Rb = R[1:, 1:]
    base = np.exp(-mu * _wedge(e[:, None], x[:, None], e[None, :], x[None, :]))
    weighted = [bil * base for bil in bils]
    A3, A1 = ai[:, None], ai[None, :]
    B3, B1 = bi[:, None], bi[None, :]
    out = np.zeros(grid.shape, dtype=complex)
    pref = (de * dx / (2.0 * np.pi)) ** 2
    for a, b in zip(ai, bi):
        a2 = a - A1 - A3
        b2 = b - B1 - B3
        ok = (np.abs(a2) <= oq) & (np.abs(b2) <= op)
        r = np.where(ok, Rb[np.clip(a2 + oq, 0, mq - 1), np.clip(b2 + op, 0, mp - 1)], 0.0)
        u = mu * _wedge(a * de, b * dx, e, x)  # s ^ s1
        v = mu * _wedge(e, x, a * de, b * dx)  # s3 ^ s
        K = np.sinh(v)[:, None] * np.exp(u)[None, :] + np.exp(v)[:, None] * np.sinh(u)[None, :]
        Kr = K * r
        out[a + oq + 1, b + op + 1] = pref * sum(np.sum(wb * Kr) for wb in weighted)
    return out


def build_dissipator_fourier(model: LindbladModel, grid: PhaseGrid, route: str = "bilinear") -> Generator:
    """Dissipative part of the generator from the double Fourier kernel.

    route="jumps" sums one separable kernel evaluation per (n, m) jump pair;
    route="bilinear" first forms Bil(s3, s1) = sum_nm h_nm A~*_n(s3) A~_m(s1)
    and evaluates the kernel once. Limited to small grids (O(N^3) work).
    """
    from .star import TRIPLE_MAX_MODES
    from .grid import GridError

    if grid.n_q * grid.n_p > TRIPLE_MAX_MODES:
        raise GridError(f"Fourier-side dissipator limited to {TRIPLE_MAX_MODES} modes")
    if route not in ("jumps", "bilinear"):
        raise KineticsError(f"unknown dissipator route {route!r}")
    w = model.w
    omega = w.on_grid(grid)

    def wspec(x):
        x = _as_grid_symbol(x, grid, w.hbar)
        return apply_weight(drop_nyquist(forward_ft(x).values), omega, 1)

    A = [wspec(a) for a in model.jumps]
    B = [wspec(a) for a in model.jump_adjoints]
    scale = model.dissipator_scale()
    pairs = [(model.rates[n, m], B[n][1:, 1:].ravel(), A[m][1:, 1:].ravel())
             for n in range(len(B)) for m in range(len(A)) if model.rates[n, m] != 0]
    if route == "bilinear":
        bils = [sum(r * np.outer(b, a) for r, b, a in pairs)] if pairs else []
    else:
        bils = [r * np.outer(b, a) for r, b, a in pairs]

    def apply(values):
        R = apply_weight(drop_nyquist(forward_ft(GridFunction(grid, values)).values), omega, 1)
        spectrum = _bilinear_sum(bils, R, grid, w.mu)
        spectrum = apply_weight(spectrum, omega, -1)
        return inverse_ft(SpectralFunction(grid, spectrum * scale)).values

    return Generator(grid, apply, f"fourier-{route}")


def hamiltonian_part(model: LindbladModel, grid: PhaseGrid) -> Generator:
    w = model.w
    H = model.effective_hamiltonian()
    return Generator(grid, lambda v: bracket(H, GridFunction(grid, v), w, grid).values, "hamiltonian")


# -------------------------------------------------------- time integration

@dataclass
class EvolutionState:
    rho: GridFunction
    t: float = 0.0


@dataclass
class Trajectory:
    times: list
    states: list
    audit: list  # rows (t, trace, min_real, imag_leak)

    @property
    def final(self):
        return self.states[-1]


def spectral_radius(apply, shape, iters: int = 40, seed: int = 0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a linear map."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = apply(v)
        est = float(np.linalg.norm(u))
        if est == 0.0:
            return 0.0
        v = u / est
    return est


def stability_bound(gen: Generator, **kw) -> float:
    """Largest admissible RK4 step for ``gen`` (with safety factor)."""
    r = spectral_radius(gen.apply_array, gen.grid.shape, **kw)
    return math.inf if r == 0.0 else STABILITY_SAFETY * RK4_REAL_BOUND / r


def _rk4(apply, y, dt):
    k1 = apply(y)
    k2 = apply(y + 0.5 * dt * k1)
    k3 = apply(y + 0.5 * dt * k2)
    k4 = apply(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _n_steps(dt: float, span: float) -> int:
    if not dt > 0:
        raise KineticsError("time step must be positive")
    n = int(round(span / dt))
    if n < 0 or abs(n * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise KineticsError(f"t_end - t0 = {span} is not a whole number of steps of {dt}")
    return n


def evolve(state: EvolutionState, gen: Generator, dt: float, t_end: float,
           snap_every: int | None = None, audit_tol: float = AUDIT_TOL,
           check_stability: bool = True, real: bool | None = None) -> Trajectory:
    """Fixed-step RK4 for d rho / dt = gen(rho), with a trace and reality audit
    after every step (AuditError on a breach larger than ``audit_tol``)."""
    _same_grid(state.rho.grid, gen.grid)
    n = _n_steps(dt, t_end - state.t)
    if check_stability and n:
        bound = stability_bound(gen)
        if dt > bound:
            raise KineticsError(f"dt = {dt:g} exceeds the RK4 stability bound {bound:.3g}")
    grid = gen.grid
    cell = grid.dq * grid.dp
    y = np.array(state.rho.values, dtype=complex)
    trace0 = complex(y.sum() * cell)
    tscale = max(abs(trace0), 1e-300)
    if real is None:
        real = bool(np.abs(y.imag).max() <= 1e-12 * max(np.abs(y).max(), 1e-300))
    times, states, audit = [state.t], [state.rho], []

    def record(t, y):
        peak = max(float(np.abs(y).max()), 1e-300)
        leak = float(np.abs(y.imag).max()) / peak
        tr = complex(y.sum() * cell)
        audit.append((t, tr.real, float(y.real.min()), leak))
        drift = abs(tr - trace0) / tscale
        if drift > audit_tol:
            raise AuditError(f"trace drift {drift:.3e} at t = {t:g} exceeds {audit_tol:g}")
        if real and leak > audit_tol:
            raise AuditError(f"imaginary leakage {leak:.3e} at t = {t:g} exceeds {audit_tol:g}")

    record(state.t, y)
    for k in range(1, n + 1):
        y = _rk4(gen.apply_array, y, dt)
        t = state.t + k * dt
        record(t, y)
        if k == n or (snap_every and k % snap_every == 0):
            times.append(t)
            states.append(GridFunction(grid, y.copy()))
    return Trajectory(times, states, audit)


# ---------------------------------------------------------- matrix oracle

def _lindblad_matrix_rhs(H, jumps, adjoints, rates, scale, hbar):
    products = [[adjoints[n] @ jumps[m] for m in range(len(jumps))] for n in range(len(adjoints))]

    def rhs(r):
        out = (-1j / hbar) * (H @ r - r @ H)
        for n in range(len(adjoints)):
            for m in range(len(jumps)):
                c = rates[n, m]
                if c == 0:
                    continue
                AA = products[n][m]
                out = out + (scale * c) * (jumps[m] @ r @ adjoints[n] - 0.5 * (AA @ r + r @ AA))
        return out

    return rhs


def oracle_evolve_matrix(rho0: OperatorMatrix, H: OperatorMatrix, jumps, dt: float, t_end: float,
                         coupling: float = 1.0, rates=None, adjoints=None,
                         snap_every: int | None = None, audit_tol: float = 1e-8,
                         check_positivity: bool = True) -> Trajectory:
    """RK4 on the matrix Lindblad equation
    d rho/dt = -(i/hbar)[H, rho] + coupling^2/hbar^2 sum h_nm (A_m rho A_n^+ - {A_n^+ A_m, rho}/2).

    Audits trace (1e-10), hermiticity (1e-10) and, at snapshots, the smallest
    eigenvalue (>= -audit_tol) unless ``check_positivity`` is off (the initial
    operator need not be a state)."""
    basis = rho0.basis
    hbar = basis.hbar
    act = lambda x: x.action
    Ha = act(H)
    A = [act(a) for a in jumps]
    B = [a.conj().T for a in A] if adjoints is None else [act(b) for b in adjoints]
    rates = np.eye(len(A)) if rates is None else np.asarray(rates, dtype=complex)
    rhs = _lindblad_matrix_rhs(Ha, A, B, rates, coupling**2 / hbar**2, hbar)
    n = _n_steps(dt, t_end)
    y = rho0.action.copy()
    tr0 = np.trace(y)
    times, states, audit = [0.0], [rho0], []
    for k in range(1, n + 1):
        y = _rk4(rhs, y, dt)
        t = k * dt
        tr = np.trace(y)
        herm = float(np.abs(y - y.conj().T).max())
        if abs(tr - tr0) > 1e-10 * max(1.0, abs(tr0)) or herm > 1e-10:
            raise AuditError(f"matrix oracle audit failed at t = {t:g}: "
                             f"trace drift {abs(tr - tr0):.2e}, hermiticity {herm:.2e}")
        if k == n or (snap_every and k % snap_every == 0):
            lo = float(np.linalg.eigvalsh((y + y.conj().T) / 2).min())
            audit.append((t, tr.real, lo, herm))
            if check_positivity and lo < -audit_tol:
                raise AuditError(f"matrix oracle lost positivity at t = {t:g} (eigenvalue {lo:.2e})")
            times.append(t)
            states.append(OperatorMatrix.from_action(basis, y.copy()))
    return Trajectory(times, states, audit)


def _operator(sym, w: WeightFunction, basis: PositionBasis) -> OperatorMatrix:
    return quantize(sym, w, basis)


def model_operators(model: LindbladModel, basis: PositionBasis):
    """(H, jumps, adjoints) as matrices on ``basis``."""
    w = model.w
    H = _operator(model.effective_hamiltonian(), w, basis)
    H = (H + H.dagger()) * 0.5
    jumps = [_operator(a, w, basis) for a in model.jumps]
    adj = [_operator(a, w, basis) for a in model.jump_adjoints]
    return H, jumps, adj


@dataclass
class DiagramReport:
    residual: float
    flow_residual: float
    symbol_trace_drift: float
    t: float

    def ok(self, tol: float = 1e-5, flow_tol: float = 1e-6) -> bool:
        return self.residual <= tol and self.flow_residual <= flow_tol


def diagram_commutes(f0: GridFunction, model: LindbladModel, t: float, dt: float = 1e-3,
                     basis: PositionBasis | None = None, observable=None,
                     gen: Generator | None = None) -> DiagramReport:
    """Compare evolving the symbol with evolving its operator.

    residual = |dequantize(matrix evolution of quantize(f0)) - evolve(f0)|_2 / |f0|_2.
    flow_residual compares the central difference of trace_pair(A, rho) at t
    with trace_pair(A, L rho(t)), relative to max(1, |trace_pair(A, L rho)|).
    """
    from .transforms import trace_pair

    grid = f0.grid
    w = model.w
    basis = basis or PositionBasis.for_grid(grid, w.hbar)
    gen = gen or build_generator(model, grid)
    traj = evolve(EvolutionState(f0, 0.0), gen, dt, t) if t > 0 else Trajectory([0.0], [f0], [])
    rho_t = traj.final
    H, jumps, adj = model_operators(model, basis)
    rho_hat = quantize(f0, w, basis)
    if t > 0:
        a = rho_hat.action
        positive = float(np.linalg.eigvalsh((a + a.conj().T) / 2).min()) >= -1e-8
        mtraj = oracle_evolve_matrix(rho_hat, H, jumps, dt, t, model.coupling, model.rates, adj,
                                     check_positivity=positive)
    else:
        mtraj = Trajectory([0.0], [rho_hat], [])
    back = dequantize(mtraj.final, w, grid)
    residual = (back - rho_t).norm() / f0.norm()
    if observable is None:
        observable = CPolynomial({(2, 0): 1, (0, 2): 1})
    after = GridFunction(grid, _rk4(gen.apply_array, rho_t.values, dt))
    before = GridFunction(grid, _rk4(gen.apply_array, rho_t.values, -dt))
    diff = (trace_pair(observable, after, w) - trace_pair(observable, before, w)) / (2 * dt)
    exact = trace_pair(observable, gen(rho_t), w)
    flow = abs(diff - exact) / max(1.0, abs(exact))
    drift = abs(traj.audit[-1][1] - traj.audit[0][1]) / abs(traj.audit[0][1]) if traj.audit else 0.0
    return DiagramReport(float(residual), float(flow), float(drift), float(t))


# ------------------------------------------------------- weak-coupling models

def _merge_frequencies(parts, tol: float):
    """{omega: {alpha: V}} with frequencies from different couplings merged within tol."""
    flat = sorted((om, a, V) for a, comps in enumerate(parts) for om, V in comps)
    groups: list = []
    for om, a, V in flat:
        if groups and om - groups[-1][0][-1] <= tol:
            groups[-1][0].append(om)
            g = groups[-1][1]
            g[a] = g[a] + V if a in g else V
        else:
            groups.append(([om], {a: V}))
    return [(float(np.mean(oms)), comps) for oms, comps in groups]


def assemble_weak_coupling_model(couplings, H: OperatorMatrix, data: CorrelationData,
                                 w: WeightFunction, grid: PhaseGrid, coupling: float = 1.0,
                                 hamiltonian_symbol=None, degeneracy_tol: float | None = None,
                                 n_levels: int | None = None) -> LindbladModel:
    """Lindblad model from coupling operators Q_a, a system Hamiltonian matrix and
    bath correlation data.

    Each Q_a is split into Bohr components V_a(omega); at every frequency h~(omega)
    is factored as k^dagger k and the jump operators are U_g = sum_b k_gb V_b.
    The Lamb-shift operator is F = -(1/hbar) sum s_ab(omega) V_a^dagger V_b.
    Jumps, their adjoints and F are dequantized onto ``grid``; the Hamiltonian
    symbol is dequantized from ``H`` unless ``hamiltonian_symbol`` is given.
    """
    couplings = list(couplings)
    if len(couplings) != data.size:
        raise KineticsError(f"{len(couplings)} coupling operators but correlation data has "
                            f"{data.size} labels")
    hbar = w.hbar
    parts = [bohr_decompose(Q, H, degeneracy_tol, hbar, n_levels) for Q in couplings]
    for Q, comps in zip(couplings, parts):
        if n_levels is None and comps:
            total = sum((V for _, V in comps), OperatorMatrix.from_action(H.basis, np.zeros_like(H.action)))
            err = np.abs((total - Q).action).max() / max(np.abs(Q.action).max(), 1e-300)
            if err > 1e-10:
                raise KineticsError(f"Bohr components do not sum to the coupling operator ({err:.2e})")
    scale = max(float(np.abs(np.linalg.eigvalsh(H.action)).max()), 1e-300) / hbar
    tol = 1e-9 * scale if degeneracy_tol is None else degeneracy_tol / hbar
    freqs = _merge_frequencies(parts, tol)
    if not freqs:
        h_all = s_all = np.zeros((0, data.size, data.size))
    else:
        h_all, s_all = correlation_spectrum(data, [om for om, _ in freqs])
    zero = OperatorMatrix.from_action(H.basis, np.zeros_like(H.action))
    jumps_op, F = [], zero
    for (om, comps), ht, sm in zip(freqs, h_all, s_all):
        V = [comps.get(a, zero) for a in range(data.size)]
        for row in factor_correlation(ht):
            U = zero
            for b, kb in enumerate(row):
                if kb != 0:
                    U = U + V[b] * kb
            jumps_op.append(U)
        for a in range(data.size):
            for b in range(data.size):
                if sm[a, b] != 0:
                    F = F + (V[a].dagger() @ V[b]) * sm[a, b]
    F = F * (-1.0 / hbar)
    F = (F + F.dagger()) * 0.5
    ham = hamiltonian_symbol if hamiltonian_symbol is not None else _real_symbol(dequantize(H, w, grid))
    jumps = [dequantize(U, w, grid) for U in jumps_op]
    adjoints = [dequantize(U.dagger(), w, grid) for U in jumps_op]
    lamb = _real_symbol(dequantize(F, w, grid)) if np.abs(F.action).max() > 0 else None
    return LindbladModel(w, ham, jumps, adjoints, lamb, coupling)


def _real_symbol(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, f.values.real.astype(complex))
