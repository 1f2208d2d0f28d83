"""System plus reservoir symbols on a product of two phase-space grids, and the
reservoir-trace projection with its structural identities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffops import CompiledDiffOp, star_operator
from .grid import GridError, PhaseGrid, ft_axis, ift_axis, make_grid
from .orderings import (GROWTH_CAP, JointWeight, WeightOverflowError, apply_weight,
                        check_factorization, weight_bound)
from .symbolic import CPolynomial, u_poly

MAX_PAIRS = 5_000_000
PROJECTION_TOL = 1e-7


class ProjectionPreconditionError(ValueError):
    """The projection identities are not expected to hold for these inputs."""


@dataclass(frozen=True)
class BipartiteGrid:
    """Axes (q_sys, p_sys, q_res, p_res)."""

    sys: PhaseGrid
    res: PhaseGrid

    @property
    def shape(self):
        return self.sys.shape + self.res.shape

    @property
    def cell_res(self) -> float:
        return self.res.dq * self.res.dp

    @property
    def cell(self) -> float:
        return self.sys.dq * self.sys.dp * self.cell_res

    def _axes(self):
        g, r = self.sys, self.res
        return [(g.q_min, g.dq), (g.p_min, g.dp), (r.q_min, r.dq), (r.p_min, r.dp)]

    def mesh(self):
        return np.meshgrid(self.sys.q, self.sys.p, self.res.q, self.res.p, indexing="ij")

    def dual_mesh(self):
        return np.meshgrid(self.sys.eta, self.sys.xi, self.res.eta, self.res.xi, indexing="ij")

    def sample(self, func) -> np.ndarray:
        return np.asarray(func(*self.mesh()), dtype=complex)

    def ft(self, values: np.ndarray) -> np.ndarray:
        out = np.asarray(values, dtype=complex)
        scale = 1.0
        for axis, (lo, step) in enumerate(self._axes()):
            out = ft_axis(out, lo, step, axis)
            scale *= step
        return _drop_nyquist4(out * scale / (2 * np.pi) ** 2)

    def ift(self, spectrum: np.ndarray) -> np.ndarray:
        out = np.asarray(spectrum, dtype=complex)
        scale = 1.0
        for axis, (lo, step) in enumerate(self._axes()):
            out = ift_axis(out, lo, step, axis)
            scale *= 2 * np.pi / (step * spectrum.shape[axis])
        return out * scale / (2 * np.pi) ** 2

    @property
    def dual_cell(self) -> float:
        return self.sys.deta * self.sys.dxi * self.res.deta * self.res.dxi

    def integrate_res(self, values: np.ndarray) -> np.ndarray:
        return values.sum(axis=(2, 3)) * self.cell_res

    def integrate(self, values: np.ndarray) -> complex:
        return complex(values.sum() * self.cell)

    def norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(values) ** 2) * self.cell))


def _drop_nyquist4(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    for axis in range(a.ndim):
        idx = [slice(None)] * a.ndim
        idx[axis] = 0
        a[tuple(idx)] = 0.0
    return a


def _joint_omega(bg: BipartiteGrid, w: JointWeight) -> np.ndarray:
    return w(*bg.dual_mesh())


def _flip(spectrum: np.ndarray) -> np.ndarray:
    """G(-sigma) on the band (index 0 holds the dropped Nyquist slice)."""
    out = np.zeros_like(spectrum)
    out[1:, 1:, 1:, 1:] = spectrum[1:, 1:, 1:, 1:][::-1, ::-1, ::-1, ::-1]
    return out


def bipartite_pairing(a: np.ndarray, b: np.ndarray, bg: BipartiteGrid, w: JointWeight) -> complex:
    """<a, b> = \\int conj(a) * b dz, from the zero mode of the star product:
    \\int f * g = Omega(0)^-1 sum Omega(s) Omega(-s) f~(s) g~(-s) ds."""
    om = _joint_omega(bg, w)
    F = bg.ft(np.conj(a))
    G = bg.ft(b)
    om0 = complex(w(0.0, 0.0, 0.0, 0.0))
    return complex(np.sum(om * _flip(om) * F * _flip(G)) * bg.dual_cell / om0)


def bipartite_star(f: np.ndarray, g: np.ndarray, bg: BipartiteGrid, w: JointWeight,
                   rel_floor: float = 1e-15, max_pairs: int = MAX_PAIRS) -> np.ndarray:
    """Two-party star product by a direct sum over the spectral supports.

    Modes below ``rel_floor`` times the peak are skipped, so the cost is the
    product of the two support sizes; it is meant for inputs where one factor
    is sparse in frequency (e.g. depends on one party's variables only).
    """
    om = _joint_omega(bg, w)
    F = apply_weight(bg.ft(f), om, 1)
    G = apply_weight(bg.ft(g), om, 1)
    fi = np.argwhere(np.abs(F) > rel_floor * np.abs(F).max())
    gi = np.argwhere(np.abs(G) > rel_floor * np.abs(G).max())
    if len(fi) * len(gi) > max_pairs:
        raise GridError(f"direct two-party product needs {len(fi) * len(gi)} mode pairs "
                        f"(limit {max_pairs})")
    shape = np.array(bg.shape)
    centre = shape // 2
    steps = np.array([bg.sys.deta, bg.sys.dxi, bg.res.deta, bg.res.dxi])
    sf = (fi - centre) * steps
    out = np.zeros(bg.shape, dtype=complex)
    mu = w.sys.mu
    fv = F[tuple(fi.T)]
    for j, gk in enumerate(gi):
        tgt = fi + gk - centre
        ok = np.all((tgt >= 1) & (tgt < shape), axis=1)
        if not ok.any():
            continue
        sg = (gk - centre) * steps
        # kernel exp(mu (s_g ^ s_f)) summed over both parties
        wedge = (sg[0] * sf[ok, 1] - sf[ok, 0] * sg[1]) + (sg[2] * sf[ok, 3] - sf[ok, 2] * sg[3])
        np.add.at(out, tuple(tgt[ok].T), np.exp(mu * wedge) * fv[ok] * G[tuple(gk)])
    out *= bg.dual_cell / (2 * np.pi) ** 2
    out = apply_weight(out, om, -1, floor=0.0, noise=0.0)
    return bg.ift(out)


# ------------------------------------------------------------- Liouvillians

def _compile(sym: CPolynomial, w, grid: PhaseGrid, left: bool) -> CompiledDiffOp:
    """Moyal multiplication by the Weyl image of ``sym`` under w."""
    return CompiledDiffOp(star_operator(u_poly(sym, w), "weyl", left), grid, w.hbar)


class _PartyWeight:
    """Spectral multiplication by Omega (or 1/Omega) along one party's axes.

    The Nyquist slices are left untouched so the two maps are exact inverses.
    """

    def __init__(self, w, grid: PhaseGrid):
        self.trivial = w.family == "weyl"
        if self.trivial:
            return
        up, down = weight_bound(w, grid)
        if max(up, down) > np.log(GROWTH_CAP):
            raise WeightOverflowError(f"{w.describe()} exceeds the growth cap on this grid")
        eta = 2 * np.pi * np.fft.fftfreq(grid.n_q, d=grid.dq)
        xi = 2 * np.pi * np.fft.fftfreq(grid.n_p, d=grid.dp)
        om = w(eta[:, None], xi[None, :])
        om[grid.n_q // 2, :] = 1.0
        om[:, grid.n_p // 2] = 1.0
        self.om = om

    def apply(self, v, axes, inverse=False):
        if self.trivial:
            return v
        v = np.moveaxis(v, axes, (0, 1))
        m = (1.0 / self.om if inverse else self.om)[(...,) + (None,) * (v.ndim - 2)]
        out = np.fft.ifft2(np.fft.fft2(v, axes=(0, 1)) * m, axes=(0, 1))
        return np.moveaxis(out, (0, 1), axes)


@dataclass
class BipartiteModel:
    """Polynomial Hamiltonians H_sys(z_sys), H_res(z_res) and an interaction
    sum_k a_k(z_sys) b_k(z_res).

    Each party's star multiplication is applied as U^-1 (Moyal multiplication
    by U H) U with U the spectral weight map on that party's axes, which keeps
    the pairing identities exact on the grid.
    """

    bg: BipartiteGrid
    w: JointWeight
    h_sys: CPolynomial
    h_res: CPolynomial
    h_int: list = field(default_factory=list)
    coupling: float = 1.0

    def __post_init__(self):
        ws, wr, g = self.w.sys, self.w.res, self.bg
        self.hbar = self.w.hbar
        self._us = _PartyWeight(ws, g.sys)
        self._ur = _PartyWeight(wr, g.res)
        self._sys = (_compile(self.h_sys, ws, g.sys, True), _compile(self.h_sys, ws, g.sys, False))
        self._res = (_compile(self.h_res, wr, g.res, True), _compile(self.h_res, wr, g.res, False))
        self._int = [((_compile(a, ws, g.sys, True), _compile(b, wr, g.res, True)),
                      (_compile(a, ws, g.sys, False), _compile(b, wr, g.res, False)))
                     for a, b in self.h_int]

    def _u(self, v, inverse=False):
        v = self._us.apply(v, (0, 1), inverse)
        return self._ur.apply(v, (2, 3), inverse)

    def star_sys(self, values, left=True):
        """H_sys * v (left) or v * H_sys; accepts 2-D system arrays as well."""
        op = self._sys[0 if left else 1]
        if np.ndim(values) == 2:
            return self._us.apply(op.apply_array(self._us.apply(values, (0, 1))), (0, 1), True)
        return self._u(op.apply_array(self._u(values), axes=(0, 1)), True)

    def liouville_sys(self, v):
        """(1/hbar)[H_sys, v]."""
        L, R = self._sys
        u = self._u(v)
        return self._u(L.apply_array(u, (0, 1)) - R.apply_array(u, (0, 1)), True) / self.hbar

    def liouville_res(self, v):
        L, R = self._res
        u = self._u(v)
        return self._u(L.apply_array(u, (2, 3)) - R.apply_array(u, (2, 3)), True) / self.hbar

    def liouville_int(self, v):
        u = self._u(v)
        out = np.zeros(v.shape, dtype=complex)
        for (la, lb), (ra, rb) in self._int:
            out += lb.apply_array(la.apply_array(u, (0, 1)), (2, 3))
            out -= rb.apply_array(ra.apply_array(u, (0, 1)), (2, 3))
        return self._u(out, True) * (self.coupling / self.hbar)

    def liouville(self, v):
        return self.liouville_sys(v) + self.liouville_res(v) + self.liouville_int(v)


# ---------------------------------------------------------------- projection

class Projection:
    """P rho = rho_R(z_res) \\int rho dz_res, and its adjoint."""

    def __init__(self, bg: BipartiteGrid, rho_res: np.ndarray, w: JointWeight):
        self.bg = bg
        self.w = w
        norm = rho_res.sum() * bg.cell_res
        if abs(norm - 1.0) > 1e-10:
            raise ProjectionPreconditionError(f"reservoir state integrates to {norm:.12g}, not 1")
        self.rho_res = np.asarray(rho_res, dtype=complex)

    def __call__(self, v):
        return self.rho_res[None, None] * self.bg.integrate_res(v)[:, :, None, None]

    def star_form(self, v):
        """rho_R * (\\int rho dz_res) evaluated as a genuine two-party star product."""
        f_sys = np.broadcast_to(self.bg.integrate_res(v)[:, :, None, None], self.bg.shape)
        r = np.broadcast_to(self.rho_res[None, None], self.bg.shape)
        return bipartite_star(r, f_sys, self.bg, self.w)

    def adjoint(self, a):
        """\\int rho_R * A dz_res, extended as a function of z_sys."""
        r = np.broadcast_to(self.rho_res[None, None], self.bg.shape)
        red = self.bg.integrate_res(bipartite_star(r, a, self.bg, self.w))
        return np.broadcast_to(red[:, :, None, None], self.bg.shape).copy()


@dataclass
class ProjectionReport:
    residuals: dict

    @property
    def worst(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def ok(self, tol: float = PROJECTION_TOL) -> bool:
        return self.worst <= tol

    def lines(self, tol: float = PROJECTION_TOL):
        for name, r in self.residuals.items():
            yield f"{name:<34s} {r:.3e}  {'ok' if r <= tol else 'FAIL'}"


def _rel(a, b, bg):
    scale = max(bg.norm(a), bg.norm(b), 1e-300)
    return bg.norm(a - b) / scale


def projection_checks(model: BipartiteModel, rho_res: np.ndarray, rho: np.ndarray,
                      observable: np.ndarray, stationary_tol: float = 1e-8,
                      factor_n: int = 16, factor_extent: float = 6.0) -> ProjectionReport:
    """Residuals of the reservoir-projection identities on test symbols.

    Raises ProjectionPreconditionError if the joint weight does not factorize
    or the reservoir state does not commute with H_res.
    """
    bg, w = model.bg, model.w
    if not check_factorization(w, w.sys, w.res, n=factor_n, extent=factor_extent):
        raise ProjectionPreconditionError("joint weight does not factorize over the two parties")
    rr = np.broadcast_to(np.asarray(rho_res, dtype=complex)[None, None], bg.shape)
    comm = model.liouville_res(rr)
    if bg.norm(comm) > stationary_tol * bg.norm(rr):
        raise ProjectionPreconditionError(
            f"reservoir state does not commute with H_res (relative {bg.norm(comm) / bg.norm(rr):.2e})")
    P = Projection(bg, rho_res, w)
    Pr = P(rho)
    out = {}
    out["P^2 = P"] = _rel(P(Pr), Pr, bg)
    out["P rho = rho_R * f_sys (product)"] = _rel(P.star_form(rho), Pr, bg)
    Ls = model.liouville_sys
    out["P L_sys = L_sys P"] = _rel(P(Ls(rho)), Ls(Pr), bg)
    scale = max(bg.norm(model.liouville_res(rho)), 1e-300)
    out["P L_res = 0"] = bg.norm(P(model.liouville_res(rho))) / scale
    out["L_res P = 0"] = bg.norm(model.liouville_res(Pr)) / scale
    lhs = bg.integrate_res(model.star_sys(rho))
    rhs = model.star_sys(bg.integrate_res(rho))
    out["partial trace of H_sys * rho"] = float(np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1e-300))
    # pairing residuals are scaled by the Cauchy-Schwarz bound |A| |B|
    a_p = bipartite_pairing(P.adjoint(observable), rho, bg, w)
    p_a = bipartite_pairing(observable, Pr, bg, w)
    out["<P+ A, rho> = <A, P rho>"] = abs(a_p - p_a) / max(bg.norm(observable) * bg.norm(Pr), 1e-300)
    L = model.liouville
    Lr = L(rho)
    x = bipartite_pairing(observable, Lr, bg, w)
    y = bipartite_pairing(L(observable), rho, bg, w)
    out["<A, L rho> = <L A, rho>"] = abs(x - y) / max(bg.norm(observable) * bg.norm(Lr), 1e-300)
    if not model.h_int or model.coupling == 0:
        out["P L = L P (no interaction)"] = _rel(P(L(rho)), L(Pr), bg)
    return ProjectionReport({k: float(v) for k, v in out.items()})


def maxwellian_reservoir(res: PhaseGrid, temperature: float = 1.0) -> np.ndarray:
    """exp(-p^2 / 2T), uniform in q, normalized to unit integral on the grid.
    It commutes with H_res = p^2/2 exactly, also on the discrete grid."""
    _, P = res.mesh()
    r = np.exp(-P**2 / (2 * temperature))
    return r / (r.sum() * res.dq * res.dp)


def trig_test_states(n: int = 16, extent: float = 6.0):
    """(grid, rho_res, rho, observable) built from low trigonometric modes.

    These symbols are band-limited on the periodic box, so every projection
    identity holds to rounding on an n^4 grid. The reservoir state depends on
    p alone, hence commutes with H_res = p^2/2 on the grid.
    """
    g = make_grid(-extent, extent, n, -extent, extent, n)
    bg = BipartiteGrid(g, g)
    k = np.pi / extent
    _, P = g.mesh()
    rr = 1 + 0.5 * np.cos(k * P)
    rr = rr / (rr.sum() * g.dq * g.dp)
    rho = bg.sample(lambda a, b, c, d: (1 + 0.4 * np.cos(k * a) + 0.3 * np.sin(k * b)) * (1 + 0.5 * np.cos(k * d))
                    + 0.2 * np.cos(k * (a - c)) + 0.1 * np.sin(k * (b + d)))
    obs = bg.sample(lambda a, b, c, d: 1 + 0.5 * np.cos(k * (a + d)) + 0.3j * np.sin(k * b)
                    + 0.2 * np.cos(2 * k * c))
    return bg, rr, rho, obs
