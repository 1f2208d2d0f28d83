"""Twisted-convolution star products on a phase-space grid.

The Fourier-side kernel exp(nu * (eta xi' - eta' xi)) is separable in the
integer mode indices, so for each pair of xi rows the sum over eta' is a
linear (zero-padded) convolution. Out-of-band terms are dropped.
"""

from __future__ import annotations

import numpy as np

from .grid import (GridError, GridFunction, SpectralFunction, _same_grid, drop_nyquist,
                   forward_ft, inverse_ft)
from .orderings import WeightFunction, apply_weight, weyl
from .symbolic import CPolynomial, _family_params, u_poly

TRIPLE_MAX_MODES = 16 * 16


def _split(kind: str):
    """(alpha, beta) factor pairs with kernel(A - B) = sum alpha(A) beta(B)."""
    if kind == "exp":
        return [(np.exp, lambda b: np.exp(-b))]
    if kind == "sinh":
        return [(np.sinh, np.cosh), (lambda a: -np.cosh(a), np.sinh)]
    if kind == "cosh":
        return [(np.cosh, np.cosh), (lambda a: -np.sinh(a), np.sinh)]
    raise ValueError(kind)


def _twisted_sum(F: np.ndarray, G: np.ndarray, c0: complex, kind: str,
                 with_mass: bool = False):
    """S[a, b] = sum_{a', b'} K(c0 (a b' - a' b)) F[a', b'] G[a - a', b - b'].

    F, G hold the band (Nyquist slice removed) with zero frequency at the centre.
    The eta-direction convolution is summed directly (not by FFT) so every output
    mode keeps relative accuracy even when it is many decades below the peak.
    With ``with_mass`` also returns sum |K F G| per output mode.
    """
    mq, mp = F.shape
    oq, op = mq // 2, mp // 2
    aidx = np.arange(mq) - oq
    bidx = np.arange(mp) - op
    k_out, a_in = np.meshgrid(np.arange(mq), np.arange(mq), indexing="ij")
    toe = k_out - a_in + oq  # index of G for output a and input a'
    inside = (toe >= 0) & (toe < mq)
    toe = np.clip(toe, 0, mq - 1)
    out = np.zeros((mq, mp), dtype=complex)
    mass = np.zeros((mq, mp)) if with_mass else None
    for ib, b in enumerate(bidx):
        jb = np.arange(mp)
        jr = ib - jb + op
        ok = (jr >= 0) & (jr < mp)
        jb, jr = jb[ok], jr[ok]
        bp = bidx[jb]
        V = G[:, jr].T[:, toe] * inside  # (nb', a, a')
        acc = np.zeros(mq, dtype=complex)
        for alpha, beta in _split(kind):
            U = beta(c0 * aidx[None, :] * b) * F[:, jb].T  # (nb', a')
            conv = np.einsum("jk,jak->ja", U, V)
            acc += np.einsum("ja,ja->a", alpha(c0 * aidx[None, :] * bp[:, None]), conv)
        out[:, ib] = acc
        if with_mass:
            mass[:, ib] = np.einsum("jk,jak->a", np.abs(F[:, jb].T), np.abs(V))
    return (out, mass) if with_mass else out


def _weighted_band(f: GridFunction, omega: np.ndarray) -> np.ndarray:
    spectrum = drop_nyquist(forward_ft(f).values)
    return apply_weight(spectrum, omega, 1)[1:, 1:]


def _twisted_product(f: GridFunction, g: GridFunction, w: WeightFunction, nu: complex,
                     kind: str) -> GridFunction:
    _same_grid(f.grid, g.grid)
    grid = f.grid
    omega = w.on_grid(grid)
    F = _weighted_band(f, omega)
    G = _weighted_band(g, omega)
    c0 = nu * grid.deta * grid.dxi
    pref = grid.deta * grid.dxi / (2.0 * np.pi)
    S, mass = _twisted_sum(F, G, c0, kind, with_mass=True)
    full = np.zeros(grid.shape, dtype=complex)
    full[1:, 1:] = S * pref
    # modes lost to cancellation in the sum are dropped; the rest keep relative
    # accuracy, so the division by Omega needs no growth cap
    if np.real(c0) == 0.0:  # unit-modulus kernel, so mass bounds each sum
        lost = np.zeros(grid.shape, dtype=bool)
        lost[1:, 1:] = np.abs(S) <= 64 * np.finfo(float).eps * mass
        full[lost] = 0.0
    full = apply_weight(full, omega, -1, floor=0.0, cap=np.inf, noise=0.0)
    return inverse_ft(SpectralFunction(grid, full))


# ------------------------------------------- polynomial x grid-function route

def spectral_derivative(f: GridFunction, nq: int = 0, np_: int = 0) -> GridFunction:
    if nq == 0 and np_ == 0:
        return f
    E, X = f.grid.dual_mesh()
    spectrum = drop_nyquist(forward_ft(f).values) * (1j * E) ** nq * (1j * X) ** np_
    return inverse_ft(SpectralFunction(f.grid, spectrum))


def _sample_poly(f: CPolynomial, grid, hbar: float) -> GridFunction:
    Q, P = grid.mesh()
    return GridFunction(grid, f.evaluate(Q, P, hbar=hbar))


def _poly_grid_star(f: CPolynomial, g: GridFunction, a: complex, b: complex,
                    hbar: float, left: bool) -> GridFunction:
    """Finite bidifferential sum for a polynomial against a sampled symbol.

    left=True gives f * g, otherwise g * f, for the kernel
    exp(a d_q d_p' + b d_p d_q') acting on (first factor, second factor).
    """
    from math import factorial

    grid = g.grid
    out = grid.zeros()
    nmax = max((n for n, _ in f.terms), default=0)
    mmax = max((m for _, m in f.terms), default=0)
    for j in range(max(nmax, mmax) + 1):
        for k in range(max(nmax, mmax) + 1):
            if left:
                fd = f.diff(j, k)
                if not fd.terms:
                    continue
                gd = spectral_derivative(g, k, j)
            else:
                fd = f.diff(k, j)
                if not fd.terms:
                    continue
                gd = spectral_derivative(g, j, k)
            coef = a**j * b**k / (factorial(j) * factorial(k))
            out = out + _sample_poly(fd, grid, hbar) * gd * coef
    return out


def _u_grid(f: GridFunction, w: WeightFunction, inverse: bool) -> GridFunction:
    if w.family == "weyl":
        return f
    omega = w.on_grid(f.grid)
    spectrum = drop_nyquist(forward_ft(f).values)
    return inverse_ft(SpectralFunction(f.grid, apply_weight(spectrum, omega, -1 if inverse else 1)))


def _mixed_star(f, g, w: WeightFunction, nu: complex) -> GridFunction:
    lam, kappa = _family_params(w)
    lam = complex(lam)
    if float(kappa) == 0.0:
        if isinstance(f, CPolynomial):
            return _poly_grid_star(f, g, lam + nu, lam - nu, w.hbar, left=True)
        return _poly_grid_star(g, f, lam + nu, lam - nu, w.hbar, left=False)
    # general weight: conjugate to the weyl product
    base = weyl(w.hbar)
    if isinstance(f, CPolynomial):
        res = _mixed_star(u_poly(f, w), _u_grid(g, w, False), base, nu)
    else:
        res = _mixed_star(_u_grid(f, w, False), u_poly(g, w), base, nu)
    return _u_grid(res, w, True)


def _dispatch(f, g, w, nu, kind, grid=None):
    f_poly, g_poly = isinstance(f, CPolynomial), isinstance(g, CPolynomial)
    if f_poly and g_poly:
        from .symbolic import star_poly

        if grid is None:
            raise GridError("a grid is needed to sample a product of two polynomials")
        fg = star_poly(f, g, w, nu=nu)
        gf = star_poly(g, f, w, nu=nu)
        val = {"exp": fg, "sinh": (fg - gf) * 0.5, "cosh": (fg + gf) * 0.5}[kind]
        return _sample_poly(val, grid, w.hbar)
    if f_poly or g_poly:
        fg = _mixed_star(f, g, w, nu)
        if kind == "exp":
            return fg
        gf = _mixed_star(g, f, w, nu)
        return (fg - gf) * 0.5 if kind == "sinh" else (fg + gf) * 0.5
    return _twisted_product(f, g, w, nu, kind)


def star(f, g, w: WeightFunction, grid=None) -> GridFunction:
    """f *_Omega g. Either factor may be a CPolynomial (exact finite expansion)."""
    return _dispatch(f, g, w, w.mu, "exp", grid)


def bracket(f, g, w: WeightFunction, grid=None) -> GridFunction:
    """(f * g - g * f) / (2 mu), from the sinh kernel."""
    return _dispatch(f, g, w, w.mu, "sinh", grid) / w.mu


def anti_bracket(f, g, w: WeightFunction, grid=None) -> GridFunction:
    """f * g + g * f, from the cosh kernel."""
    return _dispatch(f, g, w, w.mu, "cosh", grid) * 2.0


def lambda_star(f, g, lam: complex, nu: complex, hbar: float = 1.0, grid=None) -> GridFunction:
    """Product with kernel exp(lam (d_q d_p' + d_p d_q') + nu (d_q d_p' - d_p d_q'))."""
    from .orderings import lambda_family

    return _dispatch(f, g, lambda_family(lam, hbar), nu, "exp", grid)


def u_map(f: GridFunction, w: WeightFunction) -> GridFunction:
    """Spectrum times Omega: carries *_Omega onto the Moyal product."""
    return _u_grid(f, w, False)


def u_inv(f: GridFunction, w: WeightFunction) -> GridFunction:
    return _u_grid(f, w, True)


def poisson_bracket(f: GridFunction, g: GridFunction) -> GridFunction:
    """{f, g} with spectral derivatives."""
    return (spectral_derivative(f, 1, 0) * spectral_derivative(g, 0, 1)
            - spectral_derivative(f, 0, 1) * spectral_derivative(g, 1, 0))


# --------------------------------------------------------- triple kernels

NESTED_KINDS = ("star", "[f,[g,h]]", "[f,[g,h]+]", "[f,[g,h]]+")


def _wedge(e1, x1, e2, x2):
    """sigma1 ^ sigma2 = eta1 xi2 - eta2 xi1."""
    return e1 * x2 - e2 * x1


def triple_kernel_sum(F1, F2, F3, grid, kernel, omega=None) -> np.ndarray:
    """Direct O(N^3) sum over s1 + s2 + s3 = s of
    kernel(s1, s2, s3) F1(s1) F2(s2) F3(s3) (deta dxi / 2 pi)^2 on the band.

    ``kernel`` receives (e1, x1, e2, x2, e3, x3) arrays and returns weights.
    Returns the full-shaped spectral array (Nyquist slice zero), divided by
    omega(s) if given.
    """
    nq, np_ = grid.shape
    if nq * np_ > TRIPLE_MAX_MODES:
        raise GridError(
            f"direct triple kernel limited to {TRIPLE_MAX_MODES} modes (grid has {nq * np_}); "
            "use the nested pairwise route"
        )
    mq, mp = nq - 1, np_ - 1
    oq, op = mq // 2, mp // 2
    ai, bi = np.meshgrid(np.arange(mq) - oq, np.arange(mp) - op, indexing="ij")
    ai, bi = ai.ravel(), bi.ravel()
    de, dx = grid.deta, grid.dxi
    f1 = F1[1:, 1:].ravel()
    f2 = F2[1:, 1:].ravel()
    F3b = F3[1:, 1:]
    out = np.zeros(grid.shape, dtype=complex)
    pref = (de * dx / (2.0 * np.pi)) ** 2
    A1, A2 = ai[:, None], ai[None, :]
    B1, B2 = bi[:, None], bi[None, :]
    base = f1[:, None] * f2[None, :]
    for a, b in zip(ai, bi):
        a3 = a - A1 - A2
        b3 = b - B1 - B2
        ok = (np.abs(a3) <= oq) & (np.abs(b3) <= op)
        h = np.where(ok, F3b[np.clip(a3 + oq, 0, mq - 1), np.clip(b3 + op, 0, mp - 1)], 0.0)
        K = kernel(A1 * de, B1 * dx, A2 * de, B2 * dx, a3 * de, b3 * dx)
        out[a + oq + 1, b + op + 1] = pref * np.sum(K * base * h)
    if omega is not None:
        out = apply_weight(out, omega, -1)
    return out


def _nested_kernel(kind: str, mu: complex):
    def k(e1, x1, e2, x2, e3, x3):
        inner = _wedge(e3, x3, e2, x2)  # g (s2) with h (s3)
        outer = _wedge(e2 + e3, x2 + x3, e1, x1)  # f (s1) with g*h
        if kind == "star":
            return np.exp(mu * (inner + outer))
        if kind == "[f,[g,h]]":
            return 4.0 * np.sinh(mu * inner) * np.sinh(mu * outer)
        if kind == "[f,[g,h]+]":
            return 4.0 * np.cosh(mu * inner) * np.sinh(mu * outer)
        if kind == "[f,[g,h]]+":
            return 4.0 * np.sinh(mu * inner) * np.cosh(mu * outer)
        raise ValueError(f"unknown nested kind {kind!r}; expected one of {NESTED_KINDS}")

    return k


def nested_ops(kind: str, f: GridFunction, g: GridFunction, h: GridFunction,
               w: WeightFunction) -> GridFunction:
    """Direct Fourier triple-kernel evaluation of f*g*h or a nested commutator.

    The commutator kinds use the unnormalized [a, b] = a*b - b*a and
    [a, b]+ = a*b + b*a.
    """
    if kind not in NESTED_KINDS:
        raise ValueError(f"unknown nested kind {kind!r}; expected one of {NESTED_KINDS}")
    _same_grid(f.grid, g.grid)
    _same_grid(f.grid, h.grid)
    grid = f.grid
    omega = w.on_grid(grid)
    Fs = [apply_weight(drop_nyquist(forward_ft(x).values), omega, 1) for x in (f, g, h)]
    spectrum = triple_kernel_sum(*Fs, grid, _nested_kernel(kind, w.mu), omega)
    return inverse_ft(SpectralFunction(grid, spectrum))


def triple_star(f: GridFunction, g: GridFunction, h: GridFunction, w: WeightFunction) -> GridFunction:
    return nested_ops("star", f, g, h, w)


def nested_pairwise(kind: str, f, g, h, w: WeightFunction) -> GridFunction:
    """The same quantities composed from pairwise products."""
    mu = w.mu
    if kind == "star":
        return star(f, star(g, h, w), w)
    if kind == "[f,[g,h]]":
        return bracket(f, bracket(g, h, w), w) * (2 * mu) ** 2
    if kind == "[f,[g,h]+]":
        return bracket(f, anti_bracket(g, h, w), w) * (2 * mu)
    if kind == "[f,[g,h]]+":
        return anti_bracket(f, bracket(g, h, w), w) * (2 * mu)
    raise ValueError(kind)
