import numpy as np
import pytest

from gmoyal import (anti_bracket, bracket, gauss, integrate, lambda_family, lambda_star, make_grid,
                    nested_ops, parse_poly, product, star, triple_star, u_inv, u_map, weyl)
from gmoyal.grid import GridError
from gmoyal.star import nested_pairwise, poisson_bracket

from conftest import gaussian, rel

WEIGHTS = [weyl(), lambda_family(0.1, scaling="linear"), gauss(-0.25, scaling="linear")]


@pytest.fixture(scope="module")
def syms(grid64):
    return (gaussian(grid64, (0.5, -0.3), 1.0, (0.3, 0.0)),
            gaussian(grid64, (-0.4, 0.2), 1.2),
            gaussian(grid64, (0.1, 0.4), 0.9, (0.0, -0.4)))


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.family)
def test_unit(grid64, syms, w):
    f = syms[0]
    one = grid64.ones()
    assert rel(star(one, f, w), f) <= 1e-9
    assert rel(star(f, one, w), f) <= 1e-9


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.family)
def test_associativity(syms, w):
    f, g, h = syms
    assert rel(star(star(f, g, w), h, w), star(f, star(g, h, w), w)) <= 1e-9


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.family)
def test_product_splits_into_bracket_parts(syms, w):
    f, g, _ = syms
    whole = star(f, g, w)
    assert rel(anti_bracket(f, g, w) * 0.5 + bracket(f, g, w) * w.mu, whole) <= 1e-12
    assert rel(bracket(f, g, w) * (2 * w.mu), whole - star(g, f, w)) <= 1e-10


@pytest.mark.parametrize("w", WEIGHTS[1:], ids=lambda w: w.family)
def test_u_isomorphism(syms, w):
    f, g, _ = syms
    moyal = weyl()
    assert rel(u_map(star(f, g, w), w), star(u_map(f, w), u_map(g, w), moyal)) <= 1e-8
    assert rel(u_map(bracket(f, g, w), w), bracket(u_map(f, w), u_map(g, w), moyal)) <= 1e-8
    assert rel(u_inv(u_map(f, w), w), f) <= 1e-9


def test_polynomial_factor_exact(grid64):
    # q * p = qp + i hbar / 2 everywhere on the grid
    r = star(parse_poly("q"), parse_poly("p"), weyl(), grid=grid64)
    Q, P = grid64.mesh()
    assert np.abs(r.values - (Q * P + 0.5j)).max() < 1e-12


def test_moyal_trace_property(syms):
    f, g, _ = syms
    w = weyl()
    assert integrate(star(f, g, w)) == pytest.approx(integrate(f * g), abs=1e-12)
    assert integrate(star(f, g, w)) == pytest.approx(integrate(star(g, f, w)), abs=1e-12)


def test_bracket_tends_to_poisson(grid64, syms):
    f, g, _ = syms
    errs = [(bracket(f, g, weyl(h)) - poisson_bracket(f, g)).norm() for h in (0.2, 0.1, 0.05)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(abs(r - 4.0) <= 0.3 for r in ratios)


def test_lambda_star_matches_family_product(syms):
    f, g, _ = syms
    w = lambda_family(0.1)
    assert rel(lambda_star(f, g, 0.1, w.mu), star(f, g, w)) <= 1e-12


def test_lambda_star_polynomial_relations(grid64):
    q, p = parse_poly("q"), parse_poly("p")
    Q, P = grid64.mesh()
    lam, nu = 0.2, 0.3 + 0.1j
    assert np.abs(lambda_star(q, p, lam, nu, grid=grid64).values - (Q * P + lam + nu)).max() < 1e-12
    assert np.abs(lambda_star(p, q, lam, nu, grid=grid64).values - (Q * P + lam - nu)).max() < 1e-12


@pytest.fixture(scope="module")
def small():
    g = make_grid(-np.pi, np.pi, 16, -np.pi, np.pi, 16)
    Q, P = g.mesh()
    from gmoyal import GridFunction
    return (GridFunction(g, 1 + 0.3 * np.cos(Q) + 0.2 * np.sin(P + Q)),
            GridFunction(g, 0.4 * (np.cos(Q) + 1j * np.sin(P))),
            GridFunction(g, 0.3 * np.exp(1j * (Q - P)) + 0.2))


@pytest.mark.parametrize("kind", ["star", "[f,[g,h]]", "[f,[g,h]+]", "[f,[g,h]]+"])
@pytest.mark.parametrize("w", [weyl(), lambda_family(0.1), product(0.1, -0.05)], ids=lambda w: w.family)
def test_triple_kernels_match_pairwise(small, kind, w):
    f, g, h = small
    a = nested_ops(kind, f, g, h, w)
    b = nested_pairwise(kind, f, g, h, w)
    assert np.abs(a.values - b.values).max() <= 1e-10 * max(1.0, np.abs(b.values).max())


def test_triple_star(small):
    f, g, h = small
    w = weyl()
    assert np.abs(triple_star(f, g, h, w).values - star(star(f, g, w), h, w).values).max() < 1e-10


def test_triple_kernel_size_gate(grid64, syms):
    with pytest.raises(GridError):
        triple_star(*syms, weyl())
    with pytest.raises(ValueError):
        nested_ops("bogus", *syms, weyl())
