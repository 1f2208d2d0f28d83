import numpy as np
import pytest

from gmoyal import BipartiteGrid, BipartiteModel, JointWeight, gauss, lambda_family, make_grid, parse_poly, projection_checks, weyl
from gmoyal.bipartite import (ProjectionPreconditionError, bipartite_pairing, maxwellian_reservoir,
                              trig_test_states)

H_SYS = parse_poly("(q^2+p^2)/2")
H_RES = parse_poly("p^2/2")
COUPLE = [(parse_poly("q"), parse_poly("q"))]


@pytest.fixture(scope="module")
def states():
    return trig_test_states()


PAIRS = [(weyl(), weyl()), (lambda_family(0.1), weyl()), (gauss(-0.25), weyl()),
         (lambda_family(0.1), lambda_family(0.05))]


@pytest.mark.parametrize("ws,wr", PAIRS, ids=["weyl", "lambda-weyl", "gauss-weyl", "lambda-lambda"])
@pytest.mark.parametrize("h_int", [COUPLE, []], ids=["coupled", "free"])
def test_projection_identities(states, ws, wr, h_int):
    bg, rr, rho, obs = states
    model = BipartiteModel(bg, JointWeight(ws, wr), H_SYS, H_RES, h_int, coupling=0.5)
    report = projection_checks(model, rr, rho, obs)
    assert report.ok(1e-7), "\n".join(report.lines(1e-7))
    assert ("P L = L P (no interaction)" in report.residuals) == (not h_int)


def test_non_factorizing_weight_is_rejected(states):
    bg, rr, rho, obs = states
    w = JointWeight(weyl(), weyl(), cross=0.1)
    model = BipartiteModel(bg, w, H_SYS, H_RES, COUPLE)
    with pytest.raises(ProjectionPreconditionError, match="factorize"):
        projection_checks(model, rr, rho, obs)


def test_non_stationary_reservoir_is_rejected(states):
    bg, _, rho, obs = states
    g = bg.res
    Q, _ = g.mesh()
    rr = 1 + 0.5 * np.cos(np.pi * Q / 6)
    rr = rr / (rr.sum() * g.dq * g.dp)
    model = BipartiteModel(bg, JointWeight(weyl(), weyl()), H_SYS, H_RES, COUPLE)
    with pytest.raises(ProjectionPreconditionError, match="commute"):
        projection_checks(model, rr, rho, obs)


def test_unnormalized_reservoir_is_rejected(states):
    bg, rr, rho, obs = states
    model = BipartiteModel(bg, JointWeight(weyl(), weyl()), H_SYS, H_RES, COUPLE)
    with pytest.raises(ProjectionPreconditionError, match="integrates"):
        projection_checks(model, 2 * rr, rho, obs)


def test_maxwellian_is_normalized_and_stationary():
    g = make_grid(-6, 6, 16, -6, 6, 16)
    rr = maxwellian_reservoir(g, 0.7)
    assert abs(rr.sum() * g.dq * g.dp - 1) < 1e-12
    bg = BipartiteGrid(g, g)
    model = BipartiteModel(bg, JointWeight(weyl(), weyl()), H_SYS, H_RES)
    comm = model.liouville_res(np.broadcast_to(rr[None, None], bg.shape).astype(complex))
    assert np.abs(comm).max() < 1e-12


def test_weyl_pairing_is_plain_integral(states):
    bg, _, rho, obs = states
    direct = np.sum(np.conj(obs) * rho) * bg.cell
    assert abs(bipartite_pairing(obs, rho, bg, JointWeight(weyl(), weyl())) - direct) < 1e-10 * abs(direct)


def test_liouvillian_is_antisymmetric(states):
    bg, _, rho, obs = states
    model = BipartiteModel(bg, JointWeight(lambda_family(0.1), weyl()), H_SYS, H_RES, COUPLE)
    w = model.w
    x = bipartite_pairing(obs, model.liouville(rho), bg, w)
    y = bipartite_pairing(model.liouville(obs), rho, bg, w)
    assert abs(x - y) < 1e-9 * bg.norm(obs) * bg.norm(model.liouville(rho))
