import math
import warnings

import numpy as np
import pytest

from gmoyal import GridFunction, forward_ft, integrate, inverse_ft, make_grid, pairing, weyl
from gmoyal.grid import BoundaryWarning, GridError, SpectralFunction, band_mask, drop_nyquist

from conftest import gaussian


def test_grid_spacings():
    g = make_grid(-8, 8, 64, -8, 8, 64)
    assert g.dq == 0.25
    assert g.deta == pytest.approx(2 * math.pi / 16, rel=1e-15)
    assert abs(g.dq * g.deta * g.n_q - 2 * math.pi) <= 4 * np.spacing(2 * math.pi)
    assert g.eta[g.n_q // 2] == 0.0
    assert g.shape == (64, 64)


def test_minimal_grid():
    g = make_grid(-1, 1, 4, -1, 1, 4)
    assert g.shape == (4, 4)


@pytest.mark.parametrize("args", [
    (0, 1, 3, 0, 1, 4),
    (0, 1, 4, 0, 1, 2),
    (1, 0, 4, 0, 1, 4),
    (0, np.inf, 4, 0, 1, 4),
    (0, 1, 4, 0, np.nan, 4),
])
def test_grid_rejects_bad_input(args):
    with pytest.raises(GridError):
        make_grid(*args)


def test_gaussian_transform_matches_closed_form(grid64):
    # (1/2pi) \int exp(-(q^2+p^2)/2) exp(-i(eta q + xi p)) = exp(-(eta^2+xi^2)/2)
    f = gaussian(grid64)
    F = forward_ft(f)
    E, X = grid64.dual_mesh()
    assert np.abs(F.values - np.exp(-(E**2 + X**2) / 2)).max() < 1e-13


def test_shifted_gaussian_phase(grid64):
    f = gaussian(grid64, centre=(1.0, -0.5))
    E, X = grid64.dual_mesh()
    expected = np.exp(-(E**2 + X**2) / 2 - 1j * (E * 1.0 - X * 0.5))
    assert np.abs(forward_ft(f).values - expected).max() < 1e-10  # tail cut at the edge


def test_round_trip(grid64):
    rng = np.random.default_rng(3)
    f = GridFunction(grid64, rng.normal(size=grid64.shape) + 1j * rng.normal(size=grid64.shape))
    back = inverse_ft(forward_ft(f))
    assert (back - f).norm() / f.norm() <= 1e-12


def test_integrate_gaussian(grid64):
    assert integrate(gaussian(grid64)) == pytest.approx(2 * math.pi, rel=1e-13)


def test_integrate_warns_on_undecayed(grid64):
    with pytest.warns(BoundaryWarning):
        integrate(grid64.ones())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        integrate(grid64.ones(), warn=False)


def test_pairing_is_hermitian_form(grid64):
    a = gaussian(grid64, (0.5, 0.1), 1.0, (0.2, 0.0))
    b = gaussian(grid64, (-0.3, 0.4), 1.1)
    w = weyl()
    assert pairing(a, b, w) == pytest.approx(np.conj(pairing(b, a, w)), abs=1e-12)
    assert pairing(a, a, w).real > 0
    # for Weyl the pairing reduces to the plain L2 product
    plain = np.sum(np.conj(a.values) * b.values) * grid64.dq * grid64.dp
    assert pairing(a, b, w) == pytest.approx(plain, abs=1e-12)


def test_mismatched_grids_rejected(grid64):
    other = make_grid(-8, 8, 32, -8, 8, 32)
    with pytest.raises(GridError):
        gaussian(grid64) + gaussian(other)


def test_shape_and_finiteness_checked(grid64):
    with pytest.raises(GridError):
        GridFunction(grid64, np.zeros((4, 4)))
    bad = np.zeros(grid64.shape)
    bad[0, 0] = np.nan
    with pytest.raises(GridError):
        GridFunction(grid64, bad)
    with pytest.raises(TypeError):
        gaussian(grid64) + SpectralFunction(grid64, np.zeros(grid64.shape))


def test_band_helpers(grid64):
    m = band_mask(grid64)
    assert not m[0].any() and not m[:, 0].any() and m[1:, 1:].all()
    z = drop_nyquist(np.ones((4, 6)))
    assert z[0].sum() == 0 and z[:, 0].sum() == 0 and z[1:, 1:].all()
