import numpy as np
import pytest

from gmoyal import make_grid


def rel(a, b):
    """Relative L2 distance of two GridFunctions, scaled by the second."""
    return (a - b).norm() / b.norm()


def gaussian(grid, centre=(0.0, 0.0), width=1.0, wave=(0.0, 0.0)):
    q0, p0 = centre
    k, l = wave
    return grid.sample(lambda q, p: np.exp(-((q - q0) ** 2 + (p - p0) ** 2) / (2 * width**2)
                                           + 1j * (k * q + l * p)))


@pytest.fixture(scope="session")
def grid64():
    return make_grid(-8, 8, 64, -8, 8, 64)


@pytest.fixture(scope="session")
def grid_wide():
    return make_grid(-10, 10, 64, -10, 10, 64)


@pytest.fixture(scope="session")
def grid_trig():
    return make_grid(-np.pi, np.pi, 16, -np.pi, np.pi, 16)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
