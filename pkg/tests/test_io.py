import numpy as np
import pytest

from gmoyal import GridFunction, OperatorMatrix, PositionBasis, make_grid
from gmoyal.io import FormatError, from_bytes, from_csv, read_myl, to_bytes, to_csv, write_myl, write_rows


def test_plain_array_round_trip():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4, 5)) + 1j * rng.normal(size=(3, 4, 5))
    b = from_bytes(to_bytes(a))
    assert b.shape == a.shape and np.array_equal(a, b)


def test_header_layout():
    data = to_bytes(np.array([1 + 2j, -0.5j]))
    assert data[:4] == b"MYL1"
    assert int.from_bytes(data[4:8], "little") == 1
    assert int.from_bytes(data[8:12], "little") == 2
    assert np.frombuffer(data[12:], "<f8").tolist() == [1.0, 2.0, 0.0, -0.5]


def test_symbol_round_trip_keeps_grid(tmp_path):
    g = make_grid(-3, 5, 8, -2, 2, 6)
    Q, P = g.mesh()
    f = GridFunction(g, np.exp(1j * Q) * P)
    write_myl(tmp_path / "f.myl", f)
    back = read_myl(tmp_path / "f.myl")
    assert isinstance(back, GridFunction)
    assert back.grid == g and np.array_equal(back.values, f.values)


def test_operator_round_trip_keeps_basis():
    basis = PositionBasis(-4, 4, 10, 0.5)
    rng = np.random.default_rng(2)
    op = OperatorMatrix(basis, rng.normal(size=(10, 10)) + 0j)
    back = from_bytes(to_bytes(op))
    assert isinstance(back, OperatorMatrix)
    assert back.basis.hbar == 0.5 and np.array_equal(back.entries, op.entries)


@pytest.mark.parametrize("data,msg", [
    (b"XXXX", "magic"),
    (b"MYL1" + (1).to_bytes(4, "little") + (3).to_bytes(4, "little") + b"\0" * 10, "truncated"),
    (to_bytes(np.zeros(2)) + b"ZZZZ", "trailer"),
])
def test_malformed_input(data, msg):
    with pytest.raises(FormatError, match=msg):
        from_bytes(data)


def test_csv_round_trip_is_exact():
    a = np.array([[0.1 + 1e-300j, -0.0 - 2.5j], [np.pi, 1 / 3 - 1j / 7]])
    b = from_csv(to_csv(a))
    assert np.array_equal(a, b)
    assert np.signbit(b[0, 1].real) and np.signbit(b[0, 1].imag)


def test_csv_rejects_garbage():
    with pytest.raises(FormatError):
        from_csv("1+2j,abc\n")
    with pytest.raises(FormatError):
        from_csv("1,2\n3\n")


def test_write_rows(tmp_path):
    write_rows(tmp_path / "t.csv", ["t", "x"], [(0.0, 0.1), (1.0, "")])
    assert (tmp_path / "t.csv").read_text() == "t,x\n0.0,0.1\n1.0,\n"
