import csv

import numpy as np
import pytest

from gmoyal import GridFunction, make_grid, star, weyl
from gmoyal.cli import run_command
from gmoyal.io import read_myl, write_myl

MODEL = """
hbar: 1.0
grid: {q_min: -6, q_max: 6, n_q: 32, p_min: -6, p_max: 6, n_p: 32}
model:
  hamiltonian: (q^2 + p^2)/2
  jumps: ["0.22360679774997896*(q + i*p)"]
"""


def run(capsys, *argv):
    code = run_command(["-q", *argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def symbols(tmp_path):
    g = make_grid(-8, 8, 64, -8, 8, 64)
    Q, P = g.mesh()
    a = GridFunction(g, np.exp(-(Q**2 + P**2) / 2))
    b = GridFunction(g, np.exp(-((Q - 1) ** 2 + P**2) / 3) * np.exp(0.5j * P))
    write_myl(tmp_path / "a.myl", a)
    write_myl(tmp_path / "b.myl", b)
    return tmp_path, a, b


def test_star_matches_library(symbols, capsys):
    path, a, b = symbols
    code, _, _ = run(capsys, "star", str(path / "a.myl"), str(path / "b.myl"), "--out", str(path / "ab.myl"))
    assert code == 0
    assert np.array_equal(read_myl(path / "ab.myl").values, star(a, b, weyl()).values)


def test_quantize_dequantize_round_trip(symbols, capsys):
    path, a, _ = symbols
    assert run(capsys, "quantize", str(path / "a.myl"), "--out", str(path / "A.myl"))[0] == 0
    assert run(capsys, "dequantize", str(path / "A.myl"), "--out", str(path / "a2.myl"))[0] == 0
    back = read_myl(path / "a2.myl")
    assert (back - a).norm() < 1e-8 * a.norm()


def test_marginals_files(symbols, capsys):
    path, a, _ = symbols
    code, _, _ = run(capsys, "marginals", str(path / "a.myl"), "--out-q", str(path / "mq.csv"),
                     "--out-p", str(path / "mp.csv"))
    assert code == 0 and (path / "mq.csv").exists()


def test_check_ordering_report(capsys):
    code, out, _ = run(capsys, "check-ordering", "--family", "lambda", "--lambda-re", "0.05")
    assert code == 0
    lines = {l.split()[0]: l.split()[-1] for l in out.splitlines()[1:]}
    assert lines == {"trace": "false", "hermiticity": "true", "marginal": "true", "classical": "false"}
    # lambda proportional to hbar does reach the classical limit
    _, out, _ = run(capsys, "check-ordering", "--family", "lambda", "--lambda-re", "0.05", "--scaling", "linear")
    assert out.splitlines()[-1].split()[-1] == "true"


def test_oracle_outputs(capsys):
    assert run(capsys, "oracle", "star", "--f", "q", "--g", "p")[1].strip() == "q*p + (I*hbar/2)"
    assert run(capsys, "oracle", "order", "--family", "weyl", "--expr", "q*p")[1].strip() == "QP + (-I*hbar/2)"


def test_spectrum_psd_report(capsys):
    code, out, _ = run(capsys, "spectrum", "--seed", "3", "--omegas=-2:2:5")
    assert code == 0 and "omega" in out


def test_evolve_with_oracle(tmp_path, capsys):
    cfg = tmp_path / "m.yaml"
    cfg.write_text(MODEL)
    code, out, _ = run(capsys, "evolve", "--model", str(cfg), "--coherent", "1,0.5", "--dt", "0.01",
                       "--t-end", "0.1", "--snap-every", "5", "--oracle", "--out-dir", str(tmp_path / "o"))
    assert code == 0
    snaps = sorted((tmp_path / "o").glob("snap_*.myl"))
    assert len(snaps) == 3
    with open(tmp_path / "o" / "audit.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    l2 = [float(r["l2_vs_oracle"]) for r in rows if r["l2_vs_oracle"]]
    assert l2 and max(l2) < 1e-5


def test_check_diagram(tmp_path, capsys):
    cfg = tmp_path / "m.yaml"
    cfg.write_text(MODEL)
    code, out, _ = run(capsys, "check-diagram", "--model", str(cfg), "--coherent", "1,0.5", "--t", "0.05",
                       "--dt", "0.01")
    assert code == 0 and "ok" in out


def test_check_projection(capsys):
    code, out, _ = run(capsys, "check-projection", "--sys-family", "lambda", "--sys-lambda", "0.1")
    assert code == 0 and "FAIL" not in out
    code, _, err = run(capsys, "check-projection", "--cross", "0.2")
    assert code == 1 and "factorize" in err


def test_run_record_on_stderr(capsys):
    assert run_command(["check-ordering"]) == 0
    err = capsys.readouterr().err
    assert "config_digest" in err and "threads: 1" in err


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    [],
    ["check-ordering", "--family", "lambda"],
    ["oracle", "star", "--f", "q^^2", "--g", "p"],
    ["quantize", "/nonexistent.myl", "--out", "/tmp/x.myl"],
])
def test_invalid_input_exits_1(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_audit_failure_exits_2(tmp_path, capsys):
    cfg = tmp_path / "m.yaml"
    cfg.write_text(MODEL + "tolerances: {audit: 1e-30}\n")
    code, _, err = run(capsys, "evolve", "--model", str(cfg), "--dt", "0.01", "--t-end", "0.05",
                       "--out-dir", str(tmp_path / "o"))
    assert code == 2 and "check failed" in err


def test_threads_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("GMOYAL_THREADS", "x")
    assert run(capsys, "check-ordering")[0] == 1
