import pytest

from gmoyal import parse_config
from gmoyal.config import ConfigError, load_config

FULL = """
hbar: 0.5
grid: {q_min: -6, q_max: 6, n_q: 32, p_min: -5, p_max: 5, n_p: 16}
weight: {family: lambda, lambda_re: 0.1}
basis: {margin: 0.5}
model:
  hamiltonian: (q^2 + p^2)/2
  jumps: ["0.2*(q + i*p)"]
  coupling: 0.5
evolve: {dt: 0.01, t_end: 0.5, snap_every: 10}
tolerances: {audit: 1e-7}
"""


def test_full_config():
    cfg = parse_config(FULL)
    assert cfg.hbar == 0.5
    assert cfg.grid.n_q == 32 and cfg.grid.p_max == 5
    assert cfg.weight.family == "lambda" and cfg.weight.lam == 0.1
    assert cfg.model.coupling == 0.5 and len(cfg.model.jumps) == 1
    assert cfg.evolve == {"dt": 0.01, "t_end": 0.5, "snap_every": 10, "oracle": False}
    assert cfg.tolerances["audit"] == 1e-7 and cfg.tolerances["diagram"] == 1e-5
    assert len(cfg.digest) == 16


def test_defaults():
    cfg = parse_config("")
    assert cfg.hbar == 1.0 and cfg.weight.family == "weyl"
    assert (cfg.grid.q_min, cfg.grid.q_max, cfg.grid.n_q) == (-8, 8, 64)
    assert cfg.model is None


def test_digest_tracks_content():
    assert parse_config("hbar: 1").digest != parse_config("hbar: 2").digest
    assert parse_config("hbar: 1\ngrid: {n_q: 32}").digest == parse_config("grid: {n_q: 32}\nhbar: 1").digest


@pytest.mark.parametrize("text,loc", [
    ("weight: {family: lambda}", "weight.lambda_re"),
    ("weight: {family: gauss}", "weight.kappa"),
    ("weight: {family: weyl, kappa: 1}", "weight.kappa"),
    ("weight: {family: moyal}", "weight.family"),
    ("grid: {n_q: 63}", "grid.n_q"),
    ("grid: {q_min: 1, q_max: -1}", "grid"),
    ("grid: {spacing: 1}", "grid.spacing"),
    ("hbar: -1", "hbar"),
    ("hbar: yes", "hbar"),
    ("colour: red", "colour"),
    ("model: {jumps: [q]}", "model.hamiltonian"),
    ("model: {hamiltonian: 'q^^2'}", "model.hamiltonian"),
    ("model: {hamiltonian: q, jumps: [q, p], rates: [[1, 0]]}", "model.rates"),
    ("model: {hamiltonian: q, route: fast}", "model.route"),
    ("basis: {margin: 1, n_x: 64}", "basis.margin"),
    ("basis: {x_min: -1, x_max: 1}", "basis.n_x"),
    ("evolve: {dt: 0}", "evolve.dt"),
    ("tolerances: {audit: -1}", "tolerances.audit"),
])
def test_errors_name_the_location(text, loc):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.location == loc


def test_malformed_yaml_reports_position():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("hbar: 1\ngrid: {n_q: [\n")


def test_load_from_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(FULL)
    assert load_config(path).digest == parse_config(FULL).digest
