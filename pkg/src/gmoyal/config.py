"""Run configuration: YAML text validated against a fixed schema.

Every error names the offending location (``weight.lambda_re``) and unknown
keys are rejected, so a config either fully validates or nothing runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .grid import GridError, PhaseGrid, make_grid
from .kinetics import AUDIT_TOL, STABILITY_SAFETY
from .orderings import WeightFunction
from .symbolic import CPolynomial, PolySyntaxError, parse_poly
from .transforms import PositionBasis


class ConfigError(ValueError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


GRID_DEFAULTS = {"q_min": -8.0, "q_max": 8.0, "n_q": 64, "p_min": -8.0, "p_max": 8.0, "n_p": 64}
TOLERANCE_DEFAULTS = {"audit": AUDIT_TOL, "stability_safety": STABILITY_SAFETY,
                      "diagram": 1e-5, "projection": 1e-7, "predicate": 1e-12}
SCHEMA = {
    "hbar": None,
    "grid": set(GRID_DEFAULTS),
    "basis": {"x_min", "x_max", "n_x", "margin"},
    "weight": {"family", "lambda_re", "lambda_im", "kappa", "scaling"},
    "model": {"hamiltonian", "jumps", "jump_adjoints", "rates", "coupling", "lamb_shift", "route"},
    "evolve": {"dt", "t_end", "snap_every", "oracle"},
    "tolerances": set(TOLERANCE_DEFAULTS),
}


@dataclass
class ModelConfig:
    hamiltonian: CPolynomial
    jumps: list = field(default_factory=list)
    jump_adjoints: list | None = None
    rates: list | None = None
    coupling: float = 1.0
    lamb_shift: CPolynomial | None = None
    route: str = "auto"


@dataclass
class RunConfig:
    hbar: float
    grid: PhaseGrid
    weight: WeightFunction
    basis: PositionBasis
    model: ModelConfig | None = None
    evolve: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        """SHA-256 of the normalized raw config (first 16 hex digits)."""
        text = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def summary(self) -> dict:
        g = self.grid
        return {
            "config_digest": self.digest,
            "hbar": self.hbar,
            "family": self.weight.describe(),
            "grid": f"q[{g.q_min:g},{g.q_max:g}]x{g.n_q} p[{g.p_min:g},{g.p_max:g}]x{g.n_p}",
            "tolerances": dict(self.tolerances),
        }


def _number(value, loc: str, positive: bool = False, integer: bool = False):
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms such as 1e-7 as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(loc, f"expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(loc, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(loc, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(loc, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _block(raw: dict, name: str) -> dict:
    block = raw.get(name) or {}
    if not isinstance(block, dict):
        raise ConfigError(name, "expected a mapping")
    unknown = set(block) - SCHEMA[name]
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    return block


def _poly(text, loc: str) -> CPolynomial:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text)
    if not isinstance(text, str):
        raise ConfigError(loc, f"expected a polynomial expression, got {text!r}")
    try:
        return parse_poly(text)
    except PolySyntaxError as exc:
        raise ConfigError(loc, str(exc)) from None


def _grid(raw: dict) -> PhaseGrid:
    block = {**GRID_DEFAULTS, **_block(raw, "grid")}
    vals = {}
    for k, v in block.items():
        vals[k] = _number(v, f"grid.{k}", integer=k.startswith("n_"))
    for k in ("n_q", "n_p"):
        if vals[k] < 4 or vals[k] % 2:
            raise ConfigError(f"grid.{k}", f"must be an even integer >= 4, got {vals[k]}")
    try:
        return make_grid(vals["q_min"], vals["q_max"], vals["n_q"], vals["p_min"], vals["p_max"], vals["n_p"])
    except GridError as exc:
        raise ConfigError("grid", str(exc)) from None


def _weight(raw: dict, hbar: float) -> WeightFunction:
    block = _block(raw, "weight")
    family = block.get("family", "weyl")
    if family not in ("weyl", "lambda", "gauss", "product"):
        raise ConfigError("weight.family", f"unknown family {family!r}")
    needs = {"weyl": (), "lambda": ("lambda_re",), "gauss": ("kappa",), "product": ("lambda_re", "kappa")}
    for key in needs[family]:
        if key not in block:
            raise ConfigError(f"weight.{key}", f"required for family {family!r}")
    allowed = set(needs[family]) | {"family", "scaling"}
    if "lambda_re" in needs[family]:
        allowed.add("lambda_im")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"weight.{key}", f"not a parameter of family {family!r}")
    lam = complex(_number(block.get("lambda_re", 0.0), "weight.lambda_re"),
                  _number(block.get("lambda_im", 0.0), "weight.lambda_im"))
    kappa = _number(block.get("kappa", 0.0), "weight.kappa")
    scaling = block.get("scaling", "fixed")
    if scaling not in ("fixed", "linear"):
        raise ConfigError("weight.scaling", f"expected 'fixed' or 'linear', got {scaling!r}")
    return WeightFunction(family, hbar, lam=lam, kappa=kappa, scaling=scaling)


def _basis(raw: dict, grid: PhaseGrid, hbar: float) -> PositionBasis:
    block = _block(raw, "basis")
    explicit = {"x_min", "x_max", "n_x"} & set(block)
    if explicit:
        if "margin" in block:
            raise ConfigError("basis.margin", "give either margin or x_min/x_max/n_x")
        for key in ("x_min", "x_max", "n_x"):
            if key not in block:
                raise ConfigError(f"basis.{key}", "required when the basis is given explicitly")
        n = _number(block["n_x"], "basis.n_x", positive=True, integer=True)
        if n % 2 or n < 4:
            raise ConfigError("basis.n_x", f"must be an even integer >= 4, got {n}")
        lo = _number(block["x_min"], "basis.x_min")
        hi = _number(block["x_max"], "basis.x_max")
        if not hi > lo:
            raise ConfigError("basis.x_max", "must exceed x_min")
        return PositionBasis(lo, hi, n, hbar)
    margin = _number(block.get("margin", 0.25), "basis.margin")
    if margin < 0:
        raise ConfigError("basis.margin", "must be non-negative")
    return PositionBasis.for_grid(grid, hbar, margin)


def _model(raw: dict) -> ModelConfig | None:
    if "model" not in raw:
        return None
    block = _block(raw, "model")
    if "hamiltonian" not in block:
        raise ConfigError("model.hamiltonian", "required")
    jumps = block.get("jumps", []) or []
    if not isinstance(jumps, list):
        raise ConfigError("model.jumps", "expected a list of expressions")
    out = ModelConfig(_poly(block["hamiltonian"], "model.hamiltonian"),
                      [_poly(j, f"model.jumps[{i}]") for i, j in enumerate(jumps)])
    if "jump_adjoints" in block:
        adj = block["jump_adjoints"]
        if not isinstance(adj, list) or len(adj) != len(jumps):
            raise ConfigError("model.jump_adjoints", "expected one expression per jump")
        out.jump_adjoints = [_poly(j, f"model.jump_adjoints[{i}]") for i, j in enumerate(adj)]
    if "rates" in block:
        rates = block["rates"]
        n = len(jumps)
        if not (isinstance(rates, list) and len(rates) == n
                and all(isinstance(r, list) and len(r) == n for r in rates)):
            raise ConfigError("model.rates", f"expected a {n} x {n} matrix")
        out.rates = [[_number(v, f"model.rates[{i}][{j}]") for j, v in enumerate(r)]
                     for i, r in enumerate(rates)]
    if "coupling" in block:
        out.coupling = _number(block["coupling"], "model.coupling")
    if "lamb_shift" in block:
        out.lamb_shift = _poly(block["lamb_shift"], "model.lamb_shift")
    route = block.get("route", "auto")
    if route not in ("auto", "diffop", "star"):
        raise ConfigError("model.route", f"expected auto, diffop or star, got {route!r}")
    out.route = route
    return out


def _evolve(raw: dict) -> dict:
    block = _block(raw, "evolve")
    out = {"dt": 1e-3, "t_end": 1.0, "snap_every": None, "oracle": False}
    for key in ("dt", "t_end"):
        if key in block:
            out[key] = _number(block[key], f"evolve.{key}", positive=True)
    if block.get("snap_every") is not None:
        out["snap_every"] = _number(block["snap_every"], "evolve.snap_every", positive=True, integer=True)
    if "oracle" in block:
        if not isinstance(block["oracle"], bool):
            raise ConfigError("evolve.oracle", "expected true or false")
        out["oracle"] = block["oracle"]
    return out


def parse_config(text: str) -> RunConfig:
    """Validate YAML config text into a RunConfig with defaults filled in."""
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(where, f"malformed YAML: {getattr(exc, 'problem', exc)}") from None
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    hbar = _number(raw.get("hbar", 1.0), "hbar", positive=True)
    grid = _grid(raw)
    weight = _weight(raw, hbar)
    basis = _basis(raw, grid, hbar)
    tol_block = _block(raw, "tolerances")
    tolerances = {k: _number(tol_block.get(k, v), f"tolerances.{k}", positive=True)
                  for k, v in TOLERANCE_DEFAULTS.items()}
    return RunConfig(hbar, grid, weight, basis, _model(raw), _evolve(raw), tolerances, raw)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())

