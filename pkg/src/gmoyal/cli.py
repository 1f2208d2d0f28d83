"""Command-line entry point ``gmoyal``.

Exit status: 0 on success, 1 on invalid input or configuration, 2 when a
numerical audit or property check fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import io as mio
from .config import ConfigError, RunConfig, parse_config
from .grid import GridFunction
from .kinetics import (AuditError, EvolutionState, KineticsError, LindbladModel, build_generator,
                       correlation_spectrum, diagram_commutes, evolve, lorentzian_dataset,
                       model_operators, oracle_evolve_matrix, psd_check, CorrelationData)
from .orderings import (WeightOverflowError, check_classical_limit, check_hermiticity,
                        check_marginal_condition, check_trace_pairing)
from .star import bracket, lambda_star, star
from .symbolic import (PolySyntaxError, format_cpoly, format_ncpoly, lambda_order, parse_poly,
                       quantize_poly, star_poly, weyl_order)
from .transforms import dequantize, from_weyl_symbol, marginals, quantize

log = logging.getLogger("gmoyal")
THREADS_ENV = "GMOYAL_THREADS"


class UsageError(Exception):
    """Bad command line (exit status 1)."""


class CheckFailed(Exception):
    """A property check or audit reported failure (exit status 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ------------------------------------------------------------- shared flags

def _weight_flags(p):
    g = p.add_argument_group("weight (overrides the config file)")
    g.add_argument("--config", help="YAML run configuration")
    g.add_argument("--hbar", type=float)
    g.add_argument("--family", choices=["weyl", "lambda", "gauss", "product"])
    g.add_argument("--lambda-re", type=float)
    g.add_argument("--lambda-im", type=float)
    g.add_argument("--kappa", type=float)
    g.add_argument("--scaling", choices=["fixed", "linear"])


def _run_config(args) -> RunConfig:
    raw = {}
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
        raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ConfigError("", "top level must be a mapping")
    if getattr(args, "hbar", None) is not None:
        raw["hbar"] = args.hbar
    over = {k: getattr(args, k.replace("-", "_"), None)
            for k in ("family", "lambda_re", "lambda_im", "kappa", "scaling")}
    over = {k: v for k, v in over.items() if v is not None}
    if over:
        weight = dict(raw.get("weight") or {})
        if "family" in over and over["family"] != weight.get("family"):
            weight = {}
        weight.update(over)
        raw["weight"] = weight
    cfg = parse_config(yaml.safe_dump(raw))
    for key, val in cfg.summary().items():
        log.info("%s: %s", key, val)
    return cfg


def _read_symbol(path) -> GridFunction:
    obj = mio.read_myl(path)
    if not isinstance(obj, GridFunction):
        raise mio.FormatError(f"{path}: expected a sampled symbol with a grid trailer")
    return obj


def _write(path, obj, csv_path=None):
    mio.write_myl(path, obj)
    log.info("wrote %s", path)
    if csv_path:
        mio.write_csv(csv_path, obj)


def _coherent(cfg: RunConfig, text: str) -> GridFunction:
    """Weyl symbol 2 exp(-((q-q0)^2 + (p-p0)^2)/hbar), carried to the configured weight."""
    try:
        q0, p0 = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--coherent expects Q0,P0, got {text!r}") from None
    Q, P = cfg.grid.mesh()
    f = GridFunction(cfg.grid, 2 * np.exp(-((Q - q0) ** 2 + (P - p0) ** 2) / cfg.hbar))
    return from_weyl_symbol(f, cfg.weight)


def _initial_state(cfg, args) -> GridFunction:
    if args.rho0 and args.coherent:
        raise UsageError("give either --rho0 or --coherent")
    if args.rho0:
        return _read_symbol(args.rho0)
    return _coherent(cfg, args.coherent or "0,0")


def _model(cfg: RunConfig) -> LindbladModel:
    if cfg.model is None:
        raise ConfigError("model", "this command needs a model block")
    m = cfg.model
    return LindbladModel(cfg.weight, m.hamiltonian, list(m.jumps), m.jump_adjoints, m.lamb_shift,
                         m.coupling, None if m.rates is None else np.array(m.rates))


# ------------------------------------------------------------- subcommands

def cmd_quantize(args):
    cfg = _run_config(args)
    if args.expr:
        sym = parse_poly(args.expr)
    elif args.input:
        sym = _read_symbol(args.input)
    else:
        raise UsageError("quantize needs an input file or --expr")
    _write(args.out, quantize(sym, cfg.weight, cfg.basis))


def cmd_dequantize(args):
    cfg = _run_config(args)
    M = mio.read_myl(args.input)
    if not hasattr(M, "basis"):
        raise mio.FormatError(f"{args.input}: expected an operator matrix with a basis trailer")
    _write(args.out, dequantize(M, cfg.weight, cfg.grid), args.csv)


def _binary(op):
    def run(args):
        cfg = _run_config(args)
        f, g = _read_symbol(args.a), _read_symbol(args.b)
        _write(args.out, op(f, g, cfg.weight), args.csv)
    return run


def cmd_lstar(args):
    f, g = _read_symbol(args.a), _read_symbol(args.b)
    nu = complex(args.nu_re, args.nu_im) if args.nu_re is not None else 0.5j * args.hbar
    _write(args.out, lambda_star(f, g, complex(args.lam), nu, args.hbar), args.csv)


def cmd_marginals(args):
    cfg = _run_config(args)
    rho = _read_symbol(args.input)
    mq, mp = marginals(rho, cfg.weight)
    g = rho.grid
    mio.write_rows(args.out_q, ["q", "re", "im"], zip(g.q, mq.real, mq.imag))
    mio.write_rows(args.out_p, ["p", "re", "im"], zip(g.p, mp.real, mp.imag))
    print(f"total q-marginal {(mq.sum() * g.dq).real:.12g}  total p-marginal {(mp.sum() * g.dp).real:.12g}")


def cmd_oracle(args):
    family = args.family or ("weyl" if args.lam is None else "lambda")
    if family == "lambda" and args.lam is None:
        raise UsageError("--family lambda needs --lambda")
    w = "weyl" if family == "weyl" else ("lambda", args.lam)
    if args.kind == "order":
        if args.expr is not None:
            x = quantize_poly(parse_poly(args.expr), w)
        elif family == "weyl":
            x = weyl_order(args.n, args.m)
        else:
            x = lambda_order(args.n, args.m, args.lam)
        print(format_ncpoly(x))
        return
    if not (args.f and args.g):
        raise UsageError("oracle star needs --f and --g")
    print(format_cpoly(star_poly(parse_poly(args.f), parse_poly(args.g), w)))


def _omegas(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise UsageError(f"--omegas expects LO:HI:N, got {text!r}") from None


def _read_correlation(path) -> CorrelationData:
    """CSV rows: s, then re and im of each h_ab(s) entry in row-major order."""
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    n_vals = table.shape[1] - 1
    k = int(round(np.sqrt(n_vals / 2)))
    if 2 * k * k != n_vals:
        raise mio.FormatError(f"{path}: expected 1 + 2k^2 columns, got {table.shape[1]}")
    h = (table[:, 1::2] + 1j * table[:, 2::2]).reshape(-1, k, k)
    return CorrelationData(labels=tuple(str(i) for i in range(k)), s=table[:, 0], h=h)


def cmd_spectrum(args):
    if args.input:
        data = _read_correlation(args.input)
    else:
        data = lorentzian_dataset(np.random.default_rng(args.seed), k=args.k)
    om = _omegas(args.omegas)
    ht, sm = correlation_spectrum(data, om)
    bad = 0
    print(f"{'omega':>10s} {'min eig h~':>14s} {'tr s':>14s}  psd")
    for w_, h, s in zip(om, ht, sm):
        ok = psd_check(h)
        bad += not ok
        lo = float(np.linalg.eigvalsh((h + h.conj().T) / 2).min())
        print(f"{w_:10.4f} {lo:14.6e} {np.trace(s).real:14.6e}  {'ok' if ok else 'FAIL'}")
    if bad:
        raise CheckFailed(f"{bad} frequencies with a non positive semidefinite spectrum")


def cmd_evolve(args):
    cfg = _run_config(args)
    ev = dict(cfg.evolve)
    for key in ("dt", "t_end", "snap_every"):
        if getattr(args, key) is not None:
            ev[key] = getattr(args, key)
    oracle = args.oracle or ev["oracle"]
    model = _model(cfg)
    rho0 = _initial_state(cfg, args)
    gen = build_generator(model, rho0.grid, cfg.model.route)
    log.info("generator route: %s; dt %g, t_end %g", gen.route, ev["dt"], ev["t_end"])
    traj = evolve(EvolutionState(rho0), gen, ev["dt"], ev["t_end"], ev["snap_every"],
                  audit_tol=cfg.tolerances["audit"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (t, s) in enumerate(zip(traj.times, traj.states)):
        mio.write_myl(out / f"snap_{i:05d}.myl", s)
    l2 = {}
    if oracle:
        H, jumps, adj = model_operators(model, cfg.basis)
        mt = oracle_evolve_matrix(quantize(rho0, cfg.weight, cfg.basis), H, jumps, ev["dt"], ev["t_end"],
                                  model.coupling, model.rates, adj, ev["snap_every"], check_positivity=False)
        for t, M in zip(mt.times, mt.states):
            for ts, s in zip(traj.times, traj.states):
                if abs(ts - t) <= 1e-9 * max(1.0, abs(t)):
                    l2[round(t, 12)] = (dequantize(M, cfg.weight, rho0.grid) - s).norm() / rho0.norm()
    header = ["t", "trace", "min_real", "imag_leak"] + (["l2_vs_oracle"] if oracle else [])
    rows = [list(r) + ([l2.get(round(r[0], 12), "")] if oracle else []) for r in traj.audit]
    mio.write_rows(out / "audit.csv", header, rows)
    t, tr, lo, leak = traj.audit[-1]
    print(f"t = {t:g}: trace {tr:.12g}, min real {lo:.3e}, imaginary leak {leak:.2e}; "
          f"{len(traj.states)} snapshots in {out}")
    if l2:
        print(f"worst L2 distance to the matrix oracle: {max(l2.values()):.3e}")


def cmd_check_ordering(args):
    cfg = _run_config(args)
    w, g = cfg.weight, cfg.grid
    rows = [("trace pairing  Omega(s) Omega(-s) = Omega(0)", check_trace_pairing(w, g)),
            ("hermiticity    Omega(s) = conj Omega(-s)", check_hermiticity(w, g)),
            ("marginal       Omega = 1 on both axes", check_marginal_condition(w, g)),
            ("classical limit Omega -> 1 as hbar -> 0", check_classical_limit(w, g))]
    print(f"weight: {w.describe()}")
    for name, ok in rows:
        print(f"  {name:<46s} {str(ok).lower()}")


def cmd_check_projection(args):
    from .bipartite import BipartiteModel, ProjectionPreconditionError, projection_checks, trig_test_states
    from .orderings import JointWeight, WeightFunction

    def party(fam, lam, kappa):
        return WeightFunction(fam, args.hbar or 1.0, lam=lam or 0.0, kappa=kappa or 0.0)

    w = JointWeight(party(args.sys_family, args.sys_lambda, args.sys_kappa),
                    party(args.res_family, args.res_lambda, args.res_kappa), args.cross)
    log.info("joint weight: sys %s | res %s | cross %g", w.sys.describe(), w.res.describe(), args.cross)
    bg, rr, rho, obs = trig_test_states(args.n, args.extent)
    h_int = [] if args.no_interaction else [(parse_poly(args.int_sys), parse_poly(args.int_res))]
    model = BipartiteModel(bg, w, parse_poly(args.h_sys), parse_poly(args.h_res), h_int, args.coupling)
    try:
        rep = projection_checks(model, rr, rho, obs)
    except ProjectionPreconditionError as exc:
        raise ConfigError("precondition", str(exc)) from None
    for line in rep.lines(args.tol):
        print(line)
    if not rep.ok(args.tol):
        raise CheckFailed(f"worst projection residual {rep.worst:.3e} exceeds {args.tol:g}")


def cmd_check_diagram(args):
    cfg = _run_config(args)
    model = _model(cfg)
    rho0 = _initial_state(cfg, args)
    gen = build_generator(model, rho0.grid, cfg.model.route)
    rep = diagram_commutes(rho0, model, args.t, args.dt, cfg.basis, gen=gen)
    tol = cfg.tolerances["diagram"]
    print(f"t = {rep.t:g}")
    print(f"  diagram residual        {rep.residual:.3e}  {'ok' if rep.residual <= tol else 'FAIL'}")
    print(f"  expectation flow        {rep.flow_residual:.3e}  {'ok' if rep.flow_residual <= 1e-6 else 'FAIL'}")
    print(f"  symbol trace drift      {rep.symbol_trace_drift:.3e}")
    if not rep.ok(tol):
        raise CheckFailed("phase-space and operator evolutions disagree")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gmoyal", description="Generalized Weyl transforms, star products and "
                "phase-space Lindblad kinetics.")
    p.add_argument("--threads", type=int, help=f"BLAS threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress the run record on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    q = sub.add_parser("quantize", help="symbol (MYL1) or polynomial -> operator matrix")
    q.add_argument("input", nargs="?")
    q.add_argument("--expr", help="polynomial symbol, e.g. 'q^2 + p^2'")
    q.add_argument("--out", required=True)
    _weight_flags(q)
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("dequantize", help="operator matrix -> symbol on the configured grid")
    d.add_argument("input")
    d.add_argument("--out", required=True)
    d.add_argument("--csv")
    _weight_flags(d)
    d.set_defaults(func=cmd_dequantize)

    for name, op, text in (("star", star, "f * g"), ("bracket", bracket, "(f * g - g * f) / 2 mu")):
        s = sub.add_parser(name, help=f"{text} for two sampled symbols")
        s.add_argument("a")
        s.add_argument("b")
        s.add_argument("--out", required=True)
        s.add_argument("--csv")
        _weight_flags(s)
        s.set_defaults(func=_binary(op))

    ls = sub.add_parser("lstar", help="two-parameter product with symmetric part lambda and skew part nu")
    ls.add_argument("a")
    ls.add_argument("b")
    ls.add_argument("--lambda", dest="lam", type=float, required=True)
    ls.add_argument("--nu-re", type=float)
    ls.add_argument("--nu-im", type=float, default=0.0)
    ls.add_argument("--hbar", type=float, default=1.0)
    ls.add_argument("--out", required=True)
    ls.add_argument("--csv")
    ls.set_defaults(func=cmd_lstar)

    m = sub.add_parser("marginals", help="position and momentum densities of a state symbol")
    m.add_argument("input")
    m.add_argument("--out-q", required=True)
    m.add_argument("--out-p", required=True)
    _weight_flags(m)
    m.set_defaults(func=cmd_marginals)

    o = sub.add_parser("oracle", help="exact symbolic orderings and polynomial star products")
    o.add_argument("kind", choices=["order", "star"])
    o.add_argument("--family", choices=["weyl", "lambda"])
    o.add_argument("--expr", help="symbol to order, e.g. 'q^2*p' (default: q^n p^m)")
    o.add_argument("--n", type=int, default=1)
    o.add_argument("--m", type=int, default=1)
    o.add_argument("--lambda", dest="lam", type=float, help="use the lambda ordering/product")
    o.add_argument("--f")
    o.add_argument("--g")
    o.set_defaults(func=cmd_oracle)

    sp_ = sub.add_parser("spectrum", help="correlation spectra h~(omega), Lamb matrices and PSD report")
    sp_.add_argument("--input", help="CSV: s, re h_00, im h_00, re h_01, ...")
    sp_.add_argument("--seed", type=int, default=0, help="random stationary dataset when no input")
    sp_.add_argument("--k", type=int, default=2)
    sp_.add_argument("--omegas", default="-4:4:17")
    sp_.set_defaults(func=cmd_spectrum)

    e = sub.add_parser("evolve", help="integrate the phase-space Lindblad equation")
    e.add_argument("--model", dest="config", required=True, help="YAML config with a model block")
    e.add_argument("--rho0")
    e.add_argument("--coherent", help="start from a coherent state at Q0,P0")
    e.add_argument("--dt", type=float)
    e.add_argument("--t-end", type=float)
    e.add_argument("--snap-every", type=int)
    e.add_argument("--oracle", action="store_true", help="compare with the operator-matrix evolution")
    e.add_argument("--out-dir", default="evolve_out")
    e.set_defaults(func=cmd_evolve)

    c = sub.add_parser("check-ordering", help="structural predicates of a weight")
    _weight_flags(c)
    c.set_defaults(func=cmd_check_ordering)

    cp = sub.add_parser("check-projection", help="reservoir projection identities on a 2-DOF grid")
    for side in ("sys", "res"):
        cp.add_argument(f"--{side}-family", default="weyl", choices=["weyl", "lambda", "gauss", "product"])
        cp.add_argument(f"--{side}-lambda", type=float)
        cp.add_argument(f"--{side}-kappa", type=float)
    cp.add_argument("--cross", type=float, default=0.0, help="non-factorizing eta_sys*xi_res term")
    cp.add_argument("--hbar", type=float)
    cp.add_argument("--h-sys", default="(q^2 + p^2)/2")
    cp.add_argument("--h-res", default="p^2/2")
    cp.add_argument("--int-sys", default="q")
    cp.add_argument("--int-res", default="q")
    cp.add_argument("--coupling", type=float, default=0.5)
    cp.add_argument("--no-interaction", action="store_true")
    cp.add_argument("--n", type=int, default=16)
    cp.add_argument("--extent", type=float, default=6.0)
    cp.add_argument("--tol", type=float, default=1e-7)
    cp.set_defaults(func=cmd_check_projection)

    cd = sub.add_parser("check-diagram", help="symbol evolution vs operator evolution")
    cd.add_argument("--model", dest="config", required=True)
    cd.add_argument("--rho0")
    cd.add_argument("--coherent")
    cd.add_argument("--t", type=float, default=1.0)
    cd.add_argument("--dt", type=float, default=1e-3)
    cd.set_defaults(func=cmd_check_diagram)
    return p


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def run_command(argv=None) -> int:
    """Run one CLI command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "gmoyal: error: a command is required")
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(name)s: %(message)s", stream=sys.stderr, force=True)
        n = _threads(args)
        log.info("threads: %d", n)
        with threadpool_limits(n):
            args.func(args)
        return 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (AuditError, CheckFailed, WeightOverflowError) as exc:
        print(f"gmoyal: check failed: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, mio.FormatError, PolySyntaxError, KineticsError, ValueError,
            OSError) as exc:
        print(f"gmoyal: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())
