"""Command-line front end.

Tool subcommands ``sample``, ``couple``, and ``fp`` expose the chain,
coupling, and PDE machinery directly; the registered experiments run with
``ilmc-lab <experiment> --config <path> [key=value ...]``.

Exit codes: 0 pass, 1 assertion fail, 2 configuration error, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .coupling import LyapunovConfig, default_lyapunov, estimate_contraction
from .errors import (AdmissibilityError, CoefficientError, ConfigurationError,
                     ConvergenceError, InputError, ParameterError, SolverFailure)
from .experiments import (EXPERIMENTS, _parse_params, build_config,
                          load_config_file)
from .fp1d import Grid1D, InitialDensitySpec, entropy_curve, make_initial_density
from .potentials import make_potential
from .prox import ProxConfig
from .samplers import ChainConfig, run_chain

EXIT_PASS = 0
EXIT_ASSERT = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

CONFIG_ERRORS = (ConfigurationError, ParameterError, AdmissibilityError, InputError)
SOLVER_ERRORS = (ConvergenceError, SolverFailure, CoefficientError)


def _add_potential_args(sub):
    sub.add_argument("--potential", default="ginzburg_landau",
                     help="gaussian | ginzburg_landau | double_well")
    sub.add_argument("--params", default="",
                     help="comma-separated numeric parameters, e.g. a=1,b=1")


def _add_prox_args(sub):
    sub.add_argument("--prox-tol", type=float, default=ProxConfig.tol)
    sub.add_argument("--prox-max-iters", type=int, default=ProxConfig.max_iters)


def _prox_cfg(args) -> ProxConfig:
    return ProxConfig(tol=args.prox_tol, max_iters=args.prox_max_iters)


def _cmd_sample(args) -> int:
    p = make_potential(args.potential, **_parse_params(args.params))
    x0 = [float(tok) for tok in args.x0.split(",")] if isinstance(args.x0, str) else [args.x0]
    if len(x0) != p.dim:
        raise ConfigurationError(f"--x0 needs {p.dim} coordinates")
    prox_cfg = _prox_cfg(args)
    lines = [f"potential = {args.potential} {args.params or '(defaults)'}",
             f"h = {args.h:g}", f"steps = {args.steps}", f"replicas = {args.replicas}",
             f"seed = {args.seed}", f"method = {args.method}"]
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for line in lines:
            out.write(f"# {line}\n")
        out.write("replica,step," + ",".join(f"coord{i}" for i in range(p.dim)) + "\n")
        summaries = []
        for r in range(args.replicas):
            cfg = ChainConfig(h=args.h, n_steps=args.steps, seed=args.seed, replica_id=r)
            traj = run_chain(p, cfg, args.method, x0, prox_cfg)
            for n, state in enumerate(traj.states):
                coords = ",".join(f"{c:.12g}" for c in state)
                out.write(f"{r},{n},{coords}\n")
            summaries.append(
                f"# summary replica={r} steps={len(traj.states) - 1} "
                f"blew_up={str(traj.blew_up).lower()} "
                f"max_abs={np.max(np.abs(traj.states)):.12g}")
        for s in summaries:
            out.write(s + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_PASS


def _cmd_couple(args) -> int:
    p = make_potential(args.potential, **_parse_params(args.params))
    lyap = (LyapunovConfig(c_f=args.cf, r_f=args.rf)
            if args.cf is not None and args.rf is not None else default_lyapunov(p))
    rep = estimate_contraction(p, args.h, args.steps, args.replicas, args.z0,
                               lyap, args.seed, n_substeps=args.substeps)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write(f"# potential = {args.potential} {args.params or '(defaults)'}\n")
        out.write(f"# h = {args.h:g} replicas = {args.replicas} z0 = {args.z0:g} "
                  f"cf = {lyap.c_f:.12g} rf = {lyap.r_f:.12g} "
                  f"substeps = {args.substeps} seed = {args.seed}\n")
        out.write("step,t,mean_f,coalesced_frac,stderr\n")
        for n in range(len(rep.t)):
            out.write(f"{n},{rep.t[n]:.12g},{rep.mean_f[n]:.12g},"
                      f"{rep.coalesced_frac[n]:.12g},{rep.stderr[n]:.12g}\n")
        out.write(f"#fit rate={rep.rate:.12g} r2={rep.r_squared:.12g} "
                  f"n_fit={rep.n_fit} degenerate={str(rep.degenerate).lower()}\n")
    finally:
        if args.out:
            out.close()
    return EXIT_PASS


def _cmd_fp(args) -> int:
    p = make_potential(args.potential, **_parse_params(args.params))
    grid = Grid1D(args.domain_l, args.cells)
    rho0 = make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=args.gamma),
                                grid, p)
    h_list = [float(tok) for tok in args.h_list.split(",") if tok.strip()]
    dt = None if args.dt_divisor == 64 else min(h_list) / args.dt_divisor
    dumps: list = []
    report = entropy_curve(p, rho0, args.t_end, h_list, dt=dt,
                           on_checkpoint=(dumps.append if args.dump_densities else None))
    header = [f"potential = {args.potential} {args.params or '(defaults)'}",
              f"gamma = {args.gamma:g}", f"t_end = {args.t_end:g}",
              f"h_list = {args.h_list}", f"cells = {args.cells}",
              f"domain_l = {args.domain_l:g}", f"dt_divisor = {args.dt_divisor}"]
    report.write_csv(args.out, header)
    if args.dump_densities:
        stem = args.out.rsplit(".", 1)[0]
        for h, t, rho_h, rho in dumps:
            path = f"{stem}_h{h:g}_t{t:g}.csv"
            with open(path, "w") as f:
                f.write("x,rho,rho_h\n")
                for x, a, b in zip(rho.grid.centers, rho.values, rho_h.values):
                    f.write(f"{x:.12g},{a:.12g},{b:.12g}\n")
    return EXIT_PASS


def _cmd_experiment(name: str, args) -> int:
    entries = load_config_file(args.config) if args.config else {}
    cfg = build_config(name, entries, args.overrides)
    result = EXPERIMENTS[name](cfg)
    print(f"{name}: {'PASS' if result.passed else 'FAIL'} - {result.message}")
    print(f"report written to {cfg.output_path}")
    return EXIT_PASS if result.passed else EXIT_ASSERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilmc-lab",
                                     description="Implicit Langevin Monte Carlo lab")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("sample", help="run chains, emit state CSV")
    _add_potential_args(s)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=("ilmc", "lmc"), default="ilmc")
    s.add_argument("--x0", default="0")
    s.add_argument("--out", default=None)
    _add_prox_args(s)

    s = subs.add_parser("couple", help="reflection-coupled pairs, emit decay CSV")
    _add_potential_args(s)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1000)
    s.add_argument("--z0", type=float, default=2.0)
    s.add_argument("--cf", type=float, default=None)
    s.add_argument("--rf", type=float, default=None)
    s.add_argument("--substeps", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)

    s = subs.add_parser("fp", help="Fokker-Planck entropy curve, emit metric CSV")
    _add_potential_args(s)
    s.add_argument("--gamma", type=float, default=0.5)
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--h-list", required=True, help="comma-separated step sizes")
    s.add_argument("--cells", type=int, default=1200)
    s.add_argument("--domain-l", type=float, default=3.0)
    s.add_argument("--dt-divisor", type=int, default=64)
    s.add_argument("--dump-densities", action="store_true")
    s.add_argument("--out", default="fp_report.csv")

    for name in EXPERIMENTS:
        s = subs.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", default=None, help="flat key = value file")
        s.add_argument("overrides", nargs="*", metavar="key=value")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "couple":
            return _cmd_couple(args)
        if args.command == "fp":
            return _cmd_fp(args)
        return _cmd_experiment(args.command, args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
