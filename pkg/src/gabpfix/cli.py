"""Command-line front end.

Exit codes: 0 converged, 2 diverged / iteration cap / inner failure,
1 usage or IO error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import io
from .cdma import (CdmaConfig, SPREADINGS, SweepConfig, SweepRow, experiment_divergence,
                   experiment_fixed, experiment_sweep)
from .correction import (OuterSettings, compute_dd_loading, compute_uniform_loading,
                         custom_loading, double_loop_solve, single_loop_solve, uniform_loading)
from .errors import GabpError
from .gabp import GabpSettings, run_gabp
from .lsq import normal_equations

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags(p, default_mode="double"):
    g = p.add_argument_group("solver")
    g.add_argument("--mode", choices=("gabp", "double", "single"), default=default_mode)
    g.add_argument("--gamma-mode", choices=("uniform", "dd", "custom"), default="dd")
    g.add_argument("--gamma", type=float, default=None,
                   help="uniform: loading on the unit-diagonal scale; custom: Gamma_ii for every i")
    g.add_argument("--margin", type=float, default=None)
    g.add_argument("--step-size", type=float, default=0.5)
    g.add_argument("--inner-tol", type=float, default=None)
    g.add_argument("--outer-tol", type=float, default=None)
    g.add_argument("--max-inner", type=int, default=None)
    g.add_argument("--max-outer", type=int, default=None)
    g.add_argument("--out", metavar="REPORT.json")
    g.add_argument("--trace", metavar="TRACE.csv")
    g.add_argument("--detect", action="store_true", help="also report sign(x)")


def _cdma_flags(p):
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--spreading", choices=SPREADINGS, default="binary")


def build_parser():
    parser = _Parser(prog="gabpfix", description="GaBP solver with diagonal-loading correction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve J x = h from Matrix Market / text files")
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", required=True)
    _solver_flags(p)

    p = sub.add_parser("lsq", help="regularized least squares min ||A x - b||^2 + gamma ||x||^2")
    p.add_argument("--matrix", required=True, help="general n x k Matrix Market file")
    p.add_argument("--rhs", required=True)
    p.add_argument("--gamma-reg", type=float, default=0.0)
    _solver_flags(p)

    p = sub.add_parser("cdma", help="CDMA multiuser detection experiments")
    csub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name, help_ in (("diverge", "plain GaBP trace"),
                        ("fixed", "double-loop solve with loading"),
                        ("sweep", "iteration counts across a loading grid")):
        q = csub.add_parser(name, help=help_)
        _cdma_flags(q)
        _solver_flags(q)
        if name == "sweep":
            q.add_argument("--grid", default=None,
                           help="comma-separated loading levels (1.0 = diagonal dominance)")
    return parser


# per-command fallbacks for flags left unset
_DEFAULTS = {
    "solve": dict(outer_tol=1e-8, inner_tol=None, max_inner=1000, max_outer=10_000),
    "lsq": dict(outer_tol=1e-8, inner_tol=None, max_inner=1000, max_outer=10_000),
    "diverge": dict(outer_tol=1e-8, inner_tol=1e-10, max_inner=200, max_outer=1),
    "fixed": dict(outer_tol=1e-3, inner_tol=1e-6, max_inner=1000, max_outer=10_000),
    "sweep": dict(outer_tol=1e-3, inner_tol=1e-6, max_inner=1000, max_outer=20_000),
}


def _fill_defaults(args):
    key = args.experiment if args.command == "cdma" else args.command
    for name, value in _DEFAULTS[key].items():
        if getattr(args, name) is None:
            setattr(args, name, value)
    if args.inner_tol is None:
        args.inner_tol = min(1e-6, args.outer_tol / 10)


def _outer_settings(args):
    return OuterSettings(
        outer_tol=args.outer_tol,
        max_outer=args.max_outer,
        inner=GabpSettings(message_tol=args.inner_tol, max_iterations=args.max_inner),
        step_size=args.step_size,
    )


def _loading(args, J):
    if args.gamma_mode == "dd":
        return compute_dd_loading(J, args.margin) if args.margin else compute_dd_loading(J)
    if args.gamma_mode == "custom":
        if args.gamma is None:
            raise ValueError("--gamma-mode custom needs --gamma")
        return custom_loading(np.full(J.n, args.gamma))
    if args.gamma is not None:
        return uniform_loading(J, args.gamma)
    return compute_uniform_loading(J, args.margin) if args.margin else compute_uniform_loading(J)


def _dump(report, path):
    text = json.dumps(report, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _solve_system(args, J, h, mode_name, extra_config):
    t0 = time.perf_counter()
    report = {"mode": mode_name, "config": {**extra_config, "solver": args.mode}}
    if args.mode == "gabp":
        settings = GabpSettings(message_tol=args.inner_tol, max_iterations=args.max_inner)
        res = run_gabp(J, h, settings)
        x = res.means
        ok = res.converged
        report.update(status=res.status.value, iterations={"gabp": res.iterations})
        rows = [(i + 1, c) for i, c in enumerate(res.residual_history)]
        header = ("iteration", "max_message_change")
    else:
        loading = _loading(args, J)
        solver = double_loop_solve if args.mode == "double" else single_loop_solve
        rep = solver(J, h, loading, _outer_settings(args))
        x = rep.solution
        ok = rep.converged
        report.update(status=rep.status.value,
                      iterations={"outer": rep.outer_iterations,
                                  "inner_total": rep.total_inner_iterations},
                      loading={"mode": loading.mode, "level": loading.level,
                               "rho_loaded": rep.rho_loaded})
        rows = rep.records()
        header = ("outer_step", "residual", "inner_iterations")
    residual = float(np.abs(J.matvec(x) - h).max()) if np.all(np.isfinite(x)) else None
    report["residual_inf"] = residual
    report["solution"] = [float(v) for v in x]
    if args.detect:
        report["detected"] = [int(v) for v in np.sign(x)]
    if args.trace:
        io.write_csv(args.trace, header, rows)
        report["trace"] = args.trace
    report["elapsed_s"] = time.perf_counter() - t0
    return report, ok


def _cmd_solve(args):
    J = io.read_sym_matrix(args.matrix)
    h = io.read_vector(args.rhs)
    if h.size != J.n:
        raise ValueError(f"{args.rhs}: length {h.size} does not match matrix dimension {J.n}")
    report, ok = _solve_system(args, J, h, "solve", {"matrix": args.matrix, "rhs": args.rhs})
    text = _dump(report, args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"{report['status']}  residual={report['residual_inf']}")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_lsq(args):
    A = io.read_general_matrix(args.matrix)
    b = io.read_vector(args.rhs)
    if b.size != A.shape[0]:
        raise ValueError(f"{args.rhs}: length {b.size} does not match matrix rows {A.shape[0]}")
    if args.gamma_reg < 0:
        raise ValueError("--gamma-reg must be non-negative")
    G, hb = normal_equations(A, b)
    if args.gamma_reg:
        G = G.add_diagonal(args.gamma_reg)
    report, ok = _solve_system(args, G, hb, "lsq",
                               {"matrix": args.matrix, "rhs": args.rhs, "gamma_reg": args.gamma_reg})
    text = _dump(report, args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"{report['status']}  normal-equation residual={report['residual_inf']}")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_cdma(args):
    config = CdmaConfig(n=args.n, k=args.k, sigma2=args.sigma2, seed=args.seed,
                        spreading=args.spreading)
    if args.experiment == "diverge":
        settings = GabpSettings(message_tol=args.inner_tol, max_iterations=args.max_inner)
        report, trace = experiment_divergence(config, settings)
        if args.trace:
            header = ["iteration"] + [f"x{i}" for i in range(config.k)]
            io.write_csv(args.trace, header,
                         [(t + 1, *map(float, row)) for t, row in enumerate(trace)])
            report.trace = args.trace
        ok = report.status == "Converged"
    elif args.experiment == "fixed":
        if args.gamma_mode == "custom" and args.gamma is None:
            raise ValueError("--gamma-mode custom needs --gamma")
        loading = {"dd": "dd", "uniform": "uniform" if args.gamma is None else args.gamma}.get(
            args.gamma_mode)
        if args.gamma_mode == "custom":
            loading = custom_loading(np.full(config.k, args.gamma))
        report, rep = experiment_fixed(config, loading, _outer_settings(args))
        if args.trace:
            io.write_csv(args.trace, ("outer_step", "residual", "inner_iterations"), rep.records())
            report.trace = args.trace
        ok = rep.converged
    else:
        grid = (tuple(float(v) for v in args.grid.split(",")) if args.grid
                else SweepConfig().gamma_grid)
        sweep = SweepConfig(gamma_grid=grid, inner_tol=args.inner_tol, outer_tol=args.outer_tol,
                            max_inner=args.max_inner, max_outer=args.max_outer)
        report, rows = experiment_sweep(config, sweep)
        if args.trace:
            io.write_csv(args.trace, SweepRow.HEADER, [r.as_row() for r in rows])
            report.trace = args.trace
        else:
            for r in rows:
                print(",".join(io._fmt(v) for v in r.as_row()))
        ok = report.status == "Converged"

    text = _dump(report.to_dict(), args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"{report.mode}: {report.status}")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": _cmd_solve, "lsq": _cmd_lsq, "cdma": _cmd_cdma}
    try:
        _fill_defaults(args)
        return handlers[args.command](args)
    except (OSError, ValueError, GabpError) as exc:
        print(f"gabpfix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
