"""Command-line entry point: ``drsd {solve,replicate,benchmark,validate}``."""
from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

import numpy as np

from .algorithms import DRLSParams, DRSDParams, run_drls, run_drsd
from .ambiguity import AmbiguityConfig, AmbiguityError
from .harness import ExperimentConfig, format_estimates_table, format_times_table, replicate
from .lp import LpError
from .model import InstanceError, parse_instance
from .recourse import RecourseError

DEFAULTS = dict(method="drsd", ambiguity="moment", q=2, eps=1.0, N=100, tau=1e-3, gamma=0.2,
                kmin=256, kmax=5000, seed=0, reps=30)

SOLVE_ERRORS = (RecourseError, LpError, AmbiguityError, RuntimeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors show the whole flag reference, not just the usage line
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def bundled_instances():
    root = resources.files("drsd") / "data"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_instance(path):
    """A filesystem path, or the file name of a bundled instance."""
    if os.path.exists(path):
        return path
    candidate = resources.files("drsd") / "data" / os.path.basename(path)
    if candidate.is_file():
        return str(candidate)
    return path


def read_instance(path):
    path = resolve_instance(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read instance {path!r}: {e.strerror}") from None
    return parse_instance(text)


def _add_method_flags(p, with_method=True):
    if with_method:
        p.add_argument("--method", choices=("drsd", "drls"), default=None,
                       help=f"algorithm (default {DEFAULTS['method']})")
    p.add_argument("--ambiguity", choices=("moment", "wasserstein"), default=None,
                   help=f"ambiguity set (default {DEFAULTS['ambiguity']})")
    p.add_argument("--q", type=int, default=None, help=f"moment order, moment sets only (default {DEFAULTS['q']})")
    p.add_argument("--eps", type=float, default=None,
                   help=f"Wasserstein radius, Wasserstein sets only (default {DEFAULTS['eps']})")
    p.add_argument("--cross-moments", action="store_true", help="also match second-order cross moments")
    p.add_argument("--N", type=int, default=None, nargs="+" if not with_method else None,
                   help=f"DRLS sample size (default {DEFAULTS['N']})")
    p.add_argument("--tau", type=float, default=None, help=f"stopping tolerance (default {DEFAULTS['tau']:g})")
    p.add_argument("--gamma", type=float, default=None,
                   help=f"incumbent acceptance ratio in (0, 1] (default {DEFAULTS['gamma']})")
    p.add_argument("--kmin", type=int, default=None, help=f"minimum DRSD iterations (default {DEFAULTS['kmin']})")
    p.add_argument("--kmax", type=int, default=None, help=f"maximum DRSD iterations (default {DEFAULTS['kmax']})")
    p.add_argument("--seed", type=int, default=None, help=f"random seed / base seed (default {DEFAULTS['seed']})")


def build_parser():
    parser = _Parser(prog="drsd", description="Two-stage distributionally robust LPs: DRSD and the DR L-shaped method.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub.choices

    p = sub.add_parser("solve", help="run one solve and print a report")
    p.add_argument("--instance", required=True, help="instance JSON (path or bundled file name)")
    _add_method_flags(p)
    p.add_argument("--out", default=None, help="also write the report to this file")

    p = sub.add_parser("replicate", help="independent replications with a CSV of per-run results")
    p.add_argument("--instance", required=True)
    _add_method_flags(p)
    p.add_argument("--reps", type=int, default=None, help=f"replications (default {DEFAULTS['reps']})")
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="leave timing columns empty (for golden files)")

    p = sub.add_parser("benchmark", help="DRSD against DRLS-N for several N; prints both report tables")
    p.add_argument("--instance", required=True)
    _add_method_flags(p, with_method=False)
    p.add_argument("--reps", type=int, default=None, help=f"replications per method (default {DEFAULTS['reps']})")
    p.add_argument("--out", default=None, help="write the tables to this file as well")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="parse and check an instance file")
    p.add_argument("--instance", required=True)
    return parser


def _pick(args, name):
    v = getattr(args, name, None)
    return DEFAULTS[name] if v is None else v


def check_conflicts(args):
    kind = _pick(args, "ambiguity")
    if kind == "wasserstein" and args.q is not None:
        raise UsageError("--q applies to moment sets only; drop it or use --ambiguity moment")
    if kind == "wasserstein" and args.cross_moments:
        raise UsageError("--cross-moments applies to moment sets only")
    if kind == "moment" and args.eps is not None:
        raise UsageError("--eps applies to Wasserstein sets only; drop it or use --ambiguity wasserstein")
    method = getattr(args, "method", None)
    if method is None and args.command != "benchmark":
        method = DEFAULTS["method"]
    if method == "drsd" and args.N is not None:
        raise UsageError("--N is the DRLS sample size; it has no meaning with --method drsd")
    if method == "drls":
        given = [f"--{n}" for n in ("gamma", "kmin", "kmax") if getattr(args, n) is not None]
        if given:
            raise UsageError(f"{', '.join(given)}: DRSD-only flag(s), not valid with --method drls")


def ambiguity_from(args):
    try:
        if _pick(args, "ambiguity") == "moment":
            return AmbiguityConfig.moment(_pick(args, "q"), cross_moments=args.cross_moments)
        return AmbiguityConfig.wasserstein(_pick(args, "eps"))
    except ValueError as e:
        raise UsageError(str(e)) from None


def drsd_params(args):
    try:
        return DRSDParams(tau=_pick(args, "tau"), gamma=_pick(args, "gamma"), k_min=_pick(args, "kmin"),
                          k_max=_pick(args, "kmax"), seed=_pick(args, "seed"))
    except ValueError as e:
        raise UsageError(str(e)) from None


def drls_params(args, N=None):
    try:
        return DRLSParams(N=N if N is not None else _pick(args, "N"), tol=_pick(args, "tau"), seed=_pick(args, "seed"))
    except ValueError as e:
        raise UsageError(str(e)) from None


def format_report(report, amb, inst_name):
    x = np.array2string(np.asarray(report.incumbent), precision=6, separator=", ")
    lines = [
        f"instance     {inst_name}",
        f"method       {report.method}",
        f"ambiguity    {amb.label()}",
        f"seed         {report.seed}",
        f"status       {report.status}",
        f"objective    {report.objective:.6f}",
        f"incumbent    {x}",
        f"iterations   {report.iterations}",
        f"unique obs   {report.unique_obs}",
        "counters     " + ", ".join(f"{k}={v}" for k, v in report.counters.items()),
        "time (s)     " + ", ".join(f"{k}={v:.4f}" for k, v in report.times.items()),
    ]
    return "\n".join(lines)


def _emit(text, out):
    print(text)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def cmd_solve(args):
    inst = read_instance(args.instance)
    amb = ambiguity_from(args)
    if _pick(args, "method") == "drsd":
        report = run_drsd(inst, amb, drsd_params(args))
    else:
        report = run_drls(inst, amb, drls_params(args))
    _emit(format_report(report, amb, inst.name), args.out)
    return 0


def cmd_replicate(args):
    inst = read_instance(args.instance)
    amb = ambiguity_from(args)
    method = _pick(args, "method")
    params = drsd_params(args) if method == "drsd" else drls_params(args)
    reps = _pick(args, "reps")
    if reps < 1:
        raise UsageError("--reps must be at least 1")
    cfg = ExperimentConfig(instance=inst, method=method, ambiguity=amb, params=params, reps=reps,
                           base_seed=params.seed, out=args.out, workers=args.workers, timing=not args.no_timing)
    res = replicate(cfg)
    if not args.out:
        sys.stdout.write(res.csv_text)
    print(format_estimates_table([res.stats]), file=sys.stderr if not args.out else sys.stdout)
    return 0 if res.stats.n_ok > 0 else 1


def cmd_benchmark(args):
    inst = read_instance(args.instance)
    amb = ambiguity_from(args)
    reps = _pick(args, "reps")
    if reps < 1:
        raise UsageError("--reps must be at least 1")
    seed = _pick(args, "seed")
    sizes = args.N if args.N is not None else [DEFAULTS["N"]]
    configs = [ExperimentConfig(inst, "drsd", amb, drsd_params(args), reps, seed, workers=args.workers)]
    configs += [ExperimentConfig(inst, "drls", amb, drls_params(args, N), reps, seed, workers=args.workers)
                for N in sizes]
    rows = [replicate(c).stats for c in configs]
    failed = sum(r.n_failed for r in rows)
    text = "\n".join([
        f"{inst.name}, {amb.label()}, {reps} replications (95% t half-widths)",
        "",
        format_estimates_table(rows),
        "",
        format_times_table(rows),
    ])
    if failed:
        text += f"\n\n{failed} replication(s) failed"
    _emit(text, args.out)
    return 0 if all(r.n_ok > 0 for r in rows) else 1


def cmd_validate(args):
    inst = read_instance(args.instance)
    pts, _ = inst.true_distribution.support()
    print(f"ok: {inst.name}: dx={inst.dx}, m={inst.m}, dy={inst.dy}, d_omega={inst.d_omega}, "
          f"support={pts.shape[0]} scenarios")
    return 0


COMMANDS = {"solve": cmd_solve, "replicate": cmd_replicate, "benchmark": cmd_benchmark, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra:
            parser.subcommands[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command != "validate":
            check_conflicts(args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.subcommands[args.command].print_help(sys.stderr)
        print(f"drsd: error: {e}", file=sys.stderr)
        return 2
    except InstanceError as e:
        print(f"drsd: invalid instance: {e}", file=sys.stderr)
        return 2
    except SOLVE_ERRORS as e:
        print(f"drsd: solve failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
