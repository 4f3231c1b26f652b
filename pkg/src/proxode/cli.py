"""Command-line entry point: ``python -m proxode <subcommand>``.

Exit codes: 0 success, 2 solver failure, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys


from .benchmarks import DEFAULT_SEED, estimate_convergence_order
from .core import ConfigError, SolverError, make_uniform_grid
from .explicit import AdaptiveConfig, adaptive_solve
from .harness import (PROX_SOLVERS, SOLVERS, Report, SweepSpec, compare_implicit_backends,
                      emit_report, linear_fit_r2, load_sweep_config, make_benchmark,
                      prox_time_vs_nfe,
                      run_one, run_sweep, solver_from_flags, SolverSpec)
from .schemes import solve
from .stability import METHODS, rasterize_domain

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3
INNER_CHOICES = ("fr", "gd", "nag", "nag-restart", "fp", "newton")


def _pair(text):
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from exc
    return lo, hi


def _eta(text):
    return text if text == "auto" else float(text)


def _add_problem_flags(p):
    p.add_argument("--benchmark", choices=("scalar", "diffusion"), default="diffusion")
    p.add_argument("--n", type=int, default=128, help="diffusion grid size")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--init", choices=("normal", "gaussian-bump"), default="normal")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tend", type=float, default=None)


def _add_inner_flags(p):
    p.add_argument("--inner", choices=INNER_CHOICES, default="fr")
    p.add_argument("--eta", type=_eta, default="auto",
                   help="inner step size, or 'auto' for a stable value")
    p.add_argument("--inner-tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100_000)


def _add_output_flags(p, default_format="csv"):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one solver on one benchmark")
    _add_problem_flags(p)
    p.add_argument("--scheme", choices=SOLVERS, default="be")
    p.add_argument("--step", type=float, default=0.01)
    _add_inner_flags(p)
    p.add_argument("--tol", type=float, default=1e-6, help="adaptive error tolerance")
    p.add_argument("--policy", choices=("abort", "accept"), default="abort")
    p.add_argument("--trajectory", action="store_true",
                   help="emit every state instead of a summary row")
    _add_output_flags(p)

    p = sub.add_parser("sweep", help="run a sweep described by a JSON config file")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("order", help="convergence-order study")
    _add_problem_flags(p)
    p.add_argument("--scheme", choices=SOLVERS, default="be")
    p.add_argument("--steps", default="0.02,0.01,0.005,0.0025",
                   help="comma-separated step sizes in geometric progression")
    _add_inner_flags(p)
    _add_output_flags(p, "json")

    p = sub.add_parser("stability", help="rasterize a linear stability domain to CSV")
    p.add_argument("--method", type=str.upper, choices=METHODS, required=True)
    p.add_argument("--re-range", type=_pair, default=(-5.0, 1.0),
                   help="lo,hi; write --re-range=-5,1 when lo is negative")
    p.add_argument("--im-range", type=_pair, default=(-4.0, 4.0), help="lo,hi")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--out", default=None)

    p = sub.add_parser("compare-backends", help="prox-FR vs fixed point vs Newton")
    p.add_argument("--n-values", default="16,32,64,128,256,512")
    p.add_argument("--step", type=float, default=2e-7)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--repetitions", type=int, default=1)
    _add_output_flags(p)
    return parser


def _write(text, path):
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc


def _spec_from_args(args) -> SolverSpec:
    if args.scheme in PROX_SOLVERS:
        return solver_from_flags(args.scheme, args.inner, args.eta, args.inner_tol,
                                 args.max_iter, getattr(args, "policy", "abort"))
    return SolverSpec(args.scheme)


def _cmd_solve(args):
    bench = make_benchmark(args.benchmark, args.n, args.seed, args.init, args.tend, args.t0)
    spec = _spec_from_args(args)
    param = args.tol if spec.kind == "adaptive" else args.step
    if not args.trajectory:
        row, _ = run_one(bench, spec, param)
        report = Report([row], {"benchmark": bench.name, "seed": args.seed})
        _write(emit_report(report, args.format), args.out)
        return EXIT_OK if row.status in ("ok", "flagged") else EXIT_SOLVER
    if spec.kind == "adaptive":
        cfg = AdaptiveConfig(tol=args.tol, s_init=min(1e-3, bench.T - bench.t0),
                             s_max=bench.T - bench.t0)
        res = adaptive_solve(bench.problem, bench.default_init, spec.name, bench.t0,
                             bench.T, cfg)
    elif spec.kind == "prox":
        grid = make_uniform_grid(bench.t0, bench.T, args.step)
        res = solve(bench.problem, bench.default_init, spec.name, grid,
                    spec.inner_config(args.step, bench), backend=spec.backend,
                    policy=spec.policy)
    else:
        raise ConfigError("--trajectory is available for proximal and adaptive solvers")
    if args.format == "json":
        text = json.dumps({"times": res.times.tolist(), "states": res.states.tolist(),
                           "nfe": res.nfe_total}, indent=1)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"h{i}" for i in range(res.states.shape[1])])
        for t, h in zip(res.times, res.states):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in h])
        text = buf.getvalue()
    _write(text, args.out)
    return EXIT_OK


def _cmd_sweep(args):
    spec, opts = load_sweep_config(args.config)
    report = run_sweep(spec)
    _write(emit_report(report, args.format or opts["format"]), args.out or opts["out"])
    failed = any(r.status.startswith("failed") for r in report.rows)
    return EXIT_SOLVER if failed else EXIT_OK


def _cmd_order(args):
    try:
        steps = [float(x) for x in args.steps.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --steps {args.steps!r}") from exc
    bench = make_benchmark(args.benchmark, args.n, args.seed, args.init, args.tend, args.t0)
    spec = _spec_from_args(args)
    if spec.kind == "adaptive":
        raise ConfigError("order study needs a fixed-step solver")

    def run(b, s):
        row, final = run_one(b, spec, s)
        if final is None:
            raise SolverError(f"{spec.name} failed at s={s}: {row.status}")
        return final

    est = estimate_convergence_order(run, bench, steps)
    out = {"scheme": args.scheme, "order": est.order, "unreliable": est.unreliable,
           "step_sizes": est.step_sizes.tolist(), "errors": est.errors.tolist()}
    if args.format == "json":
        text = json.dumps(out, indent=2)
    else:
        text = "step,error\n" + "".join(f"{s!r},{e!r}\n" for s, e in
                                        zip(out["step_sizes"], out["errors"]))
        text += f"# order={est.order:.4f}\n"
    _write(text, args.out)
    return EXIT_OK


def _cmd_stability(args):
    rows = rasterize_domain(args.method, args.re_range, args.im_range, args.resolution)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "inside"])
    for re, im, inside in rows:
        w.writerow([repr(re), repr(im), int(inside)])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


def _cmd_compare(args):
    try:
        n_values = [int(x) for x in args.n_values.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --n-values {args.n_values!r}") from exc
    cmp = compare_implicit_backends(n_values, args.step, args.steps, args.tol, args.seed,
                                    args.repetitions)
    timing = prox_time_vs_nfe(seed=args.seed)
    _, _, r2 = linear_fit_r2(timing.column("nfe"), timing.column("wall_time_ns"))
    cmp.report.metadata["prox_time_vs_nfe_r2"] = r2
    cmp.report.metadata["max_disagreement"] = {str(k): v for k, v in
                                              cmp.max_disagreement.items()}
    _write(emit_report(cmp.report, args.format), args.out)
    failed = any(r.status.startswith("failed") for r in cmp.report.rows)
    return EXIT_SOLVER if failed else EXIT_OK


COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "order": _cmd_order,
            "stability": _cmd_stability, "compare-backends": _cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; those are configuration errors here
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
