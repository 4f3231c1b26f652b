"""Benchmark sweeps, backend comparisons and report serialization."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .benchmarks import (DEFAULT_SEED, BenchmarkProblem, exact_diffusion_solution,
                         make_diffusion_benchmark, make_scalar_benchmark)
from .core import ConfigError, SolverError, l2_norm, make_uniform_grid
from .explicit import AdaptiveConfig, adaptive_solve, fixed_step_solve
from .inner import InnerConfig, Optimizer
from .schemes import ProxScheme, solve, stable_eta

REPORT_COLUMNS = ("solver", "param", "final_error", "nfe", "wall_time_ns",
                  "inner_iter_total", "accepted", "rejected", "status")
PROX_SOLVERS = tuple(p.value for p in ProxScheme)
ADAPTIVE_SOLVERS = ("dopri5", "heun")
FIXED_SOLVERS = ("fe", "heun-fixed", "dopri5-fixed")
SOLVERS = PROX_SOLVERS + ADAPTIVE_SOLVERS + FIXED_SOLVERS


def make_benchmark(name: str, n: int = 128, seed: int = DEFAULT_SEED, init: str = "normal",
                   T: Optional[float] = None, t0: float = 0.0) -> BenchmarkProblem:
    """Build ``scalar`` or ``diffusion`` on ``[t0, T]``.

    The diffusion initial state is imposed at ``t0``; the scalar problem
    starts from its exact solution at ``t0``.
    """
    if name == "scalar":
        bench = make_scalar_benchmark()
        bench.default_init = bench.problem.exact(t0)
    elif name == "diffusion":
        bench = make_diffusion_benchmark(n, seed, init)
        h0 = bench.default_init
        bench.problem.exact = lambda t: exact_diffusion_solution(h0, t - t0, h0.size)
    else:
        raise ConfigError(f"unknown benchmark {name!r}; choose scalar or diffusion")
    bench.t0 = float(t0)
    if T is not None:
        bench.T = float(T)
    if not bench.T > bench.t0:
        raise ConfigError(f"need tend > t0, got [{bench.t0}, {bench.T}]")
    return bench


@dataclass
class SolverSpec:
    """One solver configuration of a sweep.

    ``eta="auto"`` picks :func:`proxode.schemes.stable_eta` for the step.
    """

    name: str
    optimizer: str = "fr"
    eta: object = "auto"
    inner_tol: float = 1e-8
    max_iter: int = 100_000
    backend: str = "prox"
    policy: str = "abort"
    s_init: float = 1e-3

    def __post_init__(self):
        if self.name not in SOLVERS:
            raise ConfigError(f"unknown solver {self.name!r}; choose from {SOLVERS}")
        try:
            Optimizer(self.optimizer)
        except ValueError as exc:
            raise ConfigError(f"unknown inner optimizer {self.optimizer!r}") from exc
        if self.eta != "auto" and not float(self.eta) > 0:
            raise ConfigError("eta must be positive or 'auto'")

    @property
    def kind(self) -> str:
        if self.name in PROX_SOLVERS:
            return "prox"
        return "adaptive" if self.name in ADAPTIVE_SOLVERS else "fixed"

    def inner_config(self, s: float, bench: BenchmarkProblem) -> InnerConfig:
        eta = self.eta
        if eta == "auto":
            eta = stable_eta(self.name, s, bench.lipschitz)
        return InnerConfig(optimizer=self.optimizer, eta=float(eta), tol=self.inner_tol,
                           max_iter=self.max_iter)


@dataclass
class Row:
    solver: str
    param: float
    final_error: float
    nfe: int
    wall_time_ns: int
    inner_iter_total: int
    accepted: int
    rejected: int
    status: str


@dataclass
class Report:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]


def run_one(bench: BenchmarkProblem, spec: SolverSpec, param: float):
    """Run a solver once; returns ``(row, final_state or None)``.

    ``param`` is the step size for fixed-grid solvers and the error
    tolerance for adaptive ones. Wall time covers the solve call only.
    Solver failures become rows with a non-``ok`` status.
    """
    h0 = bench.default_init
    problem = bench.problem
    final = None
    label = spec.name if spec.backend == "prox" else f"{spec.name}-{spec.backend}"
    start = time.perf_counter_ns()
    try:
        if spec.kind == "prox":
            grid = make_uniform_grid(bench.t0, bench.T, param)
            res = solve(problem, h0, spec.name, grid, spec.inner_config(param, bench),
                        backend=spec.backend, policy=spec.policy, record_residuals=False)
        elif spec.kind == "adaptive":
            cfg = AdaptiveConfig(tol=param, s_init=min(spec.s_init, bench.T - bench.t0),
                                 s_max=bench.T - bench.t0)
            res = adaptive_solve(problem, h0, spec.name, bench.t0, bench.T, cfg)
        else:
            grid = make_uniform_grid(bench.t0, bench.T, param)
            res = fixed_step_solve(problem, h0, spec.name.replace("-fixed", ""), grid)
        elapsed = time.perf_counter_ns() - start
    except SolverError as exc:
        elapsed = time.perf_counter_ns() - start
        part = exc.partial
        return Row(label, float(param), math.nan, part.nfe_total if part else 0, elapsed,
                   int(sum(part.inner_iterations)) if part else 0,
                   part.accepted_steps if part else 0, part.rejected_steps if part else 0,
                   f"failed:{type(exc).__name__}"), None
    final = res.final_state
    err = l2_norm(final - bench.exact_final())
    status = res.status if np.isfinite(err) else "failed:nonfinite"
    return Row(label, float(param), float(err), int(res.nfe_total), int(elapsed),
               int(sum(res.inner_iterations)), int(res.accepted_steps),
               int(res.rejected_steps), status), final


@dataclass
class SweepSpec:
    benchmark: str = "diffusion"
    n: int = 128
    seed: int = DEFAULT_SEED
    init: str = "normal"
    t0: float = 0.0
    T: Optional[float] = None
    solvers: Sequence[SolverSpec] = ()
    steps: Sequence[float] = (0.1,)
    tols: Sequence[float] = (1e-4, 1e-5, 1e-6)
    repetitions: int = 1
    metric: str = "nfe"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.metric not in REPORT_COLUMNS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        self.solvers = [s if isinstance(s, SolverSpec) else SolverSpec(**s)
                        for s in self.solvers]

    def config_hash(self) -> str:
        payload = json.dumps(_jsonable(asdict(self)), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def run_sweep(spec: SweepSpec) -> Report:
    """Run every solver over its parameter list ``repetitions`` times.

    The benchmark is rebuilt from ``spec.seed`` so repeated sweeps see the
    same initial state. One discarded warm-up run precedes the timed ones.
    """
    bench = make_benchmark(spec.benchmark, spec.n, spec.seed, spec.init, spec.T, spec.t0)
    if not spec.solvers:
        raise ConfigError("sweep needs at least one solver")
    first = spec.solvers[0]
    run_one(bench, first, (spec.tols if first.kind == "adaptive" else spec.steps)[0])
    report = Report(metadata={
        "seed": spec.seed, "benchmark": bench.name, "grid_size": bench.problem.dimension,
        "config_hash": spec.config_hash(), "version": __version__,
        "repetitions": spec.repetitions, "metric": spec.metric})
    for solver in spec.solvers:
        params = spec.tols if solver.kind == "adaptive" else spec.steps
        for p in params:
            for _ in range(spec.repetitions):
                report.rows.append(run_one(bench, solver, p)[0])
    return report


@dataclass
class BackendComparison:
    report: Report
    final_states: dict
    max_disagreement: dict


def compare_implicit_backends(n_values=(16, 32, 64, 128, 256, 512), s: float = 2e-7,
                              steps: int = 20, tol: float = 1e-10, seed: int = DEFAULT_SEED,
                              repetitions: int = 1) -> BackendComparison:
    """Backward Euler on the diffusion problem with three inner solvers.

    Backends are prox-FR (``eta`` from :func:`stable_eta`), plain fixed-point
    iteration and dense Newton-Raphson. ``s`` should satisfy
    ``s * mu_max < 1`` at the largest grid so the fixed-point map contracts.
    Rows use ``param = N``; ``max_disagreement[N]`` is the largest pairwise
    final-state distance.
    """
    report = Report(metadata={"seed": seed, "step": s, "steps": steps, "tol": tol,
                              "version": __version__})
    finals, disagree = {}, {}
    for n in n_values:
        bench = make_diffusion_benchmark(n, seed, T=s * steps)
        specs = {"prox-fr": SolverSpec("be", "fr", inner_tol=tol),
                 "fp": SolverSpec("be", "fp", inner_tol=tol),
                 "newton": SolverSpec("be", inner_tol=tol, backend="newton")}
        states = {}
        for label, spec in specs.items():
            run_one(bench, spec, s)
            for _ in range(repetitions):
                row, final = run_one(bench, spec, s)
                row.solver = label
                row.param = float(n)
                report.rows.append(row)
            states[label] = final
        finals[n] = states
        good = [v for v in states.values() if v is not None]
        disagree[n] = max((l2_norm(a - b) for i, a in enumerate(good) for b in good[i + 1:]),
                          default=math.nan)
    return BackendComparison(report, finals, disagree)


def prox_time_vs_nfe(n: int = 128, s: float = 1e-3, step_counts=(5, 10, 20, 40, 80),
                     tol: float = 1e-8, seed: int = DEFAULT_SEED,
                     repetitions: int = 5) -> Report:
    """Proximal-FR backward Euler on diffusion over a growing number of steps.

    Rows use ``param = steps``; each timed run is repeated and the fastest
    kept, since scheduler noise only ever adds time.
    """
    report = Report(metadata={"seed": seed, "grid_size": n, "step": s, "tol": tol,
                              "version": __version__})
    spec = SolverSpec("be", "fr", inner_tol=tol)
    for count in step_counts:
        bench = make_diffusion_benchmark(n, seed, T=s * count)
        run_one(bench, spec, s)
        rows = [run_one(bench, spec, s)[0] for _ in range(repetitions)]
        row = min(rows, key=lambda r: r.wall_time_ns)
        row.param = float(count)
        report.rows.append(row)
    return report


def linear_fit_r2(x, y):
    """Least-squares line through ``(x, y)``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def emit_report(report: Report, fmt: str = "csv", path=None) -> str:
    """Serialize ``report`` as CSV (fixed header) or JSON; optionally write ``path``."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in report.rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (getattr(r, c) for c in REPORT_COLUMNS)])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({"metadata": _jsonable(report.metadata),
                           "rows": [asdict(r) for r in report.rows]}, indent=2)
    else:
        raise ConfigError(f"unknown report format {fmt!r}; choose csv or json")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_report(text: str) -> Report:
    """Inverse of ``emit_report(..., "json")``."""
    data = json.loads(text)
    rows = [Row(**r) for r in data["rows"]]
    return Report(rows, data.get("metadata", {}))


def solver_from_flags(scheme: str, inner: str = "fr", eta="auto", inner_tol: float = 1e-8,
                      max_iter: int = 100_000, policy: str = "abort") -> SolverSpec:
    """Map CLI-style ``--scheme`` / ``--inner`` values to a :class:`SolverSpec`.

    ``inner="newton"`` selects the dense Newton backend.
    """
    if inner == "newton":
        return SolverSpec(scheme, "fr", eta, inner_tol, max_iter, "newton", policy)
    try:
        Optimizer(inner)
    except ValueError as exc:
        raise ConfigError(f"unknown inner solver {inner!r}") from exc
    return SolverSpec(scheme, inner, eta, inner_tol, max_iter, "prox", policy)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


_CONFIG_KEYS = {"benchmark", "n", "seed", "init", "t0", "tend", "scheme", "step", "inner",
                "eta", "inner_tol", "tol", "max_iter", "policy", "repetitions", "metric",
                "format", "out"}


def parse_sweep_config(data: dict) -> tuple:
    """Build a :class:`SweepSpec` from a flat mapping whose keys mirror CLI flags.

    ``scheme``, ``step``, ``inner`` and ``tol`` may be lists (the sweep
    axes). Returns ``(spec, output_options)`` where the options hold
    ``format`` and ``out``. Unknown keys raise :class:`ConfigError`.
    """
    if not isinstance(data, dict):
        raise ConfigError("sweep config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "scheme" not in data:
        raise ConfigError("sweep config needs 'scheme'")
    solvers = []
    for name in _as_list(data["scheme"]):
        if name in PROX_SOLVERS:
            for inner in _as_list(data.get("inner", "fr")):
                solvers.append(solver_from_flags(name, inner, data.get("eta", "auto"),
                                                 float(data.get("inner_tol", 1e-8)),
                                                 int(data.get("max_iter", 100_000)),
                                                 data.get("policy", "abort")))
        else:
            solvers.append(SolverSpec(name))
    try:
        spec = SweepSpec(benchmark=data.get("benchmark", "diffusion"), n=int(data.get("n", 128)),
                         seed=int(data.get("seed", DEFAULT_SEED)),
                         init=data.get("init", "normal"), t0=float(data.get("t0", 0.0)),
                         T=data.get("tend"), solvers=solvers,
                         steps=[float(x) for x in _as_list(data.get("step", 0.1))],
                         tols=[float(x) for x in _as_list(data.get("tol", [1e-4, 1e-5, 1e-6]))],
                         repetitions=int(data.get("repetitions", 1)),
                         metric=data.get("metric", "nfe"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec, {"format": data.get("format", "csv"), "out": data.get("out")}


def load_sweep_config(path) -> tuple:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_sweep_config(data)
