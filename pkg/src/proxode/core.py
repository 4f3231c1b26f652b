"""Problem definitions, evaluation counting, time grids and result records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

Array = np.ndarray
RhsFn = Callable[[float, Array], Array]


class SolverError(RuntimeError):
    """A solve could not be completed.

    ``step`` is the outer step index at which the failure happened and
    ``partial`` optionally carries the trajectory computed so far.
    """

    def __init__(self, message: str, step: Optional[int] = None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class DivergenceError(SolverError):
    """Non-finite or exploding iterates."""


class InnerConvergenceError(SolverError):
    """An inner optimization loop hit its iteration cap."""


class ConfigError(ValueError):
    """Invalid solver or harness configuration."""


@dataclass
class OdeProblem:
    """Right-hand side ``f(t, h)`` plus optional structure.

    ``potential(t, h)`` is a function ``F`` with ``f = -grad F`` at frozen
    time. ``jacobian(t, h)`` returns the dense ``d x d`` Jacobian of ``f``
    and ``exact(t)`` an exact solution. Anything the rhs closes over that
    would be a learnable parameter elsewhere lives in ``params``.
    """

    dimension: int
    rhs: RhsFn
    potential: Optional[Callable[[float, Array], float]] = None
    jacobian: Optional[Callable[[float, Array], Array]] = None
    exact: Optional[Callable[[float], Array]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ConfigError("dimension must be a positive integer")
        self.dimension = int(self.dimension)


class InstrumentedRhs:
    """Callable wrapper around a problem's rhs that counts evaluations."""

    def __init__(self, problem: OdeProblem):
        self.problem = problem
        self._f = problem.rhs
        self.count = 0

    def __call__(self, t: float, h: Array) -> Array:
        self.count += 1
        return np.asarray(self._f(t, h), dtype=float)


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    step: float
    times: Array

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def gaps(self) -> Array:
        return np.diff(self.times)


def make_uniform_grid(t0: float, T: float, s: float) -> TimeGrid:
    """Uniform grid from ``t0`` to ``T`` with step ``s``.

    The last step is shrunk so the grid ends on ``T`` exactly. A remainder
    below ``1e-9 * s`` is treated as round-off rather than an extra step.
    """
    if not s > 0:
        raise ConfigError(f"step size must be positive, got {s}")
    if not T > t0:
        raise ConfigError(f"need T > t0, got t0={t0}, T={T}")
    ratio = (T - t0) / s
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = int(math.floor(ratio))
        times = np.append(t0 + s * np.arange(n + 1), T)
    else:
        times = t0 + s * np.arange(n + 1)
        times[-1] = T
    return TimeGrid(float(t0), float(T), float(s), times)


def l2_norm(v) -> float:
    return float(np.sqrt(np.dot(np.ravel(v), np.ravel(v))))


@dataclass
class SolveResult:
    """Trajectory and cost accounting of one solve."""

    times: Array
    states: Array
    nfe_total: int
    inner_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    energy_trace: Optional[Array] = None
    accepted_steps: int = 0
    rejected_steps: int = 0
    status: str = "ok"
    flagged_steps: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def final_state(self) -> Array:
        return self.states[-1]

    def final_error(self, exact_final: Array) -> float:
        return l2_norm(self.states[-1] - exact_final)


@dataclass
class GradientCheckReport:
    samples: int
    failures: list
    max_violation: float

    @property
    def passed(self) -> bool:
        return not self.failures


def validate_gradient_consistency(problem: OdeProblem, samples: int = 16,
                                  tol: float = 1e-4, t: float = 0.0,
                                  delta: float = 1e-5, seed: int = 0,
                                  scale: float = 1.0) -> GradientCheckReport:
    """Check ``f = -grad F`` with central differences along random directions.

    Each sample draws a state ``h`` and a unit direction ``v`` and requires
    ``|dF/dv + <f(h), v>| <= tol * (1 + |<f(h), v>|)``. Evaluations made here
    are not counted as solver work.
    """
    if problem.potential is None:
        raise ConfigError("problem has no potential to validate against")
    rng = np.random.default_rng(seed)
    d = problem.dimension
    failures = []
    worst = 0.0
    for k in range(samples):
        h = scale * rng.standard_normal(d)
        v = rng.standard_normal(d)
        v /= l2_norm(v)
        dF = (problem.potential(t, h + delta * v)
              - problem.potential(t, h - delta * v)) / (2 * delta)
        fv = float(np.dot(problem.rhs(t, h), v))
        violation = abs(dF + fv) / (1.0 + abs(fv))
        worst = max(worst, violation)
        if violation > tol:
            failures.append({"sample": k, "directional": dF, "minus_f_dot_v": -fv,
                             "violation": violation})
    return GradientCheckReport(samples, failures, worst)


def as_state(x: Any, dimension: Optional[int] = None) -> Array:
    h = np.array(x, dtype=float).reshape(-1)
    if dimension is not None and h.size != dimension:
        raise ConfigError(f"state has length {h.size}, problem dimension is {dimension}")
    return h
