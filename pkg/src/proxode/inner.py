"""Inner solvers for one implicit step.

Every proximal scheme reduces one step to finding a zero of

    g(z) = sum_j c_j (z - y_j) / s - f(t*, z) + g0,

the gradient of ``sum_j c_j / (2s) |z - y_j|^2 + F(z) + <z, g0>``. The
optimizers below only need ``g``, so they work whether or not ``F`` exists.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (Array, ConfigError, DivergenceError, InstrumentedRhs,
                   SolverError, l2_norm)

# iterate norm beyond this multiple of the starting norm counts as divergence
DIVERGENCE_FACTOR = 1e12
NEWTON_MAX_DIM = 2048


class Optimizer(str, enum.Enum):
    GD = "gd"
    NAG = "nag"
    NAG_RESTART = "nag-restart"
    FR = "fr"
    FIXED_POINT = "fp"


@dataclass(frozen=True)
class ProxSchemeWeights:
    """Quadratic penalty terms of an inner proximal objective.

    ``anchors`` is a sequence of ``(c_j, y_j)`` pairs; ``shift`` is a constant
    gradient offset ``g0`` (Crank-Nicolson uses ``-f(t_k, h_k)``).
    """

    anchors: tuple
    eval_time: float
    step: float
    shift: Optional[Array] = None

    def __post_init__(self):
        if not self.anchors:
            raise ConfigError("proximal objective needs at least one anchor")
        if not self.total > 0:
            raise ConfigError(
                f"sum of penalty coefficients must be positive, got {self.total}")
        if not self.step > 0:
            raise ConfigError("step size must be positive")

    @property
    def total(self) -> float:
        return float(sum(c for c, _ in self.anchors))

    @property
    def combination(self) -> Array:
        """``sum_j c_j y_j``."""
        return sum(c * np.asarray(y, dtype=float) for c, y in self.anchors)

    @classmethod
    def backward_euler(cls, h_k, s, t_next):
        return cls(((1.0, np.asarray(h_k, dtype=float)),), t_next, s)


@dataclass(frozen=True)
class InnerConfig:
    optimizer: Optimizer = Optimizer.FR
    eta: float = 0.1
    tol: float = 1e-8
    max_iter: int = 500
    restart_period: int = 10
    record_increments: bool = False

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not self.eta > 0:
            raise ConfigError(f"inner step eta must be positive, got {self.eta}")
        if not self.tol > 0:
            raise ConfigError(f"inner tolerance must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be at least 1")
        if int(self.restart_period) < 1:
            raise ConfigError("restart_period must be at least 1")

    def replace(self, **changes) -> "InnerConfig":
        fields = dict(optimizer=self.optimizer, eta=self.eta, tol=self.tol,
                      max_iter=self.max_iter, restart_period=self.restart_period,
                      record_increments=self.record_increments)
        fields.update(changes)
        return InnerConfig(**fields)


@dataclass
class InnerResult:
    z_star: Array
    iterations: int
    last_increment: float
    converged: bool
    diverged: bool = False
    evaluations: int = 0
    increments: list = field(default_factory=list)


class _Objective:
    """Precomputed pieces of g so each gradient costs one rhs call."""

    def __init__(self, weights: ProxSchemeWeights):
        self.weights = weights
        self.total = weights.total
        self.combination = weights.combination
        self.shift = weights.shift
        self.inv_s = 1.0 / weights.step

    def gradient(self, z, rhs):
        f = rhs(self.weights.eval_time, z)
        if not np.all(np.isfinite(f)):
            raise DivergenceError("rhs returned non-finite values")
        g = (self.total * z - self.combination) * self.inv_s - f
        if self.shift is not None:
            g = g + self.shift
        return g, f


def prox_gradient(weights: ProxSchemeWeights, z, rhs: InstrumentedRhs) -> Array:
    """Gradient of the inner objective at ``z`` (one rhs evaluation)."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DivergenceError("iterate is not finite")
    return _Objective(weights).gradient(z, rhs)[0]


def gd_step(z, g, eta):
    return z - eta * g


def fr_step(z, p_prev, g_prev, g, eta):
    """Gradient step with Fletcher-Reeves momentum.

    Returns ``(z_next, p, beta)``. On the first iteration pass
    ``g_prev=None`` so that ``beta = 0``. A zero previous gradient means the
    previous iterate was already stationary: the iterate is returned
    unchanged with ``p = 0``.
    """
    if g_prev is None:
        beta = 0.0
        p = g
    else:
        denom = float(np.dot(g_prev, g_prev))
        if denom == 0.0:
            return z, np.zeros_like(z), 0.0
        beta = float(np.dot(g, g)) / denom
        p = g + beta * p_prev
    return z - eta * p, p, beta


def nesterov_momentum(i: int, restart_period: Optional[int] = None) -> float:
    k = i if restart_period is None else i % restart_period
    return (k - 1.0) / (k + 2.0)


def nag_step(z, w_prev, g, eta, i, restart_period=None):
    """One Nesterov step; returns ``(z_next, w_next)``.

    ``w_prev`` is the previous gradient-step point (``z0`` before the first
    iteration). With ``restart_period`` the momentum counter is ``i mod R``.
    """
    w = z - eta * g
    return w + nesterov_momentum(i, restart_period) * (w - w_prev), w


def _fixed_point_map(obj: _Objective, z, rhs):
    f = rhs(obj.weights.eval_time, z)
    if not np.all(np.isfinite(f)):
        raise DivergenceError("rhs returned non-finite values")
    r = obj.combination + obj.weights.step * f
    if obj.shift is not None:
        r = r - obj.weights.step * obj.shift
    return r / obj.total


def run_inner(weights: ProxSchemeWeights, z0, cfg: InnerConfig,
              rhs: InstrumentedRhs) -> InnerResult:
    """Iterate the configured optimizer until ``|z_{i+1} - z_i| <= tol``.

    Each iteration costs exactly one rhs evaluation. Divergence (non-finite
    values or iterate blow-up) is reported as ``converged=False,
    diverged=True`` rather than raised.
    """
    if cfg.optimizer is Optimizer.FIXED_POINT:
        return fixed_point_solve(weights, z0, cfg.tol, cfg.max_iter, rhs,
                                 record=cfg.record_increments)
    obj = _Objective(weights)
    z = np.array(z0, dtype=float)
    bound = DIVERGENCE_FACTOR * max(l2_norm(z), 1.0)
    eta = cfg.eta
    opt = cfg.optimizer
    p_prev = g_prev = None
    w_prev = z.copy()
    incs = [] if cfg.record_increments else None
    inc = np.inf
    start = rhs.count
    for i in range(cfg.max_iter):
        try:
            g, _ = obj.gradient(z, rhs)
        except DivergenceError:
            return InnerResult(z, i + 1, inc, False, True, rhs.count - start, incs or [])
        if opt is Optimizer.GD:
            z_next = z - eta * g
        elif opt is Optimizer.FR:
            z_next, p_prev, _ = fr_step(z, p_prev, g_prev, g, eta)
            g_prev = g
        else:
            period = cfg.restart_period if opt is Optimizer.NAG_RESTART else None
            z_next, w_prev = nag_step(z, w_prev, g, eta, i, period)
        inc = l2_norm(z_next - z)
        z = z_next
        if incs is not None:
            incs.append(inc)
        if not np.isfinite(inc) or l2_norm(z) > bound:
            return InnerResult(z, i + 1, inc, False, True, rhs.count - start, incs or [])
        if inc <= cfg.tol:
            return InnerResult(z, i + 1, inc, True, False, rhs.count - start, incs or [])
    return InnerResult(z, cfg.max_iter, inc, False, False, rhs.count - start, incs or [])


def fixed_point_solve(weights: ProxSchemeWeights, z0, tol: float, max_iter: int,
                      rhs: InstrumentedRhs, record: bool = False) -> InnerResult:
    """Picard iteration ``z <- (sum_j c_j y_j + s f(t*, z) - s g0) / sum_j c_j``.

    With a single unit anchor this is ``z <- h_k + s f(t*, z)``, which
    contracts only when ``s * Lip(f) < 1``.
    """
    obj = _Objective(weights)
    z = np.array(z0, dtype=float)
    bound = DIVERGENCE_FACTOR * max(l2_norm(z), 1.0)
    incs = [] if record else None
    inc = np.inf
    start = rhs.count
    for i in range(max_iter):
        try:
            z_next = _fixed_point_map(obj, z, rhs)
        except DivergenceError:
            return InnerResult(z, i + 1, inc, False, True, rhs.count - start, incs or [])
        inc = l2_norm(z_next - z)
        z = z_next
        if incs is not None:
            incs.append(inc)
        if not np.isfinite(inc) or l2_norm(z) > bound:
            return InnerResult(z, i + 1, inc, False, True, rhs.count - start, incs or [])
        if inc <= tol:
            return InnerResult(z, i + 1, inc, True, False, rhs.count - start, incs or [])
    return InnerResult(z, max_iter, inc, False, False, rhs.count - start, incs or [])


def newton_solve(weights: ProxSchemeWeights, z0, rhs: InstrumentedRhs, jacobian,
                 tol: float = 1e-10, max_iter: int = 50) -> InnerResult:
    """Newton-Raphson on the scaled residual ``r(z) = s * g(z)``.

    For backward Euler ``r(z) = z - h_k - s f(t*, z)`` with Jacobian
    ``I - s J_f``. Stops once ``|r(z)| <= tol``. ``iterations`` counts
    Newton updates (dense LU solves); ``evaluations`` counts rhs calls,
    which is one more because the residual at the final iterate is checked.
    """
    z = np.array(z0, dtype=float)
    d = z.size
    if d > NEWTON_MAX_DIM:
        raise ConfigError(f"Newton baseline is limited to d <= {NEWTON_MAX_DIM}, got {d}")
    obj = _Objective(weights)
    s = weights.step
    t_star = weights.eval_time
    start = rhs.count
    res_norm = np.inf
    for i in range(max_iter + 1):
        try:
            g, _ = obj.gradient(z, rhs)
        except DivergenceError:
            return InnerResult(z, i, res_norm, False, True, rhs.count - start)
        r = s * g
        res_norm = l2_norm(r)
        if res_norm <= tol:
            return InnerResult(z, i, res_norm, True, False, rhs.count - start)
        if i == max_iter:
            break
        J = obj.total * np.eye(d) - s * np.asarray(jacobian(t_star, z), dtype=float)
        try:
            dz = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular Newton matrix: {exc}") from exc
        z = z - dz
    return InnerResult(z, max_iter, res_norm, False, False, rhs.count - start)


def weights_from(coeffs: Sequence[float], anchors: Sequence[Array], t_star, s, shift=None):
    return ProxSchemeWeights(tuple((float(c), np.asarray(y, dtype=float))
                                   for c, y in zip(coeffs, anchors)), t_star, s, shift)
