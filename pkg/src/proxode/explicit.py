"""Explicit baselines: forward Euler, Dormand-Prince 5(4) and adaptive Heun.

Dormand-Prince evaluates all seven stages on every attempt. The last
stage is not reused as the next step's first stage, so one attempt always
costs 7 evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (ConfigError, DivergenceError, InstrumentedRhs, OdeProblem,
                   SolveResult, SolverError, TimeGrid, as_state, l2_norm)

# stage nodes and coupling coefficients
DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# propagated solution
DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# embedded comparison solution
DP_B_EMBEDDED = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                 187 / 2100, 1 / 40)

GROWTH_LIMIT = 5.0
SHRINK_LIMIT = 0.2


@dataclass(frozen=True)
class AdaptiveConfig:
    tol: float = 1e-6
    s_init: float = 1e-3
    s_min: float = 1e-12
    s_max: float = 1.0
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tolerance must be positive")
        if not 0 < self.s_min <= self.s_init <= self.s_max:
            raise ConfigError("need 0 < s_min <= s_init <= s_max")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")


@dataclass
class EmbeddedStepOutcome:
    h_high: np.ndarray
    h_low: np.ndarray
    err: float
    s_opt: float
    accepted: bool


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite {what}")
    return x


def forward_euler_step(h_k, s, t_k, rhs):
    return h_k + s * _finite(rhs(t_k, h_k), "rhs value")


def dopri5_attempt(h_k, s, t_k, rhs, tol=None, s_min=0.0, s_max=np.inf):
    """One Dormand-Prince attempt (7 rhs evaluations).

    ``s_opt = s (tol * s / (2 err))^(1/5)``, clamped to ``[s_min, s_max]``.
    With ``tol=None`` only the two solutions and the error are computed.
    """
    h_k = np.asarray(h_k, dtype=float)
    ks = []
    for i in range(7):
        y = h_k.copy()
        for a, kj in zip(DP_A[i], ks):
            if a:
                y += a * kj
        ks.append(s * _finite(rhs(t_k + DP_C[i] * s, y), "stage value"))
    h_high = h_k + sum(b * kj for b, kj in zip(DP_B, ks) if b)
    h_low = h_k + sum(b * kj for b, kj in zip(DP_B_EMBEDDED, ks) if b)
    err = l2_norm(h_high - h_low)
    s_opt = np.nan
    accepted = True
    if tol is not None:
        s_opt = np.inf if err == 0 else s * (tol * s / (2.0 * err)) ** 0.2
        s_opt = float(np.clip(s_opt, s_min, s_max))
        accepted = err <= tol
    return EmbeddedStepOutcome(h_high, h_low, err, s_opt, accepted)


def adaptive_heun_attempt(h_k, s, t_k, rhs, tol=None, s_min=0.0, s_max=np.inf):
    """Heun/Euler embedded pair (2 rhs evaluations); ``s_opt = 0.9 s (tol/err)^(1/2)``."""
    h_k = np.asarray(h_k, dtype=float)
    k1 = _finite(rhs(t_k, h_k), "stage value")
    h_low = h_k + s * k1
    k2 = _finite(rhs(t_k + s, h_low), "stage value")
    h_high = h_k + 0.5 * s * (k1 + k2)
    err = l2_norm(h_high - h_low)
    s_opt = np.nan
    accepted = True
    if tol is not None:
        s_opt = np.inf if err == 0 else 0.9 * s * (tol / err) ** 0.5
        s_opt = float(np.clip(s_opt, s_min, s_max))
        accepted = err <= tol
    return EmbeddedStepOutcome(h_high, h_low, err, s_opt, accepted)


ATTEMPTS = {"dopri5": (dopri5_attempt, 7), "heun": (adaptive_heun_attempt, 2)}


def adaptive_solve(problem: OdeProblem, h0, method: str, t0: float, T: float,
                   cfg: AdaptiveConfig) -> SolveResult:
    """Adaptive integration; a step is accepted iff its error estimate is <= tol.

    The next step size is ``s_opt`` clamped to
    ``[max(s_min, s/5), min(s_max, 5 s)]``. Rejected attempts still count
    their evaluations. The last step is shortened to land on ``T``.
    """
    method = method.lower()
    if method not in ATTEMPTS:
        raise ConfigError(f"unknown adaptive method {method!r}")
    if not T > t0:
        raise ConfigError("need T > t0")
    attempt, _ = ATTEMPTS[method]
    rhs = InstrumentedRhs(problem)
    h = as_state(h0, problem.dimension)
    t = float(t0)
    times, states, errs = [t], [h], []
    s = cfg.s_init
    accepted = rejected = 0

    def partial(status):
        return SolveResult(np.array(times), np.array(states), rhs.count, residuals=errs,
                           accepted_steps=accepted, rejected_steps=rejected, status=status)

    while t < T:
        if accepted + rejected >= cfg.max_steps:
            raise SolverError(f"{method}: exceeded max_steps={cfg.max_steps} at t={t:.6g}",
                              step=accepted, partial=partial("max_steps"))
        last = s >= T - t
        step = T - t if last else s
        try:
            out = attempt(h, step, t, rhs, cfg.tol)
        except DivergenceError as exc:
            raise DivergenceError(f"{method}: {exc} at t={t:.6g}", step=accepted,
                                  partial=partial("diverged")) from exc
        lo = max(cfg.s_min, SHRINK_LIMIT * step)
        hi = min(cfg.s_max, GROWTH_LIMIT * step)
        s_next = min(max(out.s_opt, lo), hi)
        if out.accepted:
            accepted += 1
            t = T if last else t + step
            h = out.h_high
            times.append(t)
            states.append(h)
            errs.append(out.err)
            if not last:
                s = s_next
        else:
            rejected += 1
            if step <= cfg.s_min:
                raise SolverError(
                    f"{method}: step pinned at s_min={cfg.s_min:g} with error "
                    f"{out.err:.3e} > tol at t={t:.6g}; problem is likely stiff",
                    step=accepted, partial=partial("stiff"))
            s = s_next
    return SolveResult(np.array(times), np.array(states), rhs.count, residuals=errs,
                       accepted_steps=accepted, rejected_steps=rejected)


def fixed_step_solve(problem: OdeProblem, h0, method: str, grid: TimeGrid) -> SolveResult:
    """Fixed-step explicit integration; ``method`` is ``fe``, ``heun`` or ``dopri5``.

    Heun and DOPRI5 propagate their higher-order solution.
    """
    method = method.lower()
    rhs = InstrumentedRhs(problem)
    h = as_state(h0, problem.dimension)
    states = np.empty((grid.n_steps + 1, problem.dimension))
    states[0] = h
    for k in range(grid.n_steps):
        t, dt = grid.times[k], grid.times[k + 1] - grid.times[k]
        if method == "fe":
            h = forward_euler_step(h, dt, t, rhs)
        elif method in ATTEMPTS:
            h = ATTEMPTS[method][0](h, dt, t, rhs).h_high
        else:
            raise ConfigError(f"unknown explicit method {method!r}")
        states[k + 1] = h
    return SolveResult(grid.times.copy(), states, rhs.count, accepted_steps=grid.n_steps)
