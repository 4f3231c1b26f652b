"""Proximal implicit time stepping.

All schemes share one pattern: build the quadratic penalty terms of the
step's inner objective, warm start from the newest state, and hand the
problem to :func:`proxode.inner.run_inner`.

``MULTISTAGE_3`` uses a 6-stage tableau published to two decimals. The
rounding breaks consistency (one step advances ``0.99813 s`` of time
instead of ``s``), so it does not converge under refinement and should be
treated as a low-precision curiosity.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (ConfigError, DivergenceError, InnerConvergenceError,
                   InstrumentedRhs, OdeProblem, SolveResult, SolverError,
                   TimeGrid, as_state, l2_norm)
from .inner import (InnerConfig, InnerResult, Optimizer, ProxSchemeWeights,
                    newton_solve, run_inner, weights_from)


class ProxScheme(str, enum.Enum):
    BACKWARD_EULER = "be"
    CRANK_NICOLSON = "cn"
    BDF2 = "bdf2"
    BDF3 = "bdf3"
    BDF4 = "bdf4"
    MULTISTAGE_2 = "ms2"
    MULTISTAGE_3 = "ms3"

    @property
    def history_depth(self) -> int:
        return _DEPTH[self]

    @property
    def order(self) -> int:
        return _ORDER[self]


_DEPTH = {ProxScheme.BACKWARD_EULER: 1, ProxScheme.CRANK_NICOLSON: 1,
          ProxScheme.BDF2: 2, ProxScheme.BDF3: 3, ProxScheme.BDF4: 4,
          ProxScheme.MULTISTAGE_2: 1, ProxScheme.MULTISTAGE_3: 1}
_ORDER = {ProxScheme.BACKWARD_EULER: 1, ProxScheme.CRANK_NICOLSON: 2,
          ProxScheme.BDF2: 2, ProxScheme.BDF3: 3, ProxScheme.BDF4: 4,
          ProxScheme.MULTISTAGE_2: 2, ProxScheme.MULTISTAGE_3: 3}

# coefficients c_j on |z - h_{k-j}|^2 / (2s); they sum to a_p
BDF_WEIGHTS = {
    1: (1.0,),
    2: (2.0, -0.5),
    3: (3.0, -1.5, 1.0 / 3.0),
    4: (4.0, -3.0, 4.0 / 3.0, -0.25),
}
BDF_LEADING = {1: 1.0, 2: 1.5, 3: 11.0 / 6.0, 4: 25.0 / 12.0}


class MultiStageTableau:
    """Lower-triangular stage coefficients ``gamma[m-1, i]`` for stage ``m``.

    Row ``m-1`` holds ``gamma_{m,0..m-1}``; entries right of the diagonal
    are ignored.
    """

    def __init__(self, gamma, name: str = ""):
        gamma = np.atleast_2d(np.array(gamma, dtype=float))
        if gamma.shape[0] != gamma.shape[1]:
            raise ConfigError("tableau must be square (M x M)")
        self.gamma = np.tril(gamma)
        self.name = name
        for m, total in enumerate(self.row_sums(), start=1):
            if not total > 0:
                raise ConfigError(f"stage {m} coefficients sum to {total}; must be positive")

    @property
    def stages(self) -> int:
        return self.gamma.shape[0]

    def row(self, m: int):
        return self.gamma[m - 1, :m]

    def row_sums(self):
        return [float(self.row(m).sum()) for m in range(1, self.stages + 1)]

    def stage_times(self):
        """Normalized stage times from treating ``t`` as an extra state.

        Applying the stage equations to ``t' = 1`` gives
        ``tau_m = (sum_i gamma_{m,i} tau_i + 1) / sum_i gamma_{m,i}`` with
        ``tau_0 = 0``. A consistent tableau ends at ``tau_M = 1``.
        """
        taus = [0.0]
        for m in range(1, self.stages + 1):
            g = self.row(m)
            taus.append((float(np.dot(g, taus)) + 1.0) / float(g.sum()))
        return taus


ORDER2_TABLEAU = MultiStageTableau([[5, 0, 0],
                                    [-2, 6, 0],
                                    [-2, 3 / 14, 44 / 7]], name="order2")
ORDER3_TABLEAU = MultiStageTableau([
    [11.17, 0, 0, 0, 0, 0],
    [-7.5, 19.43, 0, 0, 0, 0],
    [-1.05, -4.75, 13.98, 0, 0, 0],
    [1.8, 0.05, -7.83, 13.8, 0, 0],
    [6.2, -7.17, -1.33, 1.63, 11.52, 0],
    [-2.83, 4.69, 2.46, -11.55, 6.68, 11.95],
], name="order3-rounded")


class SchemeHistory:
    """The most recent accepted states, newest first."""

    def __init__(self, depth: int):
        self.depth = depth
        self.states = deque(maxlen=depth)
        self.times = deque(maxlen=depth)

    def push(self, t, h):
        self.states.appendleft(np.asarray(h, dtype=float))
        self.times.appendleft(float(t))

    def __len__(self):
        return len(self.states)

    def __getitem__(self, j):
        return self.states[j]


@dataclass
class StepOutcome:
    state: np.ndarray
    inner: list
    residual: float = float("nan")
    flagged: bool = False


def _check(res: InnerResult, label: str, policy: str):
    if res.diverged:
        raise DivergenceError(f"{label}: inner iteration diverged "
                              f"(last increment {res.last_increment:.3e})")
    if not res.converged:
        if policy == "abort":
            raise InnerConvergenceError(
                f"{label}: inner iteration did not reach tolerance in "
                f"{res.iterations} iterations (last increment {res.last_increment:.3e})")
        return True
    return False


def _solve_inner(weights, z0, cfg, rhs, newton_jacobian=None):
    if newton_jacobian is not None:
        return newton_solve(weights, z0, rhs, newton_jacobian, cfg.tol, cfg.max_iter)
    return run_inner(weights, z0, cfg, rhs)


def prox_backward_euler_step(h_k, s, t_next, cfg: InnerConfig, rhs: InstrumentedRhs,
                             z0=None, policy="abort", jacobian=None):
    """``h_{k+1} = argmin |z - h_k|^2 / (2s) + F(z)``, warm started at ``h_k``."""
    h_k = np.asarray(h_k, dtype=float)
    w = ProxSchemeWeights.backward_euler(h_k, s, t_next)
    res = _solve_inner(w, h_k if z0 is None else z0, cfg, rhs, jacobian)
    flagged = _check(res, "backward Euler", policy)
    return StepOutcome(res.z_star, [res], flagged=flagged)


def crank_nicolson_weights(h_k, f_k, s, t_next):
    """Penalty ``|z - h_k|^2 / s`` plus the linear term ``<z, grad F(h_k)>``."""
    return weights_from((2.0,), (h_k,), t_next, s, shift=-np.asarray(f_k, dtype=float))


def prox_crank_nicolson_step(h_k, s, t_k, t_next, cfg: InnerConfig, rhs: InstrumentedRhs,
                             z0=None, policy="abort", jacobian=None):
    """Trapezoidal step via its proximal form.

    The inner gradient is ``2 (z - h_k) / s - f(t_{k+1}, z) - f(t_k, h_k)``.
    ``f(t_k, h_k)`` costs one extra rhs evaluation per step.
    """
    h_k = np.asarray(h_k, dtype=float)
    f_k = rhs(t_k, h_k)
    if not np.all(np.isfinite(f_k)):
        raise DivergenceError("rhs returned non-finite values")
    w = crank_nicolson_weights(h_k, f_k, s, t_next)
    res = _solve_inner(w, h_k if z0 is None else z0, cfg, rhs, jacobian)
    flagged = _check(res, "Crank-Nicolson", policy)
    return StepOutcome(res.z_star, [res], flagged=flagged)


def bdf_weights(order: int, history, s, t_next):
    if order not in BDF_WEIGHTS:
        raise ConfigError(f"BDF order must be 1..4, got {order}")
    if len(history) < order:
        raise ConfigError(f"BDF{order} needs {order} past states, history has {len(history)}")
    return weights_from(BDF_WEIGHTS[order], [history[j] for j in range(order)], t_next, s)


def prox_bdf_step(order: int, history, s, t_next, cfg: InnerConfig, rhs: InstrumentedRhs,
                  z0=None, policy="abort", jacobian=None):
    """BDF step of order 1-4 from ``history`` (newest first).

    The root satisfies ``(a_p h_{k+1} - A_p(h_k, ...)) / s = f(t_{k+1}, h_{k+1})``.
    """
    w = bdf_weights(order, history, s, t_next)
    res = _solve_inner(w, history[0] if z0 is None else z0, cfg, rhs, jacobian)
    flagged = _check(res, f"BDF{order}", policy)
    return StepOutcome(res.z_star, [res], flagged=flagged)


def prox_multistage_step(tableau: MultiStageTableau, h_k, s, t_k, cfg: InnerConfig,
                         rhs: InstrumentedRhs, policy="abort", jacobian=None):
    """Single-step, multi-stage scheme; stage ``m`` penalizes all earlier stages.

    Stage ``m`` evaluates ``f`` at ``t_k + tau_m s`` (see
    :meth:`MultiStageTableau.stage_times`). For the order-2 tableau the
    last stage lands on ``t_k + s``; using ``t_{k+1}`` in every stage would
    drop the scheme to first order on time-dependent problems.
    """
    taus = tableau.stage_times()
    stages = [np.asarray(h_k, dtype=float)]
    results = []
    flagged = False
    for m in range(1, tableau.stages + 1):
        w = weights_from(tableau.row(m), stages[:m], t_k + taus[m] * s, s)
        res = _solve_inner(w, stages[-1], cfg, rhs, jacobian)
        flagged |= _check(res, f"multi-stage stage {m}", policy)
        stages.append(res.z_star)
        results.append(res)
    return StepOutcome(stages[-1], results, flagged=flagged)


def startup_substeps(order: int, s: float) -> int:
    """Crank-Nicolson sub-steps per warm-up step of a BDF run.

    Warm-up values need error ``O(s^p)``. Crank-Nicolson over one step of
    size ``s`` with ``m`` sub-steps has error ``O(s (s/m)^2)``, so
    ``m = ceil(s^{-(p-3)/2})`` suffices.
    """
    if order <= 3 or s >= 1.0:
        return 1
    return max(1, math.ceil(s ** (-(order - 3) / 2.0)))


def _scaled_cfg(cfg: InnerConfig, factor: float) -> InnerConfig:
    return cfg if factor >= 1.0 else cfg.replace(eta=cfg.eta * factor)


def _refined_cn(h, t, dt, m, cfg, rhs, policy, jacobian, nominal_curvature):
    sub = dt / m
    # keep eta * (2/sub + Lip) no larger than eta * (a/s + Lip) at the nominal step
    cfg = _scaled_cfg(cfg, nominal_curvature * sub / 2.0)
    results = []
    flagged = False
    for j in range(m):
        t_a = t + j * sub
        t_b = t + dt if j == m - 1 else t_a + sub
        out = prox_crank_nicolson_step(h, sub, t_a, t_b, cfg, rhs, policy=policy,
                                       jacobian=jacobian)
        h = out.state
        results.extend(out.inner)
        flagged |= out.flagged
    return StepOutcome(h, results, flagged=flagged)


def implicit_residual(problem: OdeProblem, scheme: ProxScheme, s, t_next, h_next,
                      history, f_prev=None, tableau=None, stage_anchors=None):
    """``|a h_{k+1} - A(history) - s f(t_{k+1}, h_{k+1})|`` for the scheme used.

    Uses the raw (uncounted) rhs: residuals are diagnostics, not solver work.
    """
    f_next = np.asarray(problem.rhs(t_next, h_next), dtype=float)
    if scheme is ProxScheme.CRANK_NICOLSON:
        r = 2.0 * (h_next - history[0]) - s * (f_next + f_prev)
    elif stage_anchors is not None:
        coeffs, anchors, t_stage = stage_anchors
        f_next = np.asarray(problem.rhs(t_stage, h_next), dtype=float)
        r = sum(c * (h_next - y) for c, y in zip(coeffs, anchors)) - s * f_next
    else:
        order = {ProxScheme.BACKWARD_EULER: 1, ProxScheme.BDF2: 2,
                 ProxScheme.BDF3: 3, ProxScheme.BDF4: 4}[scheme]
        r = sum(c * (h_next - history[j]) for j, c in enumerate(BDF_WEIGHTS[order])) - s * f_next
    return l2_norm(r)


def leading_coefficient(scheme: ProxScheme, tableau=None) -> float:
    """Curvature ``a`` of the inner quadratic penalty, ``a / s`` overall."""
    scheme = ProxScheme(scheme)
    if scheme in (ProxScheme.MULTISTAGE_2, ProxScheme.MULTISTAGE_3):
        if tableau is None:
            tableau = ORDER2_TABLEAU if scheme is ProxScheme.MULTISTAGE_2 else ORDER3_TABLEAU
        return max(tableau.row_sums())
    return {ProxScheme.BACKWARD_EULER: 1.0, ProxScheme.CRANK_NICOLSON: 2.0,
            ProxScheme.BDF2: BDF_LEADING[2], ProxScheme.BDF3: BDF_LEADING[3],
            ProxScheme.BDF4: BDF_LEADING[4]}[scheme]


def stable_eta(scheme, s: float, lipschitz: float, safety: float = 1.0,
               tableau=None) -> float:
    """Inner step ``safety / (a / s + Lip(f))``.

    Plain gradient descent on a quadratic inner objective converges iff
    ``eta * (a / s + lambda_max) < 2``. Values of ``safety`` near 2 make the
    stiffest modes oscillate, and the increment-based stopping rule then
    leaves a larger error behind, so the default is 1.
    """
    return safety / (leading_coefficient(scheme, tableau) / s + lipschitz)


def residual_bound(scheme: ProxScheme, eta: float, tol: float) -> float:
    """Documented bound ``a (1 + 1/eta) tol`` on recorded implicit residuals."""
    lead = {ProxScheme.BACKWARD_EULER: 1.0, ProxScheme.CRANK_NICOLSON: 2.0,
            ProxScheme.BDF2: BDF_LEADING[2], ProxScheme.BDF3: BDF_LEADING[3],
            ProxScheme.BDF4: BDF_LEADING[4], ProxScheme.MULTISTAGE_2: 5.0,
            ProxScheme.MULTISTAGE_3: 19.43}[scheme]
    return lead * (1.0 + 1.0 / eta) * tol


def solve(problem: OdeProblem, h0, scheme, grid: TimeGrid, inner_cfg: InnerConfig, *,
          tableau: Optional[MultiStageTableau] = None, backend: str = "prox",
          warm_start: str = "previous", policy: str = "abort",
          record_residuals: bool = True) -> SolveResult:
    """Integrate ``problem`` over ``grid`` with a proximal implicit scheme.

    Parameters
    ----------
    scheme : ProxScheme or str
    backend : ``"prox"`` runs ``inner_cfg.optimizer``; ``"newton"`` swaps the
        inner loop for dense Newton-Raphson (requires ``problem.jacobian``).
    warm_start : ``"previous"`` starts each inner loop from ``h_k``;
        ``"extrapolate"`` uses ``2 h_k - h_{k-1}`` when available.
    policy : ``"abort"`` raises on an unconverged inner loop; ``"accept"``
        keeps the last iterate and records the step in ``flagged_steps``.

    BDF runs produce their first ``p - 1`` states with Crank-Nicolson on a
    refined sub-grid (see :func:`startup_substeps`) at ten times tighter
    inner tolerance. A shrunk final grid step is taken the same way.
    """
    scheme = ProxScheme(scheme)
    if policy not in ("abort", "accept"):
        raise ConfigError(f"unknown failure policy {policy!r}")
    if warm_start not in ("previous", "extrapolate"):
        raise ConfigError(f"unknown warm start {warm_start!r}")
    jacobian = None
    if backend == "newton":
        if problem.jacobian is None:
            raise ConfigError("Newton backend needs problem.jacobian")
        jacobian = problem.jacobian
    elif backend != "prox":
        raise ConfigError(f"unknown backend {backend!r}")
    if scheme in (ProxScheme.MULTISTAGE_2, ProxScheme.MULTISTAGE_3) and tableau is None:
        tableau = ORDER2_TABLEAU if scheme is ProxScheme.MULTISTAGE_2 else ORDER3_TABLEAU

    h = as_state(h0, problem.dimension)
    rhs = InstrumentedRhs(problem)
    times = grid.times
    n = grid.n_steps
    s = grid.step
    states = np.empty((n + 1, problem.dimension))
    states[0] = h
    history = SchemeHistory(max(scheme.history_depth, 2))
    history.push(times[0], h)
    bdf_order = {ProxScheme.BDF2: 2, ProxScheme.BDF3: 3, ProxScheme.BDF4: 4}.get(scheme)
    warm_cfg = inner_cfg.replace(tol=inner_cfg.tol / 10.0)
    lead = leading_coefficient(scheme, tableau)
    inner_iters, residuals, flagged = [], [], []
    last_scheme_used = []

    for k in range(n):
        t_k, t_next = times[k], times[k + 1]
        dt = t_next - t_k
        uniform = abs(dt - s) <= 1e-9 * s
        z0 = None
        if warm_start == "extrapolate" and len(history) >= 2:
            z0 = 2.0 * history[0] - history[1]
        stage_info = None
        f_prev = None
        used = scheme
        # eta is set for the nominal step; a shorter final step stiffens the inner problem
        step_cfg = inner_cfg if uniform else _scaled_cfg(inner_cfg, dt / s)
        try:
            if bdf_order is not None and (k < bdf_order - 1 or not uniform):
                m = startup_substeps(bdf_order, dt)
                out = _refined_cn(h, t_k, dt, m, warm_cfg, rhs, policy, jacobian, lead / s)
                used = ProxScheme.CRANK_NICOLSON if m == 1 else None
                if m == 1:
                    f_prev = np.asarray(problem.rhs(t_k, h), dtype=float)
            elif bdf_order is not None:
                out = prox_bdf_step(bdf_order, history, s, t_next, inner_cfg, rhs,
                                    z0=z0, policy=policy, jacobian=jacobian)
            elif scheme is ProxScheme.BACKWARD_EULER:
                out = prox_backward_euler_step(h, dt, t_next, step_cfg, rhs, z0=z0,
                                               policy=policy, jacobian=jacobian)
            elif scheme is ProxScheme.CRANK_NICOLSON:
                out = prox_crank_nicolson_step(h, dt, t_k, t_next, step_cfg, rhs, z0=z0,
                                               policy=policy, jacobian=jacobian)
                if record_residuals:
                    f_prev = np.asarray(problem.rhs(t_k, h), dtype=float)
            else:
                out = prox_multistage_step(tableau, h, dt, t_k, step_cfg, rhs,
                                           policy=policy, jacobian=jacobian)
                stage_info = True
        except SolverError as exc:
            partial = SolveResult(times[:k + 1], states[:k + 1].copy(), rhs.count,
                                  inner_iters, residuals, status="failed")
            raise type(exc)(f"step {k} (t={t_k:.6g}): {exc}", step=k, partial=partial) from exc

        h_next = out.state
        if not np.all(np.isfinite(h_next)):
            raise DivergenceError(f"step {k}: non-finite state", step=k)
        inner_iters.append(sum(r.iterations for r in out.inner))
        if out.flagged:
            flagged.append(k)
            warnings.warn(f"inner loop did not converge at step {k}; keeping last iterate")
        if record_residuals:
            if stage_info:
                taus = tableau.stage_times()
                M = tableau.stages
                # rebuild the last stage's anchors from the recorded stage results
                anchors = [h] + [r.z_star for r in out.inner[:-1]]
                residuals.append(implicit_residual(
                    problem, scheme, dt, t_next, h_next, history,
                    stage_anchors=(tableau.row(M), anchors, t_k + taus[M] * dt)))
            elif used is None:
                residuals.append(float("nan"))
            elif used is ProxScheme.CRANK_NICOLSON:
                residuals.append(implicit_residual(problem, ProxScheme.CRANK_NICOLSON, dt,
                                                   t_next, h_next, history, f_prev=f_prev))
            else:
                residuals.append(implicit_residual(problem, scheme, dt, t_next, h_next,
                                                   history))
        last_scheme_used.append(used.value if used is not None else "cn-refined")
        history.push(t_next, h_next)
        h = h_next
        states[k + 1] = h

    energy = None
    if problem.potential is not None:
        energy = np.array([problem.potential(t, x) for t, x in zip(times, states)])
    return SolveResult(times.copy(), states, rhs.count, inner_iters, residuals, energy,
                       accepted_steps=n, flagged_steps=flagged,
                       status="ok" if not flagged else "flagged",
                       info={"scheme": scheme.value, "step_kinds": last_scheme_used,
                             "backend": backend})
