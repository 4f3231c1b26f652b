"""Benchmark problems, exact solutions and convergence-order estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ConfigError, OdeProblem, l2_norm

DEFAULT_SEED = 42
ORDER_ERROR_FLOOR = 1e-13


@dataclass
class BenchmarkProblem:
    name: str
    problem: OdeProblem
    t0: float
    T: float
    default_init: np.ndarray
    stiff: bool
    lipschitz: float = math.nan

    def exact_final(self):
        return self.problem.exact(self.T)


def make_scalar_benchmark() -> BenchmarkProblem:
    """``h' = 3h - 2 cos t - 4 sin t``, ``h(0) = 1``, exact ``cos t + sin t``.

    The frozen-time potential ``F(z, t) = -1.5 z^2 + (2 cos t + 4 sin t) z``
    is nonconvex.
    """

    def rhs(t, h):
        return 3.0 * h - 2.0 * math.cos(t) - 4.0 * math.sin(t)

    def potential(t, h):
        z = float(np.ravel(h)[0])
        return -1.5 * z * z + (2.0 * math.cos(t) + 4.0 * math.sin(t)) * z

    def jacobian(t, h):
        return np.array([[3.0]])

    def exact(t):
        return np.array([math.cos(t) + math.sin(t)])

    problem = OdeProblem(1, rhs, potential, jacobian, exact, params={"convex": False})
    return BenchmarkProblem("scalar", problem, 0.0, 1.0, np.array([1.0]), False, 3.0)


def cyclic_laplacian(n: int) -> np.ndarray:
    """Dense ``L = circulant(2, -1, 0, ..., 0, -1) / dx^2`` with ``dx = 1/(n-1)``."""
    dx = 1.0 / (n - 1)
    eye = np.eye(n)
    return (2.0 * eye - np.roll(eye, 1, axis=0) - np.roll(eye, -1, axis=0)) / dx ** 2


def laplacian_eigenvalues(n: int) -> np.ndarray:
    """``mu_j = (2 - 2 cos(2 pi j / n)) / dx^2`` for ``j = 0..n-1``."""
    dx = 1.0 / (n - 1)
    return (2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)) / dx ** 2


def exact_diffusion_solution(h0, t: float, n: int = None) -> np.ndarray:
    """Solve ``h' = -L h`` exactly by diagonalizing ``L`` with the DFT."""
    h0 = np.asarray(h0, dtype=float)
    if n is None:
        n = h0.size
    if h0.size != n:
        raise ConfigError(f"h0 has length {h0.size}, expected {n}")
    if t == 0:
        return h0.copy()
    out = np.fft.ifft(np.exp(-laplacian_eigenvalues(n) * t) * np.fft.fft(h0))
    residue = np.max(np.abs(out.imag)) if n else 0.0
    if residue > 1e-10 * max(1.0, np.max(np.abs(h0))):
        raise AssertionError(f"imaginary residue {residue:.3e} in DFT solution")
    return out.real


def make_diffusion_benchmark(n: int = 128, seed: int = DEFAULT_SEED,
                             init: str = "normal", T: float = 1.0) -> BenchmarkProblem:
    """Periodic 1D heat equation by central differences: ``h' = -L h``.

    ``init="normal"`` draws i.i.d. standard normal nodal values from
    ``numpy.random.default_rng(seed)``; ``init="gaussian-bump"`` uses
    ``exp(-50 (x - 0.5)^2)``.
    """
    if n < 3:
        raise ConfigError(f"diffusion grid needs n >= 3, got {n}")
    inv_dx2 = float((n - 1) ** 2)

    def apply_L(h):
        out = 2.0 * h
        out[1:] -= h[:-1]
        out[0] -= h[-1]
        out[:-1] -= h[1:]
        out[-1] -= h[0]
        out *= inv_dx2
        return out

    def rhs(t, h):
        return -apply_L(h)

    def potential(t, h):
        return 0.5 * float(np.dot(h, apply_L(h)))

    L = None

    def jacobian(t, h):
        nonlocal L
        if L is None:
            L = cyclic_laplacian(n)
        return -L

    if init == "normal":
        h0 = np.random.default_rng(seed).standard_normal(n)
    elif init == "gaussian-bump":
        x = np.linspace(0.0, 1.0, n)
        h0 = np.exp(-50.0 * (x - 0.5) ** 2)
    else:
        raise ConfigError(f"unknown diffusion init {init!r}")

    def exact(t):
        return exact_diffusion_solution(h0, t, n)

    problem = OdeProblem(n, rhs, potential, jacobian, exact,
                         params={"n": n, "seed": seed, "init": init, "convex": True})
    mu_max = float(laplacian_eigenvalues(n).max())
    return BenchmarkProblem(f"diffusion-{n}", problem, 0.0, float(T), h0, True, mu_max)


def make_linear_benchmark(lam: complex | float, h0=1.0, T: float = 1.0) -> BenchmarkProblem:
    """Scalar test equation ``h' = lam h`` (real ``lam``)."""
    lam = float(lam)

    def rhs(t, h):
        return lam * h

    problem = OdeProblem(1, rhs, lambda t, h: -0.5 * lam * float(np.dot(h, h)),
                         lambda t, h: np.array([[lam]]),
                         lambda t: np.array([h0 * math.exp(lam * t)]))
    return BenchmarkProblem(f"linear({lam:g})", problem, 0.0, T, np.array([float(h0)]),
                            abs(lam) > 1e3, abs(lam))


@dataclass
class OrderEstimate:
    order: float
    step_sizes: np.ndarray
    errors: np.ndarray
    unreliable: bool


def estimate_convergence_order(solver: Callable[[BenchmarkProblem, float], np.ndarray],
                               benchmark: BenchmarkProblem,
                               step_sizes: Sequence[float]) -> OrderEstimate:
    """Least-squares slope of ``log(final error)`` against ``log(s)``.

    ``solver(benchmark, s)`` returns the state at ``benchmark.T``. Step sizes
    must form a geometric progression of at least three values. Errors below
    ``1e-13`` mark the estimate unreliable.
    """
    s = np.asarray(step_sizes, dtype=float)
    if s.size < 3:
        raise ConfigError("need at least three step sizes")
    ratios = s[1:] / s[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ConfigError("step sizes must form a geometric progression")
    exact = benchmark.exact_final()
    errors = np.array([l2_norm(np.asarray(solver(benchmark, si)) - exact) for si in s])
    unreliable = bool(np.any(errors < ORDER_ERROR_FLOOR))
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        return OrderEstimate(math.nan, s, errors, True)
    slope = np.polyfit(np.log(s), np.log(errors), 1)[0]
    return OrderEstimate(float(slope), s, errors, unreliable)
