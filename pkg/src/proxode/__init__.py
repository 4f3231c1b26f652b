"""Proximal implicit ODE solvers, explicit baselines and benchmark harness."""

__version__ = "0.1.0"

from .core import (ConfigError, DivergenceError, InnerConvergenceError, InstrumentedRhs,
                   OdeProblem, SolveResult, SolverError, TimeGrid, make_uniform_grid,
                   validate_gradient_consistency)
from .inner import InnerConfig, Optimizer, ProxSchemeWeights, newton_solve, run_inner
from .schemes import (ORDER2_TABLEAU, ORDER3_TABLEAU, MultiStageTableau, ProxScheme,
                      solve, stable_eta)
from .explicit import AdaptiveConfig, adaptive_solve, fixed_step_solve
from .stability import (energy_monitor, in_stability_domain, rasterize_domain,
                        stiffness_ratio)
from .benchmarks import (estimate_convergence_order, exact_diffusion_solution,
                         make_diffusion_benchmark, make_linear_benchmark,
                         make_scalar_benchmark)
from .harness import (Report, SweepSpec, compare_implicit_backends, emit_report,
                      load_report, run_sweep)

__all__ = [
    "AdaptiveConfig", "ConfigError", "DivergenceError", "InnerConfig",
    "InnerConvergenceError", "InstrumentedRhs", "MultiStageTableau", "ORDER2_TABLEAU",
    "ORDER3_TABLEAU", "OdeProblem", "Optimizer", "ProxScheme", "ProxSchemeWeights",
    "Report", "SolveResult", "SolverError", "SweepSpec", "TimeGrid", "adaptive_solve",
    "compare_implicit_backends", "emit_report", "energy_monitor",
    "estimate_convergence_order", "exact_diffusion_solution", "fixed_step_solve",
    "in_stability_domain", "load_report", "make_diffusion_benchmark",
    "make_linear_benchmark", "make_scalar_benchmark", "make_uniform_grid",
    "newton_solve", "rasterize_domain", "run_inner", "run_sweep", "solve",
    "stable_eta", "stiffness_ratio", "validate_gradient_consistency",
]
