"""Function evaluations needed to reach error 1e-5 on the diffusion problem.

Adaptive explicit solvers are pinned to their stability limit by the stiff
modes, so tightening their tolerance barely changes the cost. Proximal
backward Euler takes large steps and pays only for the inner iterations.
"""

from proxode.harness import SolverSpec, make_benchmark, run_one

bench = make_benchmark("diffusion", n=128)
print(f"{'solver':<10}{'param':>10}{'error':>12}{'nfe':>10}")
for s in (0.2, 0.1, 0.05):
    row, _ = run_one(bench, SolverSpec("be", "fr", inner_tol=1e-8), s)
    print(f"{'prox-be':<10}{s:>10g}{row.final_error:>12.3e}{row.nfe:>10}")
for method in ("heun", "dopri5"):
    for tol in (1e-4, 1e-5, 1e-6):
        row, _ = run_one(bench, SolverSpec(method), tol)
        print(f"{method:<10}{tol:>10g}{row.final_error:>12.3e}{row.nfe:>10}")
