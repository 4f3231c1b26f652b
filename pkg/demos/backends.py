"""Three ways to solve the same backward Euler step.

Proximal FR needs only rhs evaluations, fixed-point iteration needs a tiny
step to contract, and Newton factors a dense Jacobian whose cost grows
faster than the grid size.
"""

from proxode.harness import compare_implicit_backends

cmp = compare_implicit_backends((32, 64, 128, 256, 512), s=2e-7, steps=20, tol=1e-10)
print(f"{'N':>5}{'backend':>10}{'time ms':>10}{'nfe':>8}{'iters':>8}")
for r in cmp.report.rows:
    print(f"{int(r.param):>5}{r.solver:>10}{r.wall_time_ns / 1e6:>10.2f}{r.nfe:>8}"
          f"{r.inner_iter_total:>8}")
print()
for n, gap in cmp.max_disagreement.items():
    print(f"N={n}: largest disagreement between backends {gap:.2e}")
