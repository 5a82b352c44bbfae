"""Exact min-max against the guaranteed cost controller.

For small horizons the worst case over ||Delta|| <= 1 can be computed
exactly: because stage costs and dynamics are affine in Delta along each
branch, the maximum over the unit ball is attained at vertex sequences, so
enumerating a scenario tree with one branch per sign pattern and solving a
single epigraph program gives the true min-max value gamma.  That is the
yardstick the fast controller is measured against: its certified bound must
sit above gamma (it is a bound, bought cheaply), and its first input should
not be far from the exact one.  The tree has B^N leaves, so the exact route
dies quickly as N grows -- which is the point of having the other one.

Run:  python3 demos/05_minmax_comparison.py
"""

import time

import numpy as np

from gcmpc import build_from_problem, build_scenario_tree, solve_minmax
from gcmpc.ermpc import TreeTooLarge
from gcmpc.reference import reference_problem

prob = reference_problem()
usys, weights, constraints = prob.usys, prob.weights, prob.constraints
x0 = prob.x0

# ------------------------------------------------------------ tree growth
print("scenario tree size (branching %d):" % 2 ** (usys.p * usys.l))
for N in (2, 4, 6, 10, 14, 18, 21):
    try:
        tree = build_scenario_tree(usys.uncertainty, N)
        print("  N=%2d  %10d nodes (%d leaves)" % (N, tree.n_nodes, tree.n_leaves))
    except TreeTooLarge as exc:
        print("  N=%2d  refused: %d nodes exceeds the %d-node budget"
              % (N, exc.n_nodes, 1_000_000))

# --------------------------------------------------------------- N = 10
N = prob.N
t0 = time.perf_counter()
mm = solve_minmax(usys, weights, constraints, x0, N=N)
t_mm = time.perf_counter() - t0

ctrl = build_from_problem(prob)
t0 = time.perf_counter()
plan = ctrl.plan(x0)
t_plan = time.perf_counter() - t0

print("\nhorizon N = %d from x0 = %s:" % (N, np.array2string(x0, precision=2)))
print("  exact min-max  gamma = %.6f   u0 = %s   (%.1f s, %d-node tree)"
      % (mm.gamma, np.array2string(mm.u0, precision=4), t_mm, mm.tree.n_nodes))
print("  certified bound      = %.6f   u0 = %s   (%.2f s)"
      % (plan.bound, np.array2string(plan.u0, precision=4), t_plan))
print("  bound / gamma = %.3f  -- conservatism paid for polynomial scaling"
      % (plan.bound / mm.gamma))
print("  ||u0 gap||    = %.4f" % np.linalg.norm(plan.u0 - mm.u0))

# The certified bound caps the worst case over an infinite horizon, gamma
# only over N steps, so bound >= gamma necessarily.
assert plan.bound >= mm.gamma - 1e-9
