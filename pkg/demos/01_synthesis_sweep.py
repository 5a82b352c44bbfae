"""Sweep the scaling parameter of the guaranteed cost synthesis.

The stationary synthesis only exists for eps inside an open interval whose
upper end is pinned by the spectral condition eps * ||H' S H|| < 1.  This
script locates that interval for the built-in benchmark plant, sweeps eps
across it, and shows how the certified cost x0' S x0 and trace(S) move --
both blow up at the ends and have a flat minimum in between, which is what
the automatic selection returns.

Run:  python3 demos/01_synthesis_sweep.py
"""

import numpy as np

from gcmpc import gcc_epsilon_interval, gcc_select_epsilon, gcc_solve_infinite
from gcmpc.reference import reference_problem

prob = reference_problem()
usys, weights = prob.usys, prob.weights
x0 = prob.x0

print("plant: n=%d states, m=%d inputs, uncertainty H is %s" % (
    usys.n, usys.m, usys.H.shape))

# ---------------------------------------------------------------- interval
interval = gcc_epsilon_interval(usys, weights)
print("\nfeasible eps interval: (%.6f, %.6f]  (%d probes)"
      % (interval.lo, interval.hi, interval.probes))

# The upper endpoint is where eps ||H' S H|| reaches one; check that the
# stationary S at a point just inside agrees with that reading.
sol_hi = gcc_solve_infinite(usys, weights, 0.98 * interval.hi)
hsh = np.linalg.norm(sol_hi.eps * usys.H.T @ sol_hi.S @ usys.H, 2)
print("eps ||H'SH|| at 0.98*hi: %.4f (approaches 1 at the endpoint)" % hsh)

# ------------------------------------------------------------------- sweep
print("\n%8s  %12s  %12s  %6s" % ("eps", "trace(S)", "x0'Sx0", "iters"))
for frac in (0.05, 0.15, 0.3, 0.5, 0.7, 0.82, 0.9, 0.96, 0.995):
    eps = interval.lo + frac * (interval.hi - interval.lo)
    sol = gcc_solve_infinite(usys, weights, eps)
    print("%8.5f  %12.4f  %12.4f  %6d"
          % (eps, np.trace(sol.S), x0 @ sol.S @ x0, sol.iterations))

# --------------------------------------------------------------- selection
eps_tr, sol_tr = gcc_select_epsilon(usys, weights, criterion="trace")
eps_x0, sol_x0 = gcc_select_epsilon(usys, weights, criterion="state", x0=x0)
print("\nselected eps (trace criterion): %.5f  trace(S) = %.4f"
      % (eps_tr, np.trace(sol_tr.S)))
print("selected eps (state criterion): %.5f  x0'Sx0  = %.4f"
      % (eps_x0, x0 @ sol_x0.S @ x0))

print("\nstationary gain K at the trace optimum:")
print(np.array2string(sol_tr.K, precision=4, suppress_small=True))
