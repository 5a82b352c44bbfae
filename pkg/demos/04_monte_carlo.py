"""Monte-Carlo validation of the certified bound and the tightened rows.

Two experiments on the benchmark plant, both driven by randomized admissible
contractions ||Delta|| <= 1:

  1. plan rollouts -- apply one robust plan with the ancillary feedback
     u = -K x + v under 500 disturbance realizations, then check that the
     realized cost stays below the certified bound and that the state box
     rows hold at every stage ("interval" sampling plus the adversarial
     "boundary-worst" mode that aligns each Delta with the current loop
     signal);
  2. closed-loop runs -- re-plan at every step for 10 runs and report the
     accumulated stage cost and planning times.

Run:  python3 demos/04_monte_carlo.py
"""

import numpy as np

from gcmpc import SimConfig, build_from_problem, check_cost_bound, run_closed_loop, run_plan_rollout
from gcmpc.reference import reference_problem

prob = reference_problem()
ctrl = build_from_problem(prob)
usys, weights = prob.usys, prob.weights
x0 = prob.x0

plan = ctrl.plan(x0)
print("certified bound from x0 = %s: %.6f" % (np.array2string(x0, precision=2), plan.bound))

# --------------------------------------------------- 1) plan rollouts
for mode in ("interval", "boundary-worst"):
    margins = []
    worst_box = -np.inf
    for seed in range(500):
        cfg = SimConfig(steps=ctrl.N, mode=mode, seed=seed)
        trace = run_plan_rollout(usys, ctrl.gcc.K, plan, cfg, weights=weights)
        margins.append(check_cost_bound(trace, ctrl.gcc.S, ctrl.gcc.Rbar, plan))
        # stage-wise box rows A x + c <= 0 on the realized states
        vals = prob.constraints.A @ trace.states[: ctrl.N].T + prob.constraints.c[:, None]
        worst_box = max(worst_box, float(vals.max()))
    margins = np.asarray(margins)
    print("\nmode=%-14s margin = bound - realized cost over 500 rollouts:" % mode)
    print("  min %.4f   median %.4f   max %.4f   (all positive: %s)"
          % (margins.min(), np.median(margins), margins.max(), bool((margins > 0).all())))
    print("  worst realized box-row value: %.3e (feasible iff <= 0)" % worst_box)

# --------------------------------------------------- 2) closed-loop
costs, times = [], []
for seed in range(10):
    cfg = SimConfig(steps=prob.sim_steps, mode="interval", seed=seed)
    trace = run_closed_loop(ctrl, usys, x0, cfg)
    assert trace.halted is None
    costs.append(trace.total_stage_cost)
    times.extend(trace.solve_seconds)
costs = np.asarray(costs)
times = 1e3 * np.asarray(times)
print("\nclosed loop, %d steps x 10 runs (re-planning every step):" % prob.sim_steps)
print("  accumulated stage cost: min %.4f  median %.4f  max %.4f"
      % (costs.min(), np.median(costs), costs.max()))
print("  plan time per step [ms]: median %.1f  p90 %.1f  max %.1f"
      % (np.median(times), np.percentile(times, 90), times.max()))
print("  (the deep-horizon rows stay active even near the origin -- the"
      "\n   amplification table keeps them binding -- so every step pays"
      "\n   for a full cone solve)")
