"""Command-line interface.

Subcommands
-----------
synth            synthesize the stationary guaranteed-cost design
plan             solve one robust plan from an initial state
simulate         closed-loop rollout under sampled contractions
compare          guaranteed-cost bound vs exact min-max at one state
bench            solve-time comparison over random initial states
reproduce-paper  rebuild the reference problem and check tabulated values

Exit codes: 0 success, 1 infeasible (or reference mismatch), 2 bad input,
3 solver breakdown.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .controller import PlanSolveError, RobustInfeasible, build_controller
from .ermpc import ErmpcController, MinMaxInfeasible, TreeTooLarge, solve_minmax
from .problemfile import ProblemFormatError, build_from_problem, load_problem
from .riccati import (GccInfeasible, GccNoConvergence, NoFeasibleEpsilon,
                      gcc_epsilon_interval, gcc_select_epsilon,
                      gcc_solve_infinite, verify_gcc)
from .sim import (SimConfig, benchmark, check_cost_bound, run_closed_loop,
                  run_plan_rollout, trace_to_csv)
from .tightening import UncontrollablePair

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_INFEASIBLE = 1
_EXIT_BAD_INPUT = 2
_EXIT_SOLVER = 3


def _mat(M):
    return np.array2string(np.asarray(M), precision=6, suppress_small=True)


def _parse_state(text, n):
    try:
        x0 = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise ValueError("cannot parse --state %r" % text)
    if x0.shape != (n,):
        raise ValueError("--state has %d entries, expected %d" % (x0.size, n))
    return x0


def _pick_state(args, prob):
    if getattr(args, "state", None) is not None:
        return _parse_state(args.state, prob.usys.n)
    if prob.x0 is not None:
        return prob.x0
    raise ValueError("no initial state: give --state or an x0 entry in the problem file")


def _add_common(p, state=False):
    p.add_argument("--problem", required=True, help="problem definition file")
    p.add_argument("--epsilon", type=float, default=None,
                   help="guaranteed-cost parameter (overrides the file)")
    p.add_argument("--horizon", type=int, default=None,
                   help="planning horizon N (overrides the file)")
    p.add_argument("--tube", choices=("deadbeat", "gcc", "file"), default=None,
                   help="tube gain: deadbeat, reuse the planning feedback, "
                        "or the file's Ktilde")
    p.add_argument("--rho-variant", choices=("e1", "e1tilde"), default=None,
                   help="disturbance-gain channel used by the tightening")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    if state:
        p.add_argument("--state", default=None, help="initial state, e.g. '1,1,1'")


def _controller(args, prob):
    return build_from_problem(prob, eps=args.epsilon, N=args.horizon,
                              tube=args.tube, rho_variant=args.rho_variant,
                              tol=args.tol, max_iter=args.max_iter)


def cmd_synth(args):
    prob = load_problem(args.problem)
    usys, weights = prob.usys, prob.weights
    interval = gcc_epsilon_interval(usys, weights)
    print("feasible eps interval: (%.6g, %.6g)   [%d probes]"
          % (interval.lo, interval.hi, interval.probes))

    eps = args.epsilon if args.epsilon is not None else prob.eps
    if eps is not None:
        gcc = gcc_solve_infinite(usys, weights, eps)
    else:
        _, gcc = gcc_select_epsilon(usys, weights, criterion=args.select,
                                    x0=prob.x0, interval=interval)
        print("selected eps by %r criterion" % args.select)
    print("eps = %.6g   (fixed point in %d iterations)" % (gcc.eps, gcc.iterations))
    print("S =\n%s" % _mat(gcc.S))
    print("K =\n%s" % _mat(gcc.K))
    print("Rbar =\n%s" % _mat(gcc.Rbar))

    check = verify_gcc(usys, weights, gcc, n_samples=args.verify_samples)
    print("certificate check over %d sampled contractions: %s "
          "(worst slack eigenvalue %.3e, band %.3e)"
          % (check.n_samples, "ok" if check.passed else "VIOLATED",
             check.worst_slack, check.band))
    return _EXIT_OK if check.passed else _EXIT_SOLVER


def cmd_plan(args):
    prob = load_problem(args.problem)
    ctrl = _controller(args, prob)
    x0 = _pick_state(args, prob)
    plan = ctrl.plan(x0)
    print("x0 = %s" % _mat(x0))
    print("guaranteed cost bound: %.10g" % plan.bound)
    print("u0 = %s" % _mat(plan.u0))
    print("v =\n%s" % _mat(plan.v))
    d = plan.diagnostics
    print("solver: %s in %d iterations, %d cone atoms, %.1f ms"
          % (d["status"], d["iterations"], d["n_atoms"], 1e3 * d["plan_seconds"]))
    return _EXIT_OK


def cmd_simulate(args):
    prob = load_problem(args.problem)
    ctrl = _controller(args, prob)
    x0 = _pick_state(args, prob)
    cfg = SimConfig(
        steps=args.steps if args.steps is not None else prob.sim_steps,
        mode=args.mode if args.mode is not None else prob.sim_mode,
        seed=args.seed if args.seed is not None else prob.sim_seed,
    )
    first = ctrl.plan(x0)
    trace = run_closed_loop(ctrl, prob.usys, x0, cfg)
    if args.trace_out:
        trace_to_csv(trace, args.trace_out)
        print("trace written to %s" % args.trace_out)

    print("steps = %d, mode = %s, seed = %d" % (cfg.steps, cfg.mode, cfg.seed))
    print("guaranteed bound at x0: %.10g" % first.bound)
    if trace.halted is not None:
        print("run halted after %d steps: %s" % (trace.horizon, trace.halted))
        return _EXIT_INFEASIBLE
    margin = None
    if trace.horizon >= ctrl.N:
        margin = check_cost_bound(trace, ctrl.gcc.S, ctrl.gcc.Rbar, first)
        print("bound minus realized %d-step cost (terminal weight S): %.3e   %s"
              % (ctrl.N, margin, "ok" if margin > 0 else "VIOLATED"))
    else:
        print("trace shorter than the planning horizon; cost-bound check skipped")
    viol = max(
        float((prob.constraints.A @ trace.states[k] + prob.constraints.B @ trace.inputs[k]
               + prob.constraints.c).max())
        for k in range(trace.horizon)
    )
    print("worst stage-constraint value along the run: %.3e" % viol)
    return _EXIT_OK if (margin is None or margin > 0) else _EXIT_SOLVER


def cmd_compare(args):
    prob = load_problem(args.problem)
    ctrl = _controller(args, prob)
    x0 = _pick_state(args, prob)
    plan = ctrl.plan(x0)
    print("guaranteed-cost controller: bound %.8g, u0 %s, %.1f ms"
          % (plan.bound, _mat(plan.u0), 1e3 * plan.diagnostics["plan_seconds"]))
    N = args.horizon if args.horizon is not None else prob.N
    mm = solve_minmax(prob.usys, prob.weights, prob.constraints, x0, N=N,
                      tol=args.tol, max_iter=args.max_iter)
    print("min-max over vertex tree:   gamma %.8g, u0 %s, %.1f ms (%d nodes)"
          % (mm.gamma, _mat(mm.u0), 1e3 * mm.diagnostics["solve_seconds"],
             mm.diagnostics["n_nodes"]))
    print("bound / gamma = %.4f" % (plan.bound / mm.gamma))
    return _EXIT_OK


def cmd_bench(args):
    prob = load_problem(args.problem)
    ctrl = _controller(args, prob)
    N = args.horizon if args.horizon is not None else prob.N
    other = ErmpcController(prob.usys, prob.weights, prob.constraints, N,
                            tol=args.tol, max_iter=args.max_iter)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    sampler = lambda: rng.uniform(-args.radius, args.radius, size=prob.usys.n)
    report = benchmark({"guaranteed-cost": ctrl, "min-max tree": other},
                       sampler, args.states)
    print(report.summary())
    fast = report.stats("guaranteed-cost")["median"]
    slow = report.stats("min-max tree")["median"]
    print("median speedup: %.1fx" % (slow / fast))
    return _EXIT_OK


def cmd_reproduce(args):
    from .reference import (EPS_INTERVAL_HI_REF, EPS_REF, K_REF, KTILDE_REF,
                            N_REF, RBAR_REF, S_REF, X0_REF, reference_system)
    from .tightening import deadbeat_gain

    usys, weights, constraints = reference_system()
    failures = []

    def check(name, got, want, rel):
        err = np.abs(np.asarray(got) - np.asarray(want)).max()
        scale = np.abs(np.asarray(want)).max()
        ok = err <= rel * scale
        print("  %-28s max err %.3e (tol %.1e rel)  %s"
              % (name, err, rel, "ok" if ok else "MISMATCH"))
        if not ok:
            failures.append(name)

    print("eps feasibility interval:")
    interval = gcc_epsilon_interval(usys, weights)
    print("  computed (%.6g, %.6g), tabulated upper endpoint %.4g"
          % (interval.lo, interval.hi, EPS_INTERVAL_HI_REF))
    if abs(interval.hi - EPS_INTERVAL_HI_REF) > 5e-4:
        failures.append("eps interval")

    print("stationary design at eps = %.4g:" % EPS_REF)
    gcc = gcc_solve_infinite(usys, weights, EPS_REF)
    check("S", gcc.S, S_REF, 1e-2)
    check("K", gcc.K, K_REF, 1e-2)
    check("Rbar", gcc.Rbar, RBAR_REF, 1e-2)

    tube = deadbeat_gain(usys.nominal)
    check("deadbeat Ktilde", tube.Ktilde, KTILDE_REF, 1e-6)

    ctrl = build_controller(usys, weights, constraints, N_REF, eps=EPS_REF)
    plan = ctrl.plan(X0_REF)
    print("robust plan from x0 = %s:" % _mat(X0_REF))
    print("  bound %.8g, %d cone atoms, u0 %s"
          % (plan.bound, plan.diagnostics["n_atoms"], _mat(plan.u0)))

    trace = run_plan_rollout(usys, ctrl.gcc.K, plan,
                             SimConfig(steps=N_REF, seed=1), weights=weights)
    margin = check_cost_bound(trace, ctrl.gcc.S, ctrl.gcc.Rbar, plan)
    print("  sampled rollout: bound minus realized cost %.6g  %s"
          % (margin, "ok" if margin > 0 else "VIOLATED"))
    if not margin > 0:
        failures.append("cost bound")

    if not args.skip_minmax:
        mm = solve_minmax(usys, weights, constraints, X0_REF, N=N_REF)
        print("min-max cross-check: gamma %.8g (bound/gamma %.3f), %.2fs"
              % (mm.gamma, plan.bound / mm.gamma, mm.diagnostics["solve_seconds"]))

    if failures:
        print("MISMATCHES: %s" % ", ".join(failures))
        return _EXIT_INFEASIBLE
    print("all tabulated values reproduced")
    return _EXIT_OK


def _build_parser():
    ap = argparse.ArgumentParser(prog="gcmpc",
                                 description="guaranteed-cost robust MPC toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="stationary guaranteed-cost synthesis")
    _add_common(p)
    p.add_argument("--select", choices=("trace", "state"), default="trace",
                   help="eps selection criterion when no eps is given")
    p.add_argument("--verify-samples", type=int, default=1000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plan", help="solve one robust plan")
    _add_common(p, state=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="closed-loop rollout")
    _add_common(p, state=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("interval", "sphere", "boundary-worst"),
                   default=None)
    p.add_argument("--trace-out", default=None, help="write the rollout as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="bound vs exact min-max at one state")
    _add_common(p, state=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="solve-time comparison")
    _add_common(p)
    p.add_argument("--states", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=float, default=0.5,
                   help="states drawn uniformly with ||x||_inf <= radius")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reproduce-paper",
                       help="rebuild the reference problem, check known values")
    p.add_argument("--skip-minmax", action="store_true",
                   help="skip the (slow) min-max cross-check")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None):
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFormatError, FileNotFoundError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return _EXIT_BAD_INPUT
    except (GccInfeasible, NoFeasibleEpsilon, RobustInfeasible, MinMaxInfeasible,
            UncontrollablePair, TreeTooLarge) as exc:
        print("infeasible: %s" % exc, file=sys.stderr)
        return _EXIT_INFEASIBLE
    except (PlanSolveError, GccNoConvergence, RuntimeError) as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return _EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
