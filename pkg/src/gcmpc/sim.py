"""Closed-loop simulation, cost-bound checks, and solve-time benchmarks.

A policy is anything with  act(x, k) -> (u, seconds);  both controllers
in this package satisfy that protocol.  The simulator draws one
admissible contraction per step, applies the perturbed dynamics, and
records the realized matched disturbance  w = Delta (E1 x + E2 u)  so
tube bounds can be audited after the fact.

Two rollout drivers cover the two claims worth testing: run_closed_loop
replans at every measured state (receding horizon), while
run_plan_rollout freezes one plan and executes u = -K x + v_k against
the disturbed state, which is the loop the plan's cost bound and
constraint tightening actually speak about.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .controller import RobustInfeasible
from .ermpc import MinMaxInfeasible
from .model import step_uncertain

__all__ = [
    "SimConfig",
    "SimTrace",
    "BenchReport",
    "sample_disturbance",
    "sample_contraction",
    "run_closed_loop",
    "run_plan_rollout",
    "check_cost_bound",
    "benchmark",
    "trace_to_csv",
    "bench_to_csv",
]

_MODES = ("interval", "sphere", "boundary-worst")
# long-form spellings accepted on input, normalized to the short names
_MODE_ALIASES = {"uniform-interval": "interval", "unit-sphere": "sphere"}


def _canonical_mode(mode):
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in _MODES:
        raise ValueError("mode must be one of %s" % (_MODES,))
    return mode


@dataclass(frozen=True)
class SimConfig:
    steps: int = 20
    mode: str = "interval"
    seed: int = 0
    controller: str = ""   # free-form id, carried into exported traces

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        object.__setattr__(self, "mode", _canonical_mode(self.mode))


def sample_disturbance(mode, p, l, rng, direction=None):
    """Draw one admissible p-by-l contraction (spectral norm <= 1).

    "interval" samples entries uniformly on [-1, 1] and rescales into
    the spectral ball when needed; "sphere" returns a generic boundary
    point (norm exactly 1); "boundary-worst" returns a rank-one boundary
    contraction whose right factor aligns with `direction` when given
    (the matched-signal direction), otherwise a random one.
    """
    mode = _canonical_mode(mode)
    if mode == "interval":
        D = rng.uniform(-1.0, 1.0, size=(p, l))
        s = np.linalg.norm(D, 2) if D.size else 0.0
        if s > 1.0:
            D = D / s
        return D
    if mode == "sphere":
        D = rng.standard_normal((p, l))
        s = np.linalg.norm(D, 2) if D.size else 0.0
        return D / s if s > 0.0 else D
    if direction is not None:
        direction = np.asarray(direction, dtype=float)
        ns = np.linalg.norm(direction)
        right = direction / ns if ns > 0.0 else _unit(rng, l)
    else:
        right = _unit(rng, l)
    return np.outer(_unit(rng, p), right)


def sample_contraction(rng, usys, x, u, mode="interval"):
    """State-aware wrapper: aligns the boundary-worst mode with the
    matched signal E1 x + E2 u of the current step."""
    direction = None
    if _canonical_mode(mode) == "boundary-worst":
        direction = usys.E1 @ np.asarray(x, dtype=float) \
            + usys.E2 @ np.asarray(u, dtype=float)
    return sample_disturbance(mode, usys.p, usys.l, rng, direction=direction)


def _unit(rng, k):
    v = rng.standard_normal(k)
    nv = np.linalg.norm(v)
    while nv == 0.0:  # pragma: no cover
        v = rng.standard_normal(k)
        nv = np.linalg.norm(v)
    return v / nv


@dataclass(frozen=True)
class SimTrace:
    """One closed-loop rollout.  ws[k] = Delta_k (E1 x_k + E2 u_k).

    stage_costs[k] = x_k'Q x_k + u_k'R u_k when the driver knew the
    weights, NaN otherwise.  halted carries a message when the run was
    cut short (controller infeasibility); the arrays then cover only the
    completed steps.
    """

    states: np.ndarray         # (T+1, n)
    inputs: np.ndarray         # (T, m)
    deltas: np.ndarray         # (T, p, l)
    ws: np.ndarray             # (T, l)
    stage_costs: np.ndarray    # (T,)
    solve_seconds: np.ndarray  # (T,)
    halted: str = None

    @property
    def horizon(self):
        return self.inputs.shape[0]

    @property
    def total_stage_cost(self):
        return float(self.stage_costs.sum())

    def realized_cost(self, weights, steps=None, terminal=None):
        """Accumulated quadratic cost over the first `steps` stages plus a
        terminal term on the state reached (terminal defaults to P_N)."""
        T = self.horizon if steps is None else int(steps)
        if not 1 <= T <= self.horizon:
            raise ValueError("steps must be in 1..%d" % self.horizon)
        W = weights.P_N if terminal is None else terminal
        total = 0.0
        for k in range(T):
            total += self.states[k] @ weights.Q @ self.states[k]
            total += self.inputs[k] @ weights.R @ self.inputs[k]
        total += self.states[T] @ W @ self.states[T]
        return float(total)


def _stage_cost(weights, x, u):
    if weights is None:
        return np.nan
    return float(x @ weights.Q @ x + u @ weights.R @ u)


def _trace(xs, us, Ds, ws, costs, secs, upto, halted):
    return SimTrace(states=xs[: upto + 1].copy(), inputs=us[:upto].copy(),
                    deltas=Ds[:upto].copy(), ws=ws[:upto].copy(),
                    stage_costs=costs[:upto].copy(),
                    solve_seconds=secs[:upto].copy(), halted=halted)


def run_closed_loop(policy, usys, x0, config):
    """Roll the receding-horizon loop under randomly drawn contractions.

    The policy is queried with the measured (disturbed) state each step.
    If it declares the state infeasible the run halts and the partial
    trace records the failure.  Stage costs are filled when the policy
    exposes a `weights` attribute.
    """
    rng = np.random.default_rng(config.seed)
    n, m, T = usys.n, usys.m, config.steps
    weights = getattr(policy, "weights", None)
    xs = np.empty((T + 1, n))
    us = np.empty((T, m))
    Ds = np.empty((T, usys.p, usys.l))
    ws = np.empty((T, usys.l))
    costs = np.empty(T)
    secs = np.empty(T)

    xs[0] = np.asarray(x0, dtype=float)
    for k in range(T):
        try:
            u, s = policy.act(xs[k], k)
        except (RobustInfeasible, MinMaxInfeasible) as exc:
            return _trace(xs, us, Ds, ws, costs, secs, k,
                          "infeasible at step %d: %s" % (k, exc))
        D = sample_contraction(rng, usys, xs[k], u, mode=config.mode)
        xs[k + 1] = step_uncertain(usys, D, xs[k], u)
        us[k], Ds[k], secs[k] = u, D, s
        ws[k] = D @ (usys.E1 @ xs[k] + usys.E2 @ u)
        costs[k] = _stage_cost(weights, xs[k], u)
    return _trace(xs, us, Ds, ws, costs, secs, T, None)


def run_plan_rollout(usys, K, plan, config, weights=None):
    """Execute one frozen plan against the disturbed dynamics.

    The loop applies u_k = -K x_k + v_k to the realized state x_k (v is
    never recomputed), which is exactly the control law whose cost the
    plan bound certifies and whose constraint satisfaction the
    tightening is meant to cover.  Runs min(config.steps, len(v)) steps.
    """
    rng = np.random.default_rng(config.seed)
    v = plan.v
    T = min(config.steps, v.shape[0])
    n, m = usys.n, usys.m
    xs = np.empty((T + 1, n))
    us = np.empty((T, m))
    Ds = np.empty((T, usys.p, usys.l))
    ws = np.empty((T, usys.l))
    costs = np.empty(T)
    secs = np.zeros(T)

    xs[0] = plan.xnom[0]
    for k in range(T):
        u = v[k] - K @ xs[k]
        D = sample_contraction(rng, usys, xs[k], u, mode=config.mode)
        xs[k + 1] = step_uncertain(usys, D, xs[k], u)
        us[k], Ds[k] = u, D
        ws[k] = D @ (usys.E1 @ xs[k] + usys.E2 @ u)
        costs[k] = _stage_cost(weights, xs[k], u)
    return _trace(xs, us, Ds, ws, costs, secs, T, None)


def check_cost_bound(trace, S, Rbar, plan):
    """Margin of the plan's certified bound over the realized cost.

    Realized cost is the quadratic total over the plan horizon with S as
    the terminal weight; the bound is x0'S x0 + sum_k v_k' Rbar v_k.
    Positive margin means the guarantee held.  Requires a trace at least
    as long as the plan and with recorded stage costs.
    """
    N = plan.v.shape[0]
    if trace.horizon < N:
        raise ValueError("trace covers %d steps, plan needs %d"
                         % (trace.horizon, N))
    costs = trace.stage_costs[:N]
    if np.isnan(costs).any():
        raise ValueError("trace carries no stage costs; rerun with weights")
    realized = float(costs.sum() + trace.states[N] @ S @ trace.states[N])
    x0 = trace.states[0]
    bound = float(x0 @ S @ x0 + np.einsum("ki,ij,kj->", plan.v, Rbar, plan.v))
    return bound - realized


@dataclass(frozen=True)
class BenchReport:
    """Per-policy solve-time samples over a shared batch of states."""

    labels: tuple
    seconds: dict       # label -> (n,) array
    skipped: dict       # label -> count of infeasible states

    def stats(self, label):
        s = self.seconds[label]
        return {
            "n": int(s.size),
            "min": float(s.min()),
            "q1": float(np.percentile(s, 25)),
            "median": float(np.percentile(s, 50)),
            "q3": float(np.percentile(s, 75)),
            "max": float(s.max()),
        }

    def summary(self):
        lines = []
        for label in self.labels:
            st = self.stats(label)
            lines.append(
                "%s: n=%d skipped=%d  min %.4fs  q1 %.4fs  median %.4fs"
                "  q3 %.4fs  max %.4fs"
                % (label, st["n"], self.skipped[label], st["min"], st["q1"],
                   st["median"], st["q3"], st["max"]))
        return "\n".join(lines)


def benchmark(controllers, sampler, n_runs):
    """Time one plan-solve per state per controller on a shared batch.

    controllers maps label -> policy (dict or (label, policy) pairs);
    sampler() draws one state.  Infeasible states are skipped and
    counted per controller.
    """
    if n_runs < 10:
        raise ValueError("n_runs must be at least 10")
    if isinstance(controllers, dict):
        pairs = list(controllers.items())
    else:
        pairs = list(controllers)
    states = [np.asarray(sampler(), dtype=float) for _ in range(n_runs)]

    seconds = {}
    skipped = {}
    for label, policy in pairs:
        vals = []
        miss = 0
        for x in states:
            try:
                _, s = policy.act(x, 0)
            except (RobustInfeasible, MinMaxInfeasible):
                miss += 1
                continue
            vals.append(s)
        seconds[label] = np.array(vals)
        skipped[label] = miss
    return BenchReport(labels=tuple(label for label, _ in pairs),
                       seconds=seconds, skipped=skipped)


def trace_to_csv(trace, path):
    """Write a rollout as CSV; floats use repr so reloads are bit-exact."""
    n = trace.states.shape[1]
    m = trace.inputs.shape[1]
    l = trace.ws.shape[1]
    header = (["k"] + ["x%d" % i for i in range(n)] + ["u%d" % j for j in range(m)]
              + ["w%d" % i for i in range(l)] + ["stage_cost", "solve_seconds"])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(trace.horizon):
            row = ([str(k)] + [repr(float(v)) for v in trace.states[k]]
                   + [repr(float(v)) for v in trace.inputs[k]]
                   + [repr(float(v)) for v in trace.ws[k]]
                   + [repr(float(trace.stage_costs[k])),
                      repr(float(trace.solve_seconds[k]))])
            wr.writerow(row)
        wr.writerow([str(trace.horizon)]
                    + [repr(float(v)) for v in trace.states[-1]]
                    + [""] * (m + l + 2))


def bench_to_csv(report, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["label", "index", "seconds"])
        for label in report.labels:
            for i, s in enumerate(report.seconds[label]):
                wr.writerow([label, str(i), repr(float(s))])
