"""Receding-horizon controller with a guaranteed worst-case cost.

A plan at state x0 chooses perturbations v_k of the stationary feedback,
u_k = -K xbar_k + v_k, by minimizing the certified upper bound

    x0' S x0 + sum_k v_k' Rbar v_k

subject to the tightened stage constraints.  The bound dominates the
realized cost of every admissible uncertainty realization; v = 0 is the
unconstrained optimum, so the program only ever pays for constraint
clearance.

Decision variables are (v_0..v_{N-1}, xbar_1..xbar_{N-1}); the initial
state enters as data and xbar_N never appears (the terminal cost is
folded into S).  Each tightened row contributes one second-order-cone
atom per active phi weight, so the cone count of the assembled program
equals the number of nonzero tightening coefficients.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .conic import ConeAtom, ConeProgram, ConeRow, solve_cone
from .riccati import gcc_select_epsilon, gcc_solve_infinite
from .tightening import TubeGain, assemble_robust_constraints, build_tables, deadbeat_gain

__all__ = [
    "RobustInfeasible",
    "PlanSolveError",
    "PlanResult",
    "GcmpcController",
    "build_controller",
]

# a plan whose best iterate meets this looser bar is still returned
# (flagged in diagnostics) rather than raised as a solver failure
_LOOSE_METRIC = 1e-6


class RobustInfeasible(Exception):
    """No input sequence satisfies the tightened constraints from x0."""

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)
        super().__init__("robust plan infeasible from x0 = %s" % (self.x0,))


class PlanSolveError(Exception):
    """The embedded solver failed to produce a usable plan."""

    def __init__(self, status, diagnostics):
        self.status = status
        self.diagnostics = diagnostics
        super().__init__("plan solve failed: %s (%s)" % (status, diagnostics))


@dataclass(frozen=True)
class PlanResult:
    """One solved plan: v is the feedback perturbation sequence, xnom the
    nominal rollout (N+1 states), u0 the input to apply, u_plan the full
    nominal input sequence, and bound the certified worst-case cost."""

    v: np.ndarray
    xnom: np.ndarray
    u0: np.ndarray
    u_plan: np.ndarray
    bound: float
    diagnostics: dict


class GcmpcController:
    """Plans with a fixed synthesis (gcc solution + tightening tables).

    Use build_controller() to construct one from system data.
    """

    def __init__(self, sys, weights, constraints, gcc, robust, tol=1e-8,
                 max_iter=200):
        self.sys = sys
        self.weights = weights
        self.constraints = constraints
        self.gcc = gcc
        self.robust = robust
        self.tables = robust.tables
        self.tube = robust.tables.tube
        self.N = robust.N
        self.tol = tol
        self.max_iter = max_iter
        self._build_skeleton()

    # ---- static program pieces ------------------------------------------

    def _build_skeleton(self):
        usys, N = self.sys, self.N
        n, m, q = usys.n, usys.m, self.constraints.q
        K = self.gcc.K
        self._Acl = usys.F - usys.G @ K

        self.nz = N * m + (N - 1) * n
        self._vcol = lambda k: k * m
        self._xcol = lambda k: N * m + (k - 1) * n

        # objective: sum v'Rbar v  (constant x0'Sx0 added per solve)
        P = np.zeros((self.nz, self.nz))
        for k in range(N):
            c0 = self._vcol(k)
            P[c0 : c0 + m, c0 : c0 + m] = 2.0 * self.gcc.Rbar
        self._P = P

        # dynamics: xbar_{k+1} = Acl xbar_k + G v_k, k = 0..N-2
        ne = (N - 1) * n
        Aeq = np.zeros((ne, self.nz))
        for k in range(N - 1):
            r0 = k * n
            Aeq[r0 : r0 + n, self._xcol(k + 1) : self._xcol(k + 1) + n] = np.eye(n)
            Aeq[r0 : r0 + n, self._vcol(k) : self._vcol(k) + m] = -usys.G
            if k >= 1:
                Aeq[r0 : r0 + n, self._xcol(k) : self._xcol(k) + n] = -self._Acl
        self._Aeq = Aeq

        # stage 0 rows are purely linear in v_0
        b0 = self.robust.blocks[0]
        L0 = np.zeros((q, self.nz))
        L0[:, : m] = b0.B
        self._L0 = L0

        # later stages: static row vectors and per-t norm maps
        self._row_g = {}
        for b in self.robust.blocks[1:]:
            g = np.zeros((q, self.nz))
            g[:, self._xcol(b.k) : self._xcol(b.k) + n] = b.A
            g[:, self._vcol(b.k) : self._vcol(b.k) + m] = b.B
            self._row_g[b.k] = g

        l = usys.l
        E1t, E2 = self.tables.E1tilde, self.tables.E2
        self._atom_M = {}
        for t in range(N - 1):
            M = np.zeros((l, self.nz))
            M[:, self._vcol(t) : self._vcol(t) + m] = E2
            if t >= 1:
                M[:, self._xcol(t) : self._xcol(t) + n] = E1t
            self._atom_M[t] = M
        self._zero_l = np.zeros(l)

    def _assemble(self, x0):
        b0 = self.robust.blocks[0]
        r0 = b0.A @ x0 + b0.c

        beq = np.zeros(self._Aeq.shape[0])
        if beq.shape[0]:                       # N = 1 has no xbar variables
            beq[: self.sys.n] = self._Acl @ x0

        m0 = self.tables.E1tilde @ x0
        rows = []
        for b in self.robust.blocks[1:]:
            g = self._row_g[b.k]
            for i in range(self.constraints.q):
                atoms = []
                for t in range(b.k):
                    coef = b.coefs[i, t]
                    if coef == 0.0:
                        continue
                    off = m0 if t == 0 else self._zero_l
                    atoms.append(ConeAtom(coef=coef, M=self._atom_M[t], m=off))
                rows.append(ConeRow(g=g[i], h=float(b.c[i]), atoms=tuple(atoms)))

        return ConeProgram(
            q=np.zeros(self.nz), P=self._P,
            constant=float(x0 @ self.gcc.S @ x0),
            Aeq=self._Aeq, beq=beq,
            rows=tuple(rows), linear=(self._L0, r0),
        )

    # ---- planning --------------------------------------------------------

    def _trivial_plan(self, x0, t0):
        """The v = 0 plan when it is feasible, else None."""
        N, m, n = self.N, self.sys.m, self.sys.n
        xnom = np.empty((N + 1, n))
        xnom[0] = x0
        for k in range(N):
            xnom[k + 1] = self._Acl @ xnom[k]
        v = np.zeros((N, m))
        if self.robust.evaluate(xnom, v).max() > 0.0:
            return None
        elapsed = time.perf_counter() - t0
        diagnostics = {
            "status": "optimal",
            "iterations": 0,
            "residuals": {"primal": 0.0, "dual": 0.0, "gap": 0.0},
            "solve_seconds": elapsed,
            "plan_seconds": elapsed,
            "n_atoms": self.robust.n_atoms,
            "loose": False,
            "trivial": True,
        }
        u_plan = -xnom[:N] @ self.gcc.K.T
        return PlanResult(v=v, xnom=xnom, u0=u_plan[0].copy(), u_plan=u_plan,
                          bound=float(x0 @ self.gcc.S @ x0),
                          diagnostics=diagnostics)

    def plan(self, x0):
        """Solve the tightened program from x0; raises RobustInfeasible when
        no admissible plan exists and PlanSolveError on solver breakdown."""
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.sys.n,):
            raise ValueError("x0 has shape %s, expected (%d,)" % (x0.shape, self.sys.n))
        t0 = time.perf_counter()

        # The objective sum v'Rbar v is minimized by v = 0, so whenever the
        # pure-feedback rollout already satisfies every tightened row the
        # trivial plan is exactly optimal and no cone solve is needed.
        trivial = self._trivial_plan(x0, t0)
        if trivial is not None:
            return trivial

        prog = self._assemble(x0)
        sol = solve_cone(prog, tol=self.tol, max_iter=self.max_iter)
        elapsed = time.perf_counter() - t0

        diagnostics = {
            "status": sol.status,
            "iterations": sol.iterations,
            "residuals": sol.residuals,
            "solve_seconds": sol.solve_seconds,
            "plan_seconds": elapsed,
            "n_atoms": prog.n_atoms,
            "loose": False,
        }
        if sol.status == "infeasible":
            raise RobustInfeasible(x0)
        if sol.status != "optimal":
            metric = max(sol.residuals.values()) if sol.residuals else np.inf
            if sol.status == "max-iterations" and metric <= _LOOSE_METRIC:
                diagnostics["loose"] = True
            else:
                raise PlanSolveError(sol.status, diagnostics)

        N, m, n = self.N, self.sys.m, self.sys.n
        v = sol.z[: N * m].reshape(N, m).copy()
        xnom = np.empty((N + 1, n))
        xnom[0] = x0
        for k in range(N):
            xnom[k + 1] = self._Acl @ xnom[k] + self.sys.G @ v[k]
        u_plan = v - xnom[:N] @ self.gcc.K.T
        return PlanResult(v=v, xnom=xnom, u0=u_plan[0].copy(), u_plan=u_plan,
                          bound=float(sol.objective), diagnostics=diagnostics)

    def control_step(self, x0):
        """Receding-horizon step: replan from the measured state and return
        the input to apply, u = -K x0 + v[0]."""
        return self.plan(x0).u0

    def act(self, x, k):
        """Simulation protocol: returns (input, seconds spent planning)."""
        plan = self.plan(np.asarray(x, dtype=float))
        return plan.u0, plan.diagnostics["plan_seconds"]


def build_controller(usys, weights, constraints, N, eps=None, criterion="trace",
                     x0=None, tube="deadbeat", rho_variant="e1", tol=1e-8,
                     max_iter=200):
    """Synthesize a GcmpcController.

    eps fixes the guaranteed-cost parameter; when omitted it is selected
    by golden-section search over the feasible interval (criterion
    "trace" or "state", the latter needing x0).  tube picks the deviation
    gain: "deadbeat", "gcc" (reuse the planning feedback), or an explicit
    TubeGain.
    """
    if eps is not None:
        gcc = gcc_solve_infinite(usys, weights, eps)
    else:
        _, gcc = gcc_select_epsilon(usys, weights, criterion=criterion, x0=x0)

    if isinstance(tube, TubeGain):
        tg = tube
    elif tube == "deadbeat":
        tg = deadbeat_gain(usys.nominal)
    elif tube == "gcc":
        tg = TubeGain.from_gain(usys.nominal, gcc.K)
    else:
        raise ValueError("tube must be 'deadbeat', 'gcc', or a TubeGain")

    tables = build_tables(usys, constraints, gcc.K, tg, N, rho_variant=rho_variant)
    robust = assemble_robust_constraints(constraints, tables)
    return GcmpcController(usys, weights, constraints, gcc, robust,
                           tol=tol, max_iter=max_iter)
