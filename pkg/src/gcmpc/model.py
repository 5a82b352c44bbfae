"""System, cost, and constraint containers for robust predictive control.

The plant model is a discrete-time linear system with norm-bounded
multiplicative uncertainty,

    x[k+1] = (F + dF) x[k] + (G + dG) u[k],
    [dF dG] = H Delta [E1 E2],     ||Delta||_2 <= 1,

so a single contraction Delta scales structured perturbations of both the
state and input maps.  Costs are standard quadratic stage costs with an
optional terminal weight; pointwise-in-time constraints are a polytope
A x + B u + c <= 0 certified nonempty at construction.

All matrices are copied to float64 and frozen (read-only views), so the
containers can be shared freely between controllers and simulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConeProgram, solve_cone

__all__ = [
    "NominalSystem",
    "UncertaintyStructure",
    "UncertainSystem",
    "CostWeights",
    "StageConstraints",
    "Trajectory",
    "step_nominal",
    "step_uncertain",
    "eval_cost",
    "check_membership",
]


def _frozen(a, name, shape=None, ndim=2):
    out = np.array(a, dtype=float)
    if out.ndim != ndim:
        raise ValueError("%s must be %d-dimensional, got shape %s" % (name, ndim, (out.shape,)))
    if shape is not None and out.shape != shape:
        raise ValueError("%s has shape %s, expected %s" % (name, out.shape, shape))
    if not np.all(np.isfinite(out)):
        raise ValueError("%s contains non-finite entries" % name)
    out.flags.writeable = False
    return out


def _check_sym_psd(M, name, definite=False):
    if np.abs(M - M.T).max() > 1e-10 * (1.0 + np.abs(M).max()):
        raise ValueError("%s must be symmetric" % name)
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    lo = -1e-10 * (1.0 + abs(w).max())
    if definite:
        lo = 1e-12 * (1.0 + abs(w).max())
    if w.min() < lo:
        kind = "positive definite" if definite else "positive semidefinite"
        raise ValueError("%s must be %s (min eigenvalue %.3e)" % (name, kind, w.min()))


@dataclass(frozen=True)
class NominalSystem:
    """x[k+1] = F x[k] + G u[k]."""

    F: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        F = _frozen(self.F, "F")
        if F.shape[0] != F.shape[1]:
            raise ValueError("F must be square, got shape %s" % (F.shape,))
        G = _frozen(self.G, "G", shape=None)
        if G.shape[0] != F.shape[0]:
            raise ValueError("G has %d rows, expected %d" % (G.shape[0], F.shape[0]))
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def m(self):
        return self.G.shape[1]


@dataclass(frozen=True)
class UncertaintyStructure:
    """Perturbation channels: [dF dG] = H Delta [E1 E2] with ||Delta|| <= 1.

    H is (n, p), E1 is (l, n), E2 is (l, m); Delta ranges over the spectral
    unit ball in R^{p x l}.
    """

    H: np.ndarray
    E1: np.ndarray
    E2: np.ndarray

    def __post_init__(self):
        H = _frozen(self.H, "H")
        E1 = _frozen(self.E1, "E1")
        E2 = _frozen(self.E2, "E2")
        if not np.any(H):
            raise ValueError("H must have at least one nonzero entry; drop the "
                             "uncertainty channel instead of zeroing it")
        if E2.shape[0] != E1.shape[0]:
            raise ValueError("E1 and E2 must have the same number of rows")
        if E1.shape[1] != H.shape[0]:
            raise ValueError("E1 has %d columns, expected n = %d" % (E1.shape[1], H.shape[0]))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "E1", E1)
        object.__setattr__(self, "E2", E2)

    @property
    def p(self):
        return self.H.shape[1]

    @property
    def l(self):
        return self.E1.shape[0]


@dataclass(frozen=True)
class UncertainSystem:
    nominal: NominalSystem
    uncertainty: UncertaintyStructure

    def __post_init__(self):
        if self.uncertainty.H.shape[0] != self.nominal.n:
            raise ValueError("H has %d rows, expected n = %d"
                             % (self.uncertainty.H.shape[0], self.nominal.n))
        if self.uncertainty.E2.shape[1] != self.nominal.m:
            raise ValueError("E2 has %d columns, expected m = %d"
                             % (self.uncertainty.E2.shape[1], self.nominal.m))

    # flat accessors; controllers touch these constantly
    @property
    def F(self):
        return self.nominal.F

    @property
    def G(self):
        return self.nominal.G

    @property
    def H(self):
        return self.uncertainty.H

    @property
    def E1(self):
        return self.uncertainty.E1

    @property
    def E2(self):
        return self.uncertainty.E2

    @property
    def n(self):
        return self.nominal.n

    @property
    def m(self):
        return self.nominal.m

    @property
    def p(self):
        return self.uncertainty.p

    @property
    def l(self):
        return self.uncertainty.l


@dataclass(frozen=True)
class CostWeights:
    """Quadratic weights: sum of x'Qx + u'Ru plus terminal x'P_N x.

    P_N defaults to Q when not given.
    """

    Q: np.ndarray
    R: np.ndarray
    P_N: np.ndarray = None

    def __post_init__(self):
        Q = _frozen(self.Q, "Q")
        R = _frozen(self.R, "R")
        _check_sym_psd(Q, "Q")
        _check_sym_psd(R, "R", definite=True)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.P_N is None:
            object.__setattr__(self, "P_N", Q)
        else:
            P_N = _frozen(self.P_N, "P_N", shape=Q.shape)
            _check_sym_psd(P_N, "P_N")
            object.__setattr__(self, "P_N", P_N)


@dataclass(frozen=True)
class StageConstraints:
    """Pointwise constraint polytope  A x + B u + c <= 0  (rowwise).

    Nonemptiness is certified once at construction by a small phase-1
    linear program; an empty polytope raises ValueError immediately
    rather than surfacing later as a mysterious infeasible plan.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, "A")
        B = _frozen(self.B, "B")
        c = _frozen(self.c, "c", ndim=1)
        if B.shape[0] != A.shape[0] or c.shape[0] != A.shape[0]:
            raise ValueError("A, B, c must agree on the number of rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        self._certify_nonempty()

    @property
    def q(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.B.shape[1]

    def _certify_nonempty(self):
        # min t  s.t.  Ax + Bu + c <= t*1,  t >= -1   (always feasible, bounded)
        n, m, q = self.n, self.m, self.q
        d = n + m + 1
        L = np.zeros((q + 1, d))
        L[:q, :n] = self.A
        L[:q, n : n + m] = self.B
        L[:q, -1] = -1.0
        L[q, -1] = -1.0
        r = np.concatenate([self.c, [-1.0]])
        qvec = np.zeros(d)
        qvec[-1] = 1.0
        sol = solve_cone(ConeProgram(q=qvec, linear=(L, r)))
        if sol.status != "optimal":  # pragma: no cover - tiny LP, never expected
            raise RuntimeError("nonemptiness certification failed: %s" % sol.status)
        if sol.z[-1] > 1e-9:
            raise ValueError(
                "constraint polytope is empty (phase-1 slack %.3e)" % sol.z[-1]
            )


@dataclass(frozen=True)
class Trajectory:
    """A rollout: states (T+1, n) and inputs (T, m)."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        xs = _frozen(self.states, "states")
        us = _frozen(self.inputs, "inputs")
        if xs.shape[0] != us.shape[0] + 1:
            raise ValueError("states must hold exactly one more row than inputs")
        object.__setattr__(self, "states", xs)
        object.__setattr__(self, "inputs", us)

    @property
    def horizon(self):
        return self.inputs.shape[0]


def step_nominal(sys, x, u):
    """One step of the unperturbed dynamics."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return sys.F @ x + sys.G @ u


def step_uncertain(usys, Delta, x, u):
    """One step of the perturbed dynamics under a given contraction Delta."""
    Delta = np.asarray(Delta, dtype=float)
    if Delta.shape != (usys.p, usys.l):
        raise ValueError("Delta has shape %s, expected (%d, %d)"
                         % (Delta.shape, usys.p, usys.l))
    nrm = np.linalg.norm(Delta, 2) if Delta.size else 0.0
    if nrm > 1.0 + 1e-12:
        raise ValueError("||Delta||_2 = %.15f exceeds 1" % nrm)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = usys.H @ (Delta @ (usys.E1 @ x + usys.E2 @ u))
    return usys.F @ x + usys.G @ u + w


def eval_cost(weights, traj):
    """Total quadratic cost of a trajectory (terminal weight on the last state)."""
    xs, us = traj.states, traj.inputs
    total = 0.0
    for k in range(us.shape[0]):
        total += xs[k] @ weights.Q @ xs[k] + us[k] @ weights.R @ us[k]
    total += xs[-1] @ weights.P_N @ xs[-1]
    return float(total)


def check_membership(con, x, u, tol=1e-9):
    """Whether (x, u) satisfies the stage polytope; returns (ok, worst_violation)."""
    vals = con.A @ np.asarray(x, dtype=float) + con.B @ np.asarray(u, dtype=float) + con.c
    worst = float(vals.max()) if vals.size else 0.0
    return worst <= tol, worst
