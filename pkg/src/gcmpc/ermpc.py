"""Enumeration-based min-max MPC over a scenario tree of extreme contractions.

The baseline controller treats the uncertainty as an adversary that picks
one vertex Delta (entries +-1) at every step.  Enumerating all vertex
sequences gives a tree with B = 2^(p l) branches per node; inputs live on
internal nodes (so the policy is causal: inputs at depth k may depend on
the first k adversary moves), states are eliminated through the per-edge
transition maps, and a single epigraph variable gamma bounds every leaf's
accumulated quadratic cost.  Minimizing gamma yields the exact min-max
cost over vertex sequences — and, by convexity of the cost along each
Delta entry, over the whole interval uncertainty as well.

The tree grows as B^N, which is the point: this is the reference curve
that the guaranteed-cost controller's fixed-size program is measured
against.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConeAtom, ConeProgram, ConeRow, solve_cone

__all__ = [
    "TreeTooLarge",
    "MinMaxInfeasible",
    "ScenarioTree",
    "MinMaxStructure",
    "MinMaxSolution",
    "build_scenario_tree",
    "solve_minmax",
    "nominal_mpc",
    "ErmpcController",
]

_LOOSE_METRIC = 1e-6


class TreeTooLarge(Exception):
    def __init__(self, n_nodes, max_nodes):
        self.n_nodes = n_nodes
        self.max_nodes = max_nodes
        super().__init__("scenario tree needs %d nodes (cap %d)" % (n_nodes, max_nodes))


class MinMaxInfeasible(Exception):
    """No causal input policy satisfies the constraints on every branch."""

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)
        super().__init__("min-max program infeasible from x0 = %s" % (self.x0,))


def _psd_sqrt(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class ScenarioTree:
    """Breadth-first vertex tree.  Node 0 is the root; level d occupies
    indices [offsets[d], offsets[d+1]).  vertex_idx[v] names the extreme
    Delta on the edge into v (-1 at the root)."""

    N: int
    branching: int
    vertices: tuple          # (p, l) arrays, entries +-1
    offsets: np.ndarray      # (N+2,) level start indices
    parent: np.ndarray
    depth: np.ndarray
    vertex_idx: np.ndarray

    @property
    def n_nodes(self):
        return int(self.offsets[-1])

    @property
    def n_internal(self):
        return int(self.offsets[self.N])

    @property
    def n_leaves(self):
        return self.n_nodes - self.n_internal

    def child(self, v, j):
        d = int(self.depth[v])
        if d >= self.N:
            raise ValueError("node %d is a leaf" % v)
        return int(self.offsets[d + 1] + (v - self.offsets[d]) * self.branching + j)

    def path(self, leaf):
        """Node indices from the root down to `leaf` (inclusive)."""
        nodes = [int(leaf)]
        while nodes[-1] != 0:
            nodes.append(int(self.parent[nodes[-1]]))
        return nodes[::-1]


def build_scenario_tree(unc, N, max_nodes=1_000_000):
    """Enumerate vertex sequences of length N for the given uncertainty
    structure.  Raises TreeTooLarge before allocating anything big."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    pl = unc.p * unc.l
    B = 2 ** pl
    total = (B ** (N + 1) - 1) // (B - 1) if B > 1 else N + 1
    if total > max_nodes:
        raise TreeTooLarge(total, max_nodes)

    vertices = tuple(
        np.array(bits, dtype=float).reshape(unc.p, unc.l)
        for bits in itertools.product((-1.0, 1.0), repeat=pl)
    )

    offsets = np.zeros(N + 2, dtype=np.int64)
    size = 1
    for d in range(N + 1):
        offsets[d + 1] = offsets[d] + size
        size *= B
    parent = np.full(total, -1, dtype=np.int64)
    depth = np.zeros(total, dtype=np.int64)
    vertex_idx = np.full(total, -1, dtype=np.int64)
    for d in range(1, N + 1):
        lo, hi = offsets[d], offsets[d + 1]
        idx = np.arange(lo, hi)
        parent[idx] = offsets[d - 1] + (idx - lo) // B
        depth[idx] = d
        vertex_idx[idx] = (idx - lo) % B
    return ScenarioTree(N=N, branching=B, vertices=vertices, offsets=offsets,
                        parent=parent, depth=depth, vertex_idx=vertex_idx)


class MinMaxStructure:
    """Everything about the min-max program that does not depend on x0.

    Variables are (u_v for internal v, gamma).  States are eliminated:
    x_v = Phi[v] x0 + sum_a Gamma[v][a] u_a over internal ancestors a.
    Stage constraints sit on internal nodes; each leaf contributes one
    second-order cone bounding its path cost by gamma.
    """

    def __init__(self, usys, weights, constraints, N, max_nodes=1_000_000):
        self.usys = usys
        self.weights = weights
        self.constraints = constraints
        self.N = N
        tree = build_scenario_tree(usys.uncertainty, N, max_nodes=max_nodes)
        self.tree = tree

        n, m, q = usys.n, usys.m, constraints.q
        F, G, H = usys.F, usys.G, usys.H
        E1, E2 = usys.E1, usys.E2
        edges = [(F + H @ V @ E1, G + H @ V @ E2) for V in tree.vertices]

        ni = tree.n_internal
        self.nz = ni * m + 1
        self.gcol = self.nz - 1
        ucol = lambda v: v * m

        # state maps down the tree
        Phi = [None] * tree.n_nodes
        Gam = [None] * tree.n_nodes
        Phi[0] = np.eye(n)
        Gam[0] = {}
        for v in range(1, tree.n_nodes):
            p_ = int(tree.parent[v])
            Fv, Gv = edges[int(tree.vertex_idx[v])]
            Phi[v] = Fv @ Phi[p_]
            g = {a: Fv @ M for a, M in Gam[p_].items()}
            g[p_] = Gv
            Gam[v] = g

        # stage rows: A x_v + B u_v + c <= 0 at every internal node
        data, ri, ci = [], [], []
        Hrep = np.zeros((ni * q, n))
        for v in range(ni):
            r0 = v * q
            Hrep[r0 : r0 + q] = constraints.A @ Phi[v]
            for a, M in Gam[v].items():
                blk = constraints.A @ M
                for i in range(q):
                    for j in range(m):
                        if blk[i, j] != 0.0:
                            data.append(blk[i, j])
                            ri.append(r0 + i)
                            ci.append(ucol(a) + j)
            for i in range(q):
                for j in range(m):
                    if constraints.B[i, j] != 0.0:
                        data.append(constraints.B[i, j])
                        ri.append(r0 + i)
                        ci.append(ucol(v) + j)
        self.L = sp.csr_matrix((data, (ri, ci)), shape=(ni * q, self.nz))
        self.Hrep = Hrep
        self.crep = np.tile(constraints.c, ni)

        # leaf cost cones
        Qh = _psd_sqrt(weights.Q)
        Rh = _psd_sqrt(weights.R)
        Ph = _psd_sqrt(weights.P_N)
        ydim = N * (n + m) + n + 1
        self._leafM = []
        self._leafPhi = []
        self._leafConst = []
        for leaf in range(tree.n_internal, tree.n_nodes):
            path = tree.path(leaf)
            Ophi = np.zeros((ydim, n))
            ld, lr, lc = [], [], []

            def put(r0, blk, c0):
                for i in range(blk.shape[0]):
                    for j in range(blk.shape[1]):
                        if blk[i, j] != 0.0:
                            ld.append(blk[i, j])
                            lr.append(r0 + i)
                            lc.append(c0 + j)

            r0 = 0
            for d in range(N + 1):
                v = path[d]
                W = Qh if d < N else Ph
                Ophi[r0 : r0 + n] = W @ Phi[v]
                for a, M in Gam[v].items():
                    put(r0, W @ M, ucol(a))
                r0 += n
                if d < N:
                    put(r0, Rh, ucol(v))
                    r0 += m
            ld.append(0.5)
            lr.append(ydim - 1)
            lc.append(self.gcol)
            const = np.zeros(ydim)
            const[-1] = -0.5
            self._leafM.append(sp.csr_matrix((ld, (lr, lc)), shape=(ydim, self.nz)))
            self._leafPhi.append(Ophi)
            self._leafConst.append(const)

        g = np.zeros(self.nz)
        g[self.gcol] = -0.5
        self._leaf_g = g

    def program(self, x0):
        x0 = np.asarray(x0, dtype=float)
        r = self.Hrep @ x0 + self.crep
        rows = []
        for M, Ophi, const in zip(self._leafM, self._leafPhi, self._leafConst):
            atom = ConeAtom(coef=1.0, M=M, m=Ophi @ x0 + const)
            rows.append(ConeRow(g=self._leaf_g, h=-0.5, atoms=(atom,)))
        qv = np.zeros(self.nz)
        qv[self.gcol] = 1.0
        return ConeProgram(q=qv, rows=tuple(rows), linear=(self.L, r))


@dataclass(frozen=True)
class MinMaxSolution:
    """gamma is the min-max cost bound; u[v] is the input at internal node
    v of the scenario tree (u[0] is applied)."""

    gamma: float
    u: np.ndarray
    tree: ScenarioTree
    diagnostics: dict

    @property
    def u0(self):
        return self.u[0]


def solve_minmax(usys, weights, constraints, x0, N=None, structure=None,
                 tol=1e-8, max_iter=200, max_nodes=1_000_000):
    """Exact min-max cost over the vertex tree from x0.

    Pass a prebuilt MinMaxStructure to amortize assembly across solves
    (ErmpcController does this); otherwise N is required.
    """
    if structure is None:
        if N is None:
            raise ValueError("give either N or a prebuilt structure")
        structure = MinMaxStructure(usys, weights, constraints, N,
                                    max_nodes=max_nodes)
    x0 = np.asarray(x0, dtype=float)
    sol = solve_cone(structure.program(x0), tol=tol, max_iter=max_iter)

    diagnostics = {
        "status": sol.status,
        "iterations": sol.iterations,
        "residuals": sol.residuals,
        "solve_seconds": sol.solve_seconds,
        "n_nodes": structure.tree.n_nodes,
        "loose": False,
    }
    if sol.status == "infeasible":
        raise MinMaxInfeasible(x0)
    if sol.status != "optimal":
        metric = max(sol.residuals.values()) if sol.residuals else np.inf
        if sol.status == "max-iterations" and metric <= _LOOSE_METRIC:
            diagnostics["loose"] = True
        else:
            raise RuntimeError("min-max solve failed: %s (%s)"
                               % (sol.status, diagnostics))
    m = usys.m
    u = sol.z[: structure.tree.n_internal * m].reshape(-1, m).copy()
    return MinMaxSolution(gamma=float(sol.z[structure.gcol]), u=u,
                          tree=structure.tree, diagnostics=diagnostics)


def nominal_mpc(sys, weights, constraints, x0, N, tol=1e-8, max_iter=200):
    """Certainty-equivalent MPC (no uncertainty): minimize the quadratic
    cost subject to the stage polytope along the single nominal branch.
    Returns (inputs, cost, diagnostics)."""
    n, m, q = sys.n, constraints.m, constraints.q
    x0 = np.asarray(x0, dtype=float)
    F, G = sys.F, sys.G

    Phi = [np.eye(n)]
    for _ in range(N):
        Phi.append(F @ Phi[-1])
    # x_d = Phi[d] x0 + sum_{j<d} F^{d-1-j} G u_j
    Gmap = [[Phi[d - 1 - j] @ G for j in range(d)] for d in range(N + 1)]

    Qh = _psd_sqrt(weights.Q)
    Rh = _psd_sqrt(weights.R)
    Ph = _psd_sqrt(weights.P_N)
    ydim = N * (n + m) + n
    C = np.zeros((ydim, N * m))
    dvec = np.zeros(ydim)
    r0 = 0
    for d in range(N + 1):
        W = Qh if d < N else Ph
        dvec[r0 : r0 + n] = W @ Phi[d] @ x0
        for j in range(d):
            C[r0 : r0 + n, j * m : (j + 1) * m] = W @ Gmap[d][j]
        r0 += n
        if d < N:
            C[r0 : r0 + m, d * m : (d + 1) * m] = Rh
            r0 += m

    L = np.zeros((N * q, N * m))
    r = np.zeros(N * q)
    for d in range(N):
        rr = d * q
        r[rr : rr + q] = constraints.A @ Phi[d] @ x0 + constraints.c
        for j in range(d):
            L[rr : rr + q, j * m : (j + 1) * m] = constraints.A @ Gmap[d][j]
        L[rr : rr + q, d * m : (d + 1) * m] += constraints.B

    prog = ConeProgram(q=2.0 * C.T @ dvec, P=2.0 * C.T @ C,
                       constant=float(dvec @ dvec), linear=(L, r))
    sol = solve_cone(prog, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise MinMaxInfeasible(x0)
    if sol.status != "optimal":
        raise RuntimeError("nominal MPC solve failed: %s" % sol.status)
    u = sol.z.reshape(N, m).copy()
    diagnostics = {"status": sol.status, "iterations": sol.iterations,
                   "solve_seconds": sol.solve_seconds}
    return u, float(sol.objective), diagnostics


class ErmpcController:
    """Receding-horizon min-max controller (structure built once)."""

    def __init__(self, sys, weights, constraints, N, tol=1e-8, max_iter=200,
                 max_nodes=1_000_000):
        self.sys = sys
        self.weights = weights
        self.constraints = constraints
        self.N = N
        self.tol = tol
        self.max_iter = max_iter
        self.structure = MinMaxStructure(sys, weights, constraints, N,
                                         max_nodes=max_nodes)

    def solve(self, x0):
        return solve_minmax(self.sys, self.weights, self.constraints, x0,
                            structure=self.structure, tol=self.tol,
                            max_iter=self.max_iter)

    def act(self, x, k):
        t0 = time.perf_counter()
        sol = self.solve(np.asarray(x, dtype=float))
        return sol.u0.copy(), time.perf_counter() - t0
