import numpy as np
import pytest

from gcmpc.ermpc import (ErmpcController, MinMaxInfeasible, TreeTooLarge,
                         build_scenario_tree, nominal_mpc, solve_minmax)
from gcmpc.model import (NominalSystem, Trajectory, UncertainSystem,
                         UncertaintyStructure, eval_cost, step_uncertain)
from gcmpc.reference import X0_REF
from gcmpc.riccati import lqr_backward

GAMMA_REF = 7.5315444   # N = 10 min-max cost from x0 = (1,1,1)


def _scalar_minmax_instance():
    usys = UncertainSystem(
        nominal=NominalSystem(F=np.array([[1.2]]), G=np.array([[1.0]])),
        uncertainty=UncertaintyStructure(H=np.array([[0.4]]),
                                         E1=np.array([[0.5]]),
                                         E2=np.array([[0.2]])))
    from gcmpc.model import CostWeights, StageConstraints
    weights = CostWeights(Q=np.array([[1.0]]), R=np.array([[0.5]]))
    cons = StageConstraints(A=np.array([[1.0], [-1.0]]),
                            B=np.zeros((2, 1)), c=np.array([-2.0, -2.0]))
    return usys, weights, cons


# ---------------------------------------------------------------- tree


def test_tree_counts():
    unc1 = UncertaintyStructure(H=np.ones((1, 1)), E1=np.ones((1, 1)),
                                E2=np.zeros((1, 1)))
    t = build_scenario_tree(unc1, 1)
    assert (t.n_nodes, t.n_leaves, t.branching) == (3, 2, 2)

    t10 = build_scenario_tree(unc1, 10)
    assert t10.n_leaves == 1024 and t10.n_nodes == 2047

    unc2 = UncertaintyStructure(H=np.ones((2, 2)), E1=np.ones((1, 2)),
                                E2=np.zeros((1, 1)))
    t2 = build_scenario_tree(unc2, 2)
    assert t2.branching == 4 and t2.n_leaves == 16 and t2.n_nodes == 21


def test_tree_vertices_are_distinct_sign_patterns():
    unc2 = UncertaintyStructure(H=np.ones((2, 2)), E1=np.ones((1, 2)),
                                E2=np.zeros((1, 1)))
    t = build_scenario_tree(unc2, 1)
    assert len(t.vertices) == 4
    assert {tuple(v.ravel()) for v in t.vertices} == {
        (-1, -1), (-1, 1), (1, -1), (1, 1)}
    for v in t.vertices:
        assert v.shape == (2, 1)
        assert np.all(np.abs(v) == 1.0)


def test_tree_child_and_path():
    unc = UncertaintyStructure(H=np.ones((1, 1)), E1=np.ones((1, 1)),
                               E2=np.zeros((1, 1)))
    t = build_scenario_tree(unc, 3)
    node = 0
    for j in (1, 0, 1):
        node = t.child(node, j)
    assert t.depth[node] == 3
    assert [int(t.vertex_idx[v]) for v in t.path(node)[1:]] == [1, 0, 1]
    with pytest.raises(ValueError):
        t.child(node, 0)     # leaves have no children


def test_tree_too_large_reports_count():
    unc2 = UncertaintyStructure(H=np.ones((2, 2)), E1=np.ones((1, 2)),
                                E2=np.zeros((1, 1)))
    with pytest.raises(TreeTooLarge) as exc:
        build_scenario_tree(unc2, 12)
    assert exc.value.n_nodes == (4 ** 13 - 1) // 3


# ------------------------------------------------------------- solves


def test_reference_minmax_cost(refsys):
    usys, weights, cons = refsys
    sol = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=10)
    assert sol.gamma == pytest.approx(GAMMA_REF, rel=1e-5)
    assert sol.u.shape == (sol.tree.n_internal, usys.m)


def test_vertex_dominance_and_causality(refsys):
    """gamma bounds the realized cost of every vertex scenario when the
    tree policy is replayed path-consistently."""
    usys, weights, cons = refsys
    N = 3
    sol = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=N)
    tree = sol.tree
    rng = np.random.default_rng(17)
    for _ in range(200):
        seq = rng.integers(0, tree.branching, size=N)
        x = np.asarray(X0_REF, dtype=float)
        node = 0
        xs, us = [x], []
        for k in range(N):
            u = sol.u[node]
            x = step_uncertain(usys, tree.vertices[seq[k]], x, u)
            node = tree.child(node, int(seq[k]))
            xs.append(x)
            us.append(u)
        cost = eval_cost(weights, Trajectory(np.array(xs), np.array(us)))
        assert cost <= sol.gamma + 1e-6


def test_interior_uncertainty_stays_below_gamma(refsys):
    """Multi-affine interpolation of the vertex policy: for |delta_k| <= 1
    the interpolated rollout never exceeds gamma (box contains the ball)."""
    usys, weights, cons = refsys
    N = 3
    sol = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=N)
    tree = sol.tree
    rng = np.random.default_rng(29)
    for _ in range(200):
        deltas = rng.uniform(-1.0, 1.0, size=N)
        # lam[v] = prod over the path of (1 +- delta)/2
        lam = {0: 1.0}
        x = np.asarray(X0_REF, dtype=float)
        xs, us = [x], []
        for k in range(N):
            u = sum(w * sol.u[v] for v, w in lam.items())
            x = step_uncertain(usys, np.array([[deltas[k]]]), x, u)
            nxt = {}
            for v, w in lam.items():
                nxt[tree.child(v, 0)] = w * (1.0 - deltas[k]) / 2.0
                nxt[tree.child(v, 1)] = w * (1.0 + deltas[k]) / 2.0
            lam = nxt
            xs.append(x)
            us.append(u)
        cost = eval_cost(weights, Trajectory(np.array(xs), np.array(us)))
        assert cost <= sol.gamma + 1e-6


def test_sibling_symmetry(refsys):
    """Negating H relabels every vertex as its negation; the solution must
    be the same up to that subtree permutation (and gamma identical)."""
    usys, weights, cons = refsys
    flipped = UncertainSystem(
        nominal=usys.nominal,
        uncertainty=UncertaintyStructure(H=-usys.H, E1=usys.E1, E2=usys.E2))
    N = 2
    a = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=N)
    b = solve_minmax(flipped, weights, cons, np.asarray(X0_REF), N=N)
    assert b.gamma == pytest.approx(a.gamma, abs=1e-7)
    tree = a.tree
    np.testing.assert_allclose(b.u[0], a.u[0], atol=1e-6)
    np.testing.assert_allclose(b.u[tree.child(0, 0)],
                               a.u[tree.child(0, 1)], atol=1e-6)
    np.testing.assert_allclose(b.u[tree.child(0, 1)],
                               a.u[tree.child(0, 0)], atol=1e-6)


def test_deterministic_resolve(refsys):
    usys, weights, cons = refsys
    a = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=2)
    b = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=2)
    assert a.gamma == b.gamma
    assert np.array_equal(a.u, b.u)


def test_infeasible_initial_state(refsys):
    usys, weights, cons = refsys
    with pytest.raises(MinMaxInfeasible):
        solve_minmax(usys, weights, cons, np.array([5.0, 5.0, 5.0]), N=2)


def test_solve_requires_horizon_or_structure(refsys):
    usys, weights, cons = refsys
    with pytest.raises(ValueError):
        solve_minmax(usys, weights, cons, np.asarray(X0_REF))


# ----------------------------------------------------------- reductions


def test_uncertainty_free_reduction_matches_nominal_mpc(refsys):
    """E1 = E2 = 0 makes every branch share the nominal dynamics, so the
    min-max solution collapses onto the nominal MPC one."""
    usys, weights, cons = refsys
    quiet = UncertainSystem(
        nominal=usys.nominal,
        uncertainty=UncertaintyStructure(H=usys.H,
                                         E1=np.zeros_like(usys.E1),
                                         E2=np.zeros_like(usys.E2)))
    N = 3
    sol = solve_minmax(quiet, weights, cons, np.asarray(X0_REF), N=N)
    u_nom, cost_nom, _ = nominal_mpc(usys.nominal, weights, cons,
                                     np.asarray(X0_REF), N)
    assert sol.gamma == pytest.approx(cost_nom, abs=1e-6)
    # the applied path is the nominal input sequence on every branch
    tree = sol.tree
    node = 0
    for k in range(N):
        np.testing.assert_allclose(sol.u[node], u_nom[k], atol=1e-6)
        node = tree.child(node, 0)


def test_scalar_one_step_grid_oracle():
    usys, weights, cons = _scalar_minmax_instance()
    x0 = np.array([1.0])
    sol = solve_minmax(usys, weights, cons, x0, N=1)

    def worst(u):
        vals = []
        for d in (-1.0, 1.0):
            x1 = step_uncertain(usys, np.array([[d]]), x0, np.array([u]))
            if (cons.A @ x1 + cons.c).max() > 0:
                return np.inf
            vals.append(float(x0 @ weights.Q @ x0
                              + u * weights.R[0, 0] * u
                              + x1 @ weights.P_N @ x1))
        return max(vals)

    grid = np.linspace(-2.0, 2.0, 40_001)
    costs = np.array([worst(u) for u in grid])
    u_star = grid[int(np.argmin(costs))]
    assert sol.u0[0] == pytest.approx(u_star, abs=1e-4)
    assert sol.gamma == pytest.approx(costs.min(), abs=1e-4)


def test_nominal_mpc_matches_lqr_when_unconstrained(refsys):
    from gcmpc.model import StageConstraints
    usys, weights, _ = refsys
    loose = StageConstraints(A=np.vstack([np.eye(3), -np.eye(3)]),
                             B=np.zeros((6, 2)), c=-1e6 * np.ones(6))
    N = 4
    u_mpc, cost, _ = nominal_mpc(usys.nominal, weights, loose,
                                 np.asarray(X0_REF), N)
    lqr = lqr_backward(usys.nominal, weights, N)
    x = np.asarray(X0_REF, dtype=float)
    for k in range(N):
        u_lqr = -lqr.gains[k] @ x
        np.testing.assert_allclose(u_mpc[k], u_lqr, atol=1e-6)
        x = usys.F @ x + usys.G @ u_lqr


# ----------------------------------------------------------- controller


def test_controller_act_protocol(refsys):
    usys, weights, cons = refsys
    ctrl = ErmpcController(usys, weights, cons, N=2)
    u, seconds = ctrl.act(np.asarray(X0_REF), 0)
    assert u.shape == (2,)
    assert seconds > 0
    direct = solve_minmax(usys, weights, cons, np.asarray(X0_REF), N=2)
    np.testing.assert_allclose(u, direct.u0, atol=1e-9)
