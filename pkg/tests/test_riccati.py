import numpy as np
import pytest
from scipy.linalg import orth

from gcmpc.model import (CostWeights, NominalSystem, UncertainSystem,
                         UncertaintyStructure)
from gcmpc.reference import (EPS_INTERVAL_HI_REF, EPS_REF, K_REF, RBAR_REF,
                             S_REF, reference_system)
from gcmpc.riccati import (GccInfeasible, GccNoConvergence, NoFeasibleEpsilon,
                           gcc_epsilon_interval, gcc_riccati_map,
                           gcc_select_epsilon, gcc_solve_infinite,
                           lqr_backward, verify_gcc)


def _scalar_system(F, G, H=1.0, E1=0.0, E2=0.0):
    return UncertainSystem(
        nominal=NominalSystem(F=np.array([[F]]), G=np.array([[G]])),
        uncertainty=UncertaintyStructure(H=np.array([[H]]),
                                         E1=np.array([[E1]]),
                                         E2=np.array([[E2]])))


# ---------------------------------------------------------------- LQR


def test_lqr_zero_dynamics():
    sys = NominalSystem(F=np.zeros((2, 2)), G=np.eye(2))
    w = CostWeights(Q=np.eye(2), R=np.eye(2))
    sol = lqr_backward(sys, w, 4)
    for k in range(4):
        np.testing.assert_allclose(sol.gains[k], 0.0, atol=1e-14)
        np.testing.assert_allclose(sol.costs[k], np.eye(2), atol=1e-14)


def test_lqr_uncontrollable_reduction():
    F = np.array([[0.5, 0.2], [0.0, 0.3]])
    sys = NominalSystem(F=F, G=np.zeros((2, 1)))
    w = CostWeights(Q=np.eye(2), R=np.eye(1))
    sol = lqr_backward(sys, w, 3)
    P = np.eye(2)
    for k in reversed(range(3)):
        P = F.T @ P @ F + np.eye(2)
        np.testing.assert_allclose(sol.costs[k], P, atol=1e-12)
        np.testing.assert_allclose(sol.gains[k], 0.0, atol=1e-14)


def test_lqr_scalar_single_step():
    sys = NominalSystem(F=np.array([[1.0]]), G=np.array([[1.0]]))
    w = CostWeights(Q=np.array([[1.0]]), R=np.array([[1.0]]))
    sol = lqr_backward(sys, w, 1)
    assert sol.gains[0][0, 0] == pytest.approx(0.5, abs=1e-14)
    assert sol.costs[0][0, 0] == pytest.approx(1.5, abs=1e-14)


def test_lqr_recursion_residual():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(3, 3)) * 0.4
    G = rng.normal(size=(3, 2))
    sys = NominalSystem(F=F, G=G)
    w = CostWeights(Q=np.eye(3), R=np.eye(2))
    sol = lqr_backward(sys, w, 6)
    P_next = w.P_N
    for k in reversed(range(6)):
        K = np.linalg.solve(w.R + G.T @ P_next @ G, G.T @ P_next @ F)
        P = F.T @ P_next @ F + w.Q - F.T @ P_next @ G @ K
        np.testing.assert_allclose(sol.gains[k], K, atol=1e-9)
        np.testing.assert_allclose(sol.costs[k], 0.5 * (P + P.T), atol=1e-9)
        P_next = sol.costs[k]


# ------------------------------------------------- guaranteed-cost map


def test_map_returns_triple_and_matches_plain_riccati_when_E_zero():
    rng = np.random.default_rng(5)
    F = rng.normal(size=(3, 3)) * 0.3
    G = rng.normal(size=(3, 2))
    H = rng.normal(size=(3, 1)) * 0.1
    usys = UncertainSystem(
        nominal=NominalSystem(F=F, G=G),
        uncertainty=UncertaintyStructure(H=H, E1=np.zeros((1, 3)),
                                         E2=np.zeros((1, 2))))
    w = CostWeights(Q=np.eye(3), R=np.eye(2))
    S = np.eye(3) * 2.0
    eps = 0.5
    S2, X, K = gcc_riccati_map(usys, w, S, eps)

    X_direct = np.linalg.inv(np.linalg.inv(S) - eps * H @ H.T)
    np.testing.assert_allclose(X, X_direct, atol=1e-10)
    K_direct = np.linalg.solve(w.R + G.T @ X @ G, G.T @ X @ F)
    np.testing.assert_allclose(K, K_direct, atol=1e-10)
    S2_direct = F.T @ X @ F + w.Q - F.T @ X @ G @ K_direct
    np.testing.assert_allclose(S2, 0.5 * (S2_direct + S2_direct.T), atol=1e-10)


def test_map_signals_infeasible_eps(refsys):
    usys, weights, _ = refsys
    with pytest.raises(GccInfeasible):
        gcc_riccati_map(usys, weights, S_REF, 0.05)


def test_stationary_solution_matches_tabulated_values(gcc_ref):
    assert np.all(np.abs(gcc_ref.S - S_REF) <= 1e-2 * np.abs(S_REF))
    assert np.all(np.abs(gcc_ref.K - K_REF) <= 1e-2 * np.abs(K_REF))
    assert np.all(np.abs(gcc_ref.Rbar - RBAR_REF) <= 1e-2 * np.abs(RBAR_REF))


def test_solution_invariants(gcc_ref, refsys):
    usys, weights, _ = refsys
    for M in (gcc_ref.S, gcc_ref.X, gcc_ref.Rbar, gcc_ref.Qeps, gcc_ref.Reps):
        np.testing.assert_allclose(M, M.T, atol=1e-10)
    assert np.linalg.eigvalsh(gcc_ref.S).min() > 0
    assert np.linalg.eigvalsh(gcc_ref.X).min() > 0
    assert np.linalg.eigvalsh(gcc_ref.Rbar).min() > 0
    # eps-inflated weights against their definitions
    ei = 1.0 / gcc_ref.eps
    np.testing.assert_allclose(gcc_ref.Qeps,
                               weights.Q + ei * usys.E1.T @ usys.E1, atol=1e-12)
    np.testing.assert_allclose(gcc_ref.Reps,
                               weights.R + ei * usys.E2.T @ usys.E2, atol=1e-12)
    np.testing.assert_allclose(gcc_ref.Neps, ei * usys.E1.T @ usys.E2,
                               atol=1e-12)
    np.testing.assert_allclose(
        gcc_ref.Rbar, gcc_ref.Reps + usys.G.T @ gcc_ref.X @ usys.G, atol=1e-10)


def test_converged_point_is_fixed(gcc_ref, refsys):
    usys, weights, _ = refsys
    S2, _, _ = gcc_riccati_map(usys, weights, gcc_ref.S, gcc_ref.eps)
    tol = 1e-10
    assert np.abs(S2 - gcc_ref.S).max() <= 10 * tol * (1 + np.abs(gcc_ref.S).max())


def test_infeasible_eps_raises(refsys):
    usys, weights, _ = refsys
    with pytest.raises((GccInfeasible, GccNoConvergence)):
        gcc_solve_infinite(usys, weights, 0.05)


def test_woodbury_forms_and_correction_subspace(refsys):
    usys, weights, _ = refsys
    interval = gcc_epsilon_interval(usys, weights)
    H = usys.H
    for eps in np.linspace(0.05 * interval.hi, 0.95 * interval.hi, 5):
        sol = gcc_solve_infinite(usys, weights, eps)
        S, X = sol.S, sol.X
        core = np.linalg.inv(np.eye(usys.p) / eps - H.T @ S @ H)
        X_alt = S + S @ H @ core @ H.T @ S
        assert np.abs(X - X_alt).max() <= 1e-8 * np.abs(X).max()
        gap = X - S
        # PSD up to roundoff, strictly positive on the correction range
        assert np.linalg.eigvalsh(gap).min() >= -1e-9 * np.abs(X).max()
        U = orth(S @ H)
        assert np.linalg.eigvalsh(U.T @ gap @ U).min() > 0


# ------------------------------------------------------- eps interval


def test_interval_reference_endpoint(refsys):
    usys, weights, _ = refsys
    interval = gcc_epsilon_interval(usys, weights)
    assert interval.lo == 0.0
    assert abs(interval.hi - EPS_INTERVAL_HI_REF) <= 5e-4
    # endpoint certified: hi solves, hi*(1+resolution) does not
    gcc_solve_infinite(usys, weights, interval.hi)
    with pytest.raises((GccInfeasible, GccNoConvergence)):
        gcc_solve_infinite(usys, weights, interval.hi * (1 + 1e-4))


def test_interval_crosscheck_against_tabulated_S(refsys):
    usys, _, _ = refsys
    hsh = float((usys.H.T @ S_REF @ usys.H)[0, 0])
    assert hsh == pytest.approx(45.460206, abs=1e-4)
    # the tabulated endpoint is 1/||H'SH|| to three significant figures
    assert "%.3g" % (1.0 / hsh) == "%.3g" % EPS_INTERVAL_HI_REF


def test_interval_self_consistency_when_E_zero():
    F = np.array([[0.5, 0.1], [0.0, 0.3]])
    usys = UncertainSystem(
        nominal=NominalSystem(F=F, G=np.eye(2)),
        uncertainty=UncertaintyStructure(H=np.array([[0.05], [0.02]]),
                                         E1=np.zeros((1, 2)),
                                         E2=np.zeros((1, 2))))
    w = CostWeights(Q=np.eye(2), R=np.eye(2))
    interval = gcc_epsilon_interval(usys, w)
    assert interval.hi > 100.0  # tiny H leaves a wide admissible range
    sol = gcc_solve_infinite(usys, w, interval.hi)
    hsh = (usys.H.T @ sol.S @ usys.H).item()
    ratio = (1.0 / hsh) / interval.hi
    assert 1.0 - 1e-9 <= ratio <= 1.01


def test_no_feasible_eps_for_unstabilizable_pair():
    usys = _scalar_system(F=2.0, G=0.0)
    w = CostWeights(Q=np.array([[1.0]]), R=np.array([[1.0]]))
    with pytest.raises(NoFeasibleEpsilon):
        gcc_epsilon_interval(usys, w)


# ------------------------------------------------------- eps selection


def test_select_epsilon_state_criterion_beats_grid(refsys):
    usys, weights, _ = refsys
    interval = gcc_epsilon_interval(usys, weights)
    x0 = np.array([1.0, 0.0, 0.0])
    eps_star, sol = gcc_select_epsilon(usys, weights, criterion="state", x0=x0,
                                       interval=interval)
    assert interval.lo < eps_star < interval.hi
    best = np.inf
    for eps in np.linspace(interval.hi * 1e-3, interval.hi * 0.999, 50):
        try:
            best = min(best, gcc_solve_infinite(usys, weights, eps).S[0, 0])
        except (GccInfeasible, GccNoConvergence):
            continue
    assert sol.S[0, 0] <= best + 1e-6 * abs(best)


def test_select_epsilon_trace_default(refsys):
    usys, weights, _ = refsys
    eps_star, sol = gcc_select_epsilon(usys, weights)
    assert 0.0 < eps_star
    assert sol.eps == pytest.approx(eps_star)
    assert np.trace(sol.S) > 0


# ------------------------------------------------- certificate checking


def test_verify_reference_design(gcc_ref, refsys):
    usys, weights, _ = refsys
    check = verify_gcc(usys, weights, gcc_ref, n_samples=400)
    assert check.passed
    assert check.worst_slack <= check.band


def test_verify_detects_broken_gain(gcc_ref, refsys):
    usys, weights, _ = refsys
    from dataclasses import replace
    K_bad = gcc_ref.K.copy()
    K_bad[0, 0] += 10.0
    broken = replace(gcc_ref, K=K_bad)
    check = verify_gcc(usys, weights, broken, n_samples=400)
    assert not check.passed


def test_zero_uncertainty_slice_is_lyapunov_decrease(gcc_ref, refsys):
    usys, weights, _ = refsys
    S, K = gcc_ref.S, gcc_ref.K
    Fcl = usys.F - usys.G @ K
    slack = Fcl.T @ S @ Fcl - S + weights.Q + K.T @ weights.R @ K
    band = 1e-7 * (1.0 + np.linalg.norm(S, 2))
    assert np.linalg.eigvalsh(slack).max() <= band


def test_closed_loop_cost_stays_below_quadratic_bound(gcc_ref, refsys):
    """Pure -Kx feedback: accumulated stage cost under sampled contractions
    never reaches x0'Sx0 (the guarantee the certificate encodes)."""
    usys, weights, _ = refsys
    S, K = gcc_ref.S, gcc_ref.K
    E1t = usys.E1 - usys.E2 @ K
    Acl = usys.F - usys.G @ K
    Qcl = weights.Q + K.T @ weights.R @ K
    rng = np.random.default_rng(17)
    X = rng.uniform(-1.0, 1.0, size=(200, 3))
    bounds = np.einsum("ri,ij,rj->r", X, S, X)
    total = np.zeros(200)
    for _ in range(50):
        total += np.einsum("ri,ij,rj->r", X, Qcl, X)
        delta = rng.uniform(-1.0, 1.0, size=200)
        w = delta * (X @ E1t.T)[:, 0]
        X = X @ Acl.T + np.outer(w, usys.H[:, 0])
    assert np.all(total < bounds)
