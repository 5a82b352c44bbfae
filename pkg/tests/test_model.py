import numpy as np
import pytest

from gcmpc.model import (CostWeights, NominalSystem, StageConstraints,
                         Trajectory, UncertainSystem, UncertaintyStructure,
                         check_membership, eval_cost, step_nominal,
                         step_uncertain)


def test_nominal_step_reference_plant(refsys):
    usys, _, _ = refsys
    x = np.ones(3)
    np.testing.assert_allclose(step_nominal(usys.nominal, x, np.zeros(2)),
                               [1.1, 1.2, 0.0], atol=1e-15)
    np.testing.assert_allclose(step_nominal(usys.nominal, x, [1.0, 0.0]),
                               [1.1, 2.2, -1.0], atol=1e-15)


def test_uncertain_step_matches_hand_expansion(refsys):
    usys, _, _ = refsys
    x = np.ones(3)
    u = np.array([1.0, -1.0])
    # matched signal E1 x + E2 u = 0.3 + 0.8 = 1.1, through Delta = 1
    sig = usys.E1 @ x + usys.E2 @ u
    np.testing.assert_allclose(sig, [1.1], atol=1e-15)
    got = step_uncertain(usys, np.array([[1.0]]), x, u)
    want = usys.F @ x + usys.G @ u + usys.H[:, 0] * 1.1
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_zero_contraction_reduces_to_nominal(refsys):
    usys, _, _ = refsys
    rng = np.random.default_rng(11)
    Z = np.zeros((1, 1))
    for _ in range(100):
        x = rng.normal(size=3)
        u = rng.normal(size=2)
        np.testing.assert_allclose(step_uncertain(usys, Z, x, u),
                                   step_nominal(usys.nominal, x, u), atol=0.0)


def test_contraction_norm_guard(refsys):
    usys, _, _ = refsys
    x, u = np.ones(3), np.zeros(2)
    step_uncertain(usys, np.array([[1.0]]), x, u)        # boundary is fine
    step_uncertain(usys, np.array([[-1.0]]), x, u)
    with pytest.raises(ValueError, match="exceeds 1"):
        step_uncertain(usys, np.array([[1.0 + 1e-9]]), x, u)
    with pytest.raises(ValueError, match="shape"):
        step_uncertain(usys, np.zeros((2, 1)), x, u)


def test_uncertainty_requires_nonzero_H():
    with pytest.raises(ValueError, match="nonzero"):
        UncertaintyStructure(H=np.zeros((2, 1)), E1=np.ones((1, 2)),
                             E2=np.ones((1, 1)))


def test_dimension_checks():
    with pytest.raises(ValueError):
        NominalSystem(F=np.eye(2), G=np.ones((3, 1)))
    nominal = NominalSystem(F=np.eye(2), G=np.ones((2, 1)))
    unc = UncertaintyStructure(H=np.ones((3, 1)), E1=np.ones((1, 3)),
                               E2=np.ones((1, 1)))
    with pytest.raises(ValueError):
        UncertainSystem(nominal=nominal, uncertainty=unc)  # n mismatch (2 vs 3)


def test_cost_weights_validation():
    w = CostWeights(Q=np.eye(2), R=np.eye(1))
    np.testing.assert_array_equal(w.P_N, np.eye(2))  # defaults to Q
    with pytest.raises(ValueError):
        CostWeights(Q=np.eye(2), R=np.zeros((1, 1)))  # R must be PD
    with pytest.raises(ValueError):
        CostWeights(Q=np.array([[0.0, 1.0], [0.0, 0.0]]), R=np.eye(1))


def test_eval_cost_hand_value():
    w = CostWeights(Q=np.eye(2), R=2.0 * np.eye(1))
    traj = Trajectory(states=np.array([[1.0, 0.0], [0.0, 2.0]]),
                      inputs=np.array([[3.0]]))
    # 1 + 2*9 + terminal 4 = 23
    assert eval_cost(w, traj) == pytest.approx(23.0, abs=1e-12)


def test_trajectory_shape_guard():
    with pytest.raises(ValueError, match="one more row"):
        Trajectory(states=np.zeros((2, 2)), inputs=np.zeros((2, 1)))


def test_membership_and_boundary(refsys):
    _, _, cons = refsys
    ok, worst = check_membership(cons, np.ones(3), np.zeros(2))
    assert ok and worst == pytest.approx(0.0, abs=1e-15)  # on the box face
    ok, worst = check_membership(cons, np.array([1.5, 0.0, 0.0]), np.zeros(2))
    assert not ok and worst == pytest.approx(0.5, abs=1e-12)


def test_empty_polytope_rejected():
    # x <= -1 and x >= 1 simultaneously
    with pytest.raises(ValueError, match="empty"):
        StageConstraints(A=np.array([[1.0], [-1.0]]), B=np.zeros((2, 1)),
                         c=np.array([1.0, 1.0]))
