"""The bundled reference problem and its expected synthesis results.

A three-state, two-input plant with a single uncertainty channel and a
unit-box state constraint.  The synthesis outcome for this plant is known
to four significant figures (tabulated below), which makes it useful as a
regression anchor: tests and the `reproduce-paper` CLI command rebuild
everything from the raw matrices and compare against these targets.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import CostWeights, NominalSystem, StageConstraints, UncertainSystem, UncertaintyStructure
from .problemfile import parse_problem

__all__ = [
    "N_REF",
    "EPS_REF",
    "EPS_INTERVAL_HI_REF",
    "X0_REF",
    "S_REF",
    "K_REF",
    "RBAR_REF",
    "KTILDE_REF",
    "reference_system",
    "reference_problem_text",
    "reference_problem",
]

N_REF = 10
EPS_REF = 0.0180
EPS_INTERVAL_HI_REF = 0.0220  # feasible eps interval is (0, this)
X0_REF = np.array([1.0, 1.0, 1.0])

# expected stationary synthesis at eps = EPS_REF (4 significant figures)
S_REF = np.array([
    [31.4751, -0.9359, -20.6124],
    [-0.9359, 5.7340, -1.3900],
    [-20.6124, -1.3900, 16.5017],
])
K_REF = np.array([
    [1.1801, 0.2151, -0.5076],
    [0.7401, -0.8385, 0.5162],
])
RBAR_REF = np.array([
    [123.22, 133.78],
    [133.78, 197.26],
])
# deadbeat tube gain (nilpotency index 2)
KTILDE_REF = np.array([
    [11.5, -6.0, -6.0],
    [1.1, 0.0, 0.0],
])


def reference_system():
    """Build (usys, weights, constraints) for the reference plant."""
    F = np.array([
        [1.1, 0.0, 0.0],
        [0.0, 0.0, 1.2],
        [-1.0, 1.0, 0.0],
    ])
    G = np.array([
        [0.0, 1.0],
        [1.0, 1.0],
        [-1.0, 0.0],
    ])
    H = np.array([[0.7], [0.5], [-0.7]])
    E1 = np.array([[0.4, 0.5, -0.6]])
    E2 = np.array([[0.4, -0.4]])

    usys = UncertainSystem(
        nominal=NominalSystem(F=F, G=G),
        uncertainty=UncertaintyStructure(H=H, E1=E1, E2=E2),
    )
    weights = CostWeights(Q=np.eye(3), R=np.eye(2))
    # unit box on each state coordinate, inputs unconstrained
    A = np.zeros((6, 3))
    for i in range(3):
        A[2 * i, i] = 1.0
        A[2 * i + 1, i] = -1.0
    constraints = StageConstraints(A=A, B=np.zeros((6, 2)), c=-np.ones(6))
    return usys, weights, constraints


def reference_problem_text():
    """The packaged problem file, as text."""
    return resources.files("gcmpc").joinpath("data/reference_problem.prob").read_text()


def reference_problem():
    """The packaged problem file, parsed."""
    return parse_problem(reference_problem_text())
