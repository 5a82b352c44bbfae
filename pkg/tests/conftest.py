"""Shared fixtures: the reference plant and its synthesized controller.

Everything expensive (stationary synthesis, tightening tables, the plan
at the documented initial state) is built once per session; individual
tests treat these objects as read-only.
"""

import numpy as np
import pytest

from gcmpc.controller import build_controller
from gcmpc.reference import EPS_REF, N_REF, X0_REF, reference_system
from gcmpc.riccati import gcc_solve_infinite


@pytest.fixture(scope="session")
def refsys():
    return reference_system()


@pytest.fixture(scope="session")
def gcc_ref(refsys):
    usys, weights, _ = refsys
    return gcc_solve_infinite(usys, weights, EPS_REF)


@pytest.fixture(scope="session")
def ctrl_ref(refsys):
    usys, weights, constraints = refsys
    return build_controller(usys, weights, constraints, N_REF, eps=EPS_REF)


@pytest.fixture(scope="session")
def plan_ref(ctrl_ref):
    return ctrl_ref.plan(np.asarray(X0_REF))
