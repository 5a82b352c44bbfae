import numpy as np
import pytest

from gcmpc.problemfile import (ProblemFormatError, build_from_problem,
                               load_problem, parse_problem)
from gcmpc.reference import (EPS_REF, KTILDE_REF, N_REF, X0_REF,
                             reference_problem, reference_problem_text,
                             reference_system)

MINIMAL = """\
F:
  1.0 1.0
  0.0 1.0
G:
  0.0
  1.0
H:
  0.0
  0.1
E1: 1.0 0.0
E2: 0.5
Q:
  1.0 0.0
  0.0 1.0
R: 0.1
A:
  1.0 0.0
  -1.0 0.0
B:
  0.0
  0.0
c: -5.0 -5.0
N: 8
"""


def test_reference_problem_round_trips(refsys):
    usys, weights, cons = refsys
    prob = reference_problem()
    np.testing.assert_array_equal(prob.usys.F, usys.F)
    np.testing.assert_array_equal(prob.usys.G, usys.G)
    np.testing.assert_array_equal(prob.usys.H, usys.H)
    np.testing.assert_array_equal(prob.usys.E1, usys.E1)
    np.testing.assert_array_equal(prob.usys.E2, usys.E2)
    np.testing.assert_array_equal(prob.weights.Q, weights.Q)
    np.testing.assert_array_equal(prob.weights.R, weights.R)
    np.testing.assert_array_equal(prob.constraints.A, cons.A)
    np.testing.assert_array_equal(prob.constraints.B, cons.B)
    np.testing.assert_array_equal(prob.constraints.c, cons.c)
    assert prob.N == N_REF
    assert prob.eps == EPS_REF
    np.testing.assert_array_equal(prob.x0, X0_REF)
    assert prob.tube == "deadbeat" and prob.rho_variant == "e1"
    assert prob.sim_config().steps == 20


def test_minimal_problem_defaults():
    prob = parse_problem(MINIMAL)
    assert prob.eps is None and prob.x0 is None and prob.Ktilde is None
    assert prob.N == 8
    assert prob.weights.P_N is not None        # defaults to Q
    np.testing.assert_array_equal(prob.weights.P_N, prob.weights.Q)
    assert prob.sim_steps == 20 and prob.sim_mode == "interval"


def test_load_problem_is_parse_of_file_text(tmp_path):
    path = tmp_path / "prob.txt"
    path.write_text(reference_problem_text())
    prob = load_problem(path)
    assert prob.N == N_REF


def _expect_error(text, fragment, line=None):
    with pytest.raises(ProblemFormatError) as exc:
        parse_problem(text)
    assert fragment in str(exc.value)
    if line is not None:
        assert exc.value.line == line
        assert "line %d" % line in str(exc.value)


def test_parse_error_reporting():
    _expect_error(MINIMAL + "N: 9\n", "duplicate key", line=24)
    _expect_error(MINIMAL + "banana: 1\n", "unknown key", line=24)
    _expect_error("  1.0 2.0\n" + MINIMAL, "outside any block", line=1)
    _expect_error(MINIMAL.replace("  0.0 1.0\n", "  0.0 1.0 7.0\n", 1),
                  "ragged")
    _expect_error(MINIMAL.replace("E1: 1.0 0.0\n", ""), "missing required")
    _expect_error(MINIMAL.replace("N: 8", "N: eight"), "as int")
    _expect_error(MINIMAL.replace("R: 0.1", "R: 0.1x"), "as a number")
    _expect_error(MINIMAL.replace("N: 8", "N: 0"), "at least 1")
    _expect_error(MINIMAL + "epsilon: -0.5\n", "positive", line=24)
    _expect_error(MINIMAL + "x0: 1.0 2.0 3.0\n", "expected 2", line=24)
    _expect_error(MINIMAL + "Ktilde:\n  1.0 1.0 1.0\n", "expected (1, 2)")
    _expect_error(MINIMAL + "sim_steps: 0\n", "at least 1")
    _expect_error(MINIMAL + "tube: fancy\n", "must be one of")
    _expect_error(MINIMAL.replace("N: 8", "N"), "expected 'KEY:'")


def test_dimension_cross_checks_come_from_model_types():
    # G with the wrong row count must surface as a format error, not a
    # bare numpy failure deep inside synthesis
    bad = MINIMAL.replace("G:\n  0.0\n  1.0\n", "G:\n  0.0\n")
    with pytest.raises(ProblemFormatError):
        parse_problem(bad)


def test_ktilde_file_semantics():
    withk = MINIMAL + "Ktilde: 0.9 1.3\n"
    prob = parse_problem(withk)
    np.testing.assert_array_equal(prob.Ktilde, [[0.9, 1.3]])
    # a Ktilde entry wins by default
    ctrl = build_from_problem(prob, eps=1.0, N=2)
    np.testing.assert_array_equal(ctrl.tube.Ktilde, [[0.9, 1.3]])
    # explicit override goes back to the deadbeat construction
    ctrl2 = build_from_problem(prob, eps=1.0, N=2, tube="deadbeat")
    assert not np.array_equal(ctrl2.tube.Ktilde, [[0.9, 1.3]])
    # asking for the file gain without one is an error
    with pytest.raises(ValueError, match="Ktilde"):
        build_from_problem(parse_problem(MINIMAL), eps=1.0, N=2, tube="file")


def test_build_from_problem_reference(ctrl_ref):
    ctrl = build_from_problem(reference_problem())
    assert ctrl.N == N_REF
    assert ctrl.gcc.eps == EPS_REF
    np.testing.assert_allclose(ctrl.tube.Ktilde, KTILDE_REF, atol=1e-12)
    np.testing.assert_allclose(ctrl.gcc.S, ctrl_ref.gcc.S, atol=1e-10)


def test_comments_and_blank_lines_are_ignored():
    noisy = "# leading comment\n\n" + MINIMAL.replace(
        "N: 8", "N: 8   # trailing comment")
    prob = parse_problem(noisy)
    assert prob.N == 8
