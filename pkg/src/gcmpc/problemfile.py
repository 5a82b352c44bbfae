"""Plain-text problem definitions.

A problem file is line oriented:  `KEY: payload` puts a scalar, word, or
single row on one line, while `KEY:` with nothing after the colon opens a
block whose indented lines are matrix rows.  '#' starts a comment, blank
lines are ignored, keys may appear once.

    # double integrator with an uncertain input channel
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
    epsilon: 0.05
    x0: 2.0 0.0

Required keys: F G H E1 E2 Q R A B c N.  Optional: P_N, epsilon, x0,
Ktilde, tube (deadbeat|gcc), rho_variant (e1|e1tilde), sim_steps,
sim_seed, sim_mode (interval|sphere|boundary-worst).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .model import CostWeights, NominalSystem, StageConstraints, UncertainSystem, UncertaintyStructure
from .sim import SimConfig

__all__ = [
    "ProblemFormatError",
    "ProblemDefinition",
    "parse_problem",
    "load_problem",
    "build_from_problem",
]

_MATRIX_KEYS = ("F", "G", "H", "E1", "E2", "Q", "R", "P_N", "A", "B", "Ktilde")
_VECTOR_KEYS = ("c", "x0")
_INT_KEYS = ("N", "sim_steps", "sim_seed")
_FLOAT_KEYS = ("epsilon",)
_WORD_KEYS = {"tube": ("deadbeat", "gcc"),
              "rho_variant": ("e1", "e1tilde"),
              "sim_mode": ("interval", "sphere", "boundary-worst")}
_REQUIRED = ("F", "G", "H", "E1", "E2", "Q", "R", "A", "B", "c", "N")

_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$")


class ProblemFormatError(Exception):
    """Problem text rejected; carries the offending line number (or None
    for whole-file problems such as missing keys)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


@dataclass(frozen=True)
class ProblemDefinition:
    usys: UncertainSystem
    weights: CostWeights
    constraints: StageConstraints
    N: int
    eps: float = None
    x0: np.ndarray = None
    Ktilde: np.ndarray = None
    tube: str = "deadbeat"
    rho_variant: str = "e1"
    sim_steps: int = 20
    sim_seed: int = 0
    sim_mode: str = "interval"

    def sim_config(self):
        return SimConfig(steps=self.sim_steps, mode=self.sim_mode,
                         seed=self.sim_seed)


def _parse_row(payload, line_no):
    toks = payload.split()
    row = []
    for t in toks:
        try:
            row.append(float(t))
        except ValueError:
            raise ProblemFormatError("cannot parse %r as a number" % t, line_no)
    return row


def _scan(text):
    """First pass: key -> (payload rows, line number) with format checks."""
    entries = {}
    block_key = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0] in " \t":
            if block_key is None:
                raise ProblemFormatError("indented row outside any block", ln)
            entries[block_key][0].append(_parse_row(line, ln))
            continue
        mo = _KEY_RE.match(line)
        if mo is None:
            raise ProblemFormatError("expected 'KEY:' or 'KEY: payload'", ln)
        key, payload = mo.group(1), mo.group(2).strip()
        if key in entries:
            raise ProblemFormatError("duplicate key %r" % key, ln)
        known = (key in _MATRIX_KEYS or key in _VECTOR_KEYS or key in _INT_KEYS
                 or key in _FLOAT_KEYS or key in _WORD_KEYS)
        if not known:
            raise ProblemFormatError("unknown key %r" % key, ln)
        if payload:
            entries[key] = ([payload], ln)
            block_key = None
        else:
            entries[key] = ([], ln)
            block_key = key
    return entries


def _matrix(entries, key):
    rows, ln = entries[key]
    if not rows:
        raise ProblemFormatError("key %r has no rows" % key, ln)
    if isinstance(rows[0], str):  # inline single row
        rows = [_parse_row(rows[0], ln)]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ProblemFormatError("ragged rows under key %r" % key, ln)
    if width == 0:
        raise ProblemFormatError("key %r has empty rows" % key, ln)
    return np.array(rows, dtype=float)


def _vector(entries, key):
    return _matrix(entries, key).ravel()


def _scalar(entries, key, conv, kind):
    rows, ln = entries[key]
    if len(rows) != 1 or not isinstance(rows[0], str) or len(rows[0].split()) != 1:
        raise ProblemFormatError("key %r expects a single inline %s" % (key, kind), ln)
    try:
        return conv(rows[0])
    except ValueError:
        raise ProblemFormatError("cannot parse %r as %s" % (rows[0], kind), ln)


def _word(entries, key):
    rows, ln = entries[key]
    if len(rows) != 1 or not isinstance(rows[0], str):
        raise ProblemFormatError("key %r expects a single word" % key, ln)
    word = rows[0]
    if word not in _WORD_KEYS[key]:
        raise ProblemFormatError("key %r must be one of %s, got %r"
                                 % (key, _WORD_KEYS[key], word), ln)
    return word


def parse_problem(text):
    entries = _scan(text)
    missing = [k for k in _REQUIRED if k not in entries]
    if missing:
        raise ProblemFormatError("missing required keys: %s" % ", ".join(missing))

    mats = {k: _matrix(entries, k) for k in _MATRIX_KEYS if k in entries}
    try:
        nominal = NominalSystem(F=mats["F"], G=mats["G"])
        unc = UncertaintyStructure(H=mats["H"], E1=mats["E1"], E2=mats["E2"])
        usys = UncertainSystem(nominal=nominal, uncertainty=unc)
        weights = CostWeights(Q=mats["Q"], R=mats["R"], P_N=mats.get("P_N"))
        constraints = StageConstraints(A=mats["A"], B=mats["B"],
                                       c=_vector(entries, "c"))
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from exc

    N = _scalar(entries, "N", int, "integer")
    if N < 1:
        raise ProblemFormatError("N must be at least 1", entries["N"][1])

    kw = {}
    if "epsilon" in entries:
        kw["eps"] = _scalar(entries, "epsilon", float, "number")
        if kw["eps"] <= 0.0:
            raise ProblemFormatError("epsilon must be positive", entries["epsilon"][1])
    if "x0" in entries:
        x0 = _vector(entries, "x0")
        if x0.shape != (usys.n,):
            raise ProblemFormatError("x0 has %d entries, expected %d"
                                     % (x0.shape[0], usys.n), entries["x0"][1])
        kw["x0"] = x0
    if "Ktilde" in entries:
        Kt = mats["Ktilde"]
        if Kt.shape != (usys.m, usys.n):
            raise ProblemFormatError("Ktilde has shape %s, expected (%d, %d)"
                                     % (Kt.shape, usys.m, usys.n),
                                     entries["Ktilde"][1])
        kw["Ktilde"] = Kt
    for key in _WORD_KEYS:
        if key in entries:
            kw[key] = _word(entries, key)
    for key in ("sim_steps", "sim_seed"):
        if key in entries:
            kw[key] = _scalar(entries, key, int, "integer")
    if "sim_steps" in kw and kw["sim_steps"] < 1:
        raise ProblemFormatError("sim_steps must be at least 1",
                                 entries["sim_steps"][1])

    return ProblemDefinition(usys=usys, weights=weights, constraints=constraints,
                             N=N, **kw)


def load_problem(path):
    with open(path, "r") as fh:
        return parse_problem(fh.read())


def build_from_problem(prob, eps=None, N=None, tube=None, rho_variant=None,
                       tol=1e-8, max_iter=200):
    """Construct the guaranteed-cost controller a problem file describes.

    Explicit arguments override file values; tube "file" selects the
    Ktilde matrix from the problem file.
    """
    from .controller import build_controller
    from .tightening import TubeGain

    eps = prob.eps if eps is None else eps
    N = prob.N if N is None else N
    rho_variant = prob.rho_variant if rho_variant is None else rho_variant
    if tube is None:
        # a Ktilde entry in the file wins unless the caller overrides
        tube = "file" if prob.Ktilde is not None else prob.tube
    if tube == "file":
        if prob.Ktilde is None:
            raise ValueError("tube 'file' needs a Ktilde entry in the problem")
        tube = TubeGain.from_gain(prob.usys.nominal, prob.Ktilde)
    return build_controller(prob.usys, prob.weights, prob.constraints, N,
                            eps=eps, tube=tube, rho_variant=rho_variant,
                            tol=tol, max_iter=max_iter)
