"""Riccati machinery: nominal LQR and the guaranteed-cost (GCC) design.

The GCC design picks a scalar eps > 0 and solves a modified discrete
Riccati fixed point whose stabilizing solution S certifies

    x' S x  >=  worst-case infinite-horizon cost from x

for every admissible contraction Delta.  The modification replaces the
cost and transition data with

    Q_eps = Q + (1/eps) E1'E1,   R_eps = R + (1/eps) E2'E2,
    N_eps = (1/eps) E1'E2,       X = (S^{-1} - eps H H')^{-1},

where the inverse on X exists iff  (1/eps) I - H'SH > 0.  That positivity
is exactly the feasibility condition for eps; it fails for all eps above
a system-dependent threshold, which `gcc_epsilon_interval` brackets by
bisection.  X is always formed through the rank-p correction

    X = S + S H ((1/eps) I - H'SH)^{-1} H' S,

never by inverting S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GccInfeasible",
    "GccNoConvergence",
    "NoFeasibleEpsilon",
    "LqrSolution",
    "GccSolution",
    "EpsilonInterval",
    "GccCheck",
    "lqr_backward",
    "gcc_riccati_map",
    "gcc_solve_infinite",
    "gcc_epsilon_interval",
    "gcc_select_epsilon",
    "verify_gcc",
]


class GccInfeasible(Exception):
    """eps violates (1/eps) I - H'SH > 0 somewhere along the fixed point."""

    def __init__(self, eps, margin):
        self.eps = eps
        self.margin = margin
        super().__init__(
            "eps = %.6g infeasible: min eig of (1/eps)I - H'SH is %.3e" % (eps, margin)
        )


class GccNoConvergence(Exception):
    """The fixed-point iteration diverged or ran out of iterations."""

    def __init__(self, eps, iterations, note):
        self.eps = eps
        self.iterations = iterations
        super().__init__("no convergence at eps = %.6g after %d iterations (%s)"
                         % (eps, iterations, note))


class NoFeasibleEpsilon(Exception):
    """No eps > 0 admits a bounded guaranteed-cost solution."""


@dataclass(frozen=True)
class LqrSolution:
    """Finite-horizon LQR sweep: gains[k] for u[k] = -gains[k] x[k]."""

    gains: tuple
    costs: tuple

    @property
    def horizon(self):
        return len(self.gains)


@dataclass(frozen=True)
class GccSolution:
    """Stationary guaranteed-cost design at a fixed eps.

    S is the certificate matrix, X its rank-p inflation, K the state
    feedback (u = -Kx), and Rbar = Reps + G'XG the input-space weight
    that prices deviations from the feedback law.  Qeps, Reps, Neps are
    the uncertainty-augmented stage weights the design ran with.
    """

    eps: float
    S: np.ndarray
    X: np.ndarray
    K: np.ndarray
    Rbar: np.ndarray
    Qeps: np.ndarray
    Reps: np.ndarray
    Neps: np.ndarray
    iterations: int


@dataclass(frozen=True)
class EpsilonInterval:
    """Feasible eps values form the open interval (0, hi)."""

    lo: float
    hi: float
    probes: int

    def contains(self, eps):
        return self.lo < eps < self.hi


@dataclass(frozen=True)
class GccCheck:
    passed: bool
    worst_slack: float
    band: float
    n_samples: int


def _terminal(weights):
    return weights.P_N


def lqr_backward(sys, weights, N):
    """Backward Riccati sweep for the nominal system; returns gains and
    cost-to-go matrices (costs[N] is the terminal weight)."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    P = _terminal(weights)
    costs = [P]
    gains = []
    F, G = sys.F, sys.G
    for _ in range(N):
        GP = G.T @ P
        K = np.linalg.solve(weights.R + GP @ G, GP @ F)
        Fcl = F - G @ K
        P = weights.Q + K.T @ weights.R @ K + Fcl.T @ P @ Fcl
        P = 0.5 * (P + P.T)
        gains.append(K)
        costs.append(P)
    gains.reverse()
    costs.reverse()
    return LqrSolution(gains=tuple(gains), costs=tuple(costs))


def _feasibility_matrix(usys, S, eps):
    H = usys.H
    return np.eye(usys.p) / eps - H.T @ S @ H


def _eps_weights(usys, weights, eps):
    eps_inv = 1.0 / eps
    Qe = weights.Q + eps_inv * (usys.E1.T @ usys.E1)
    Re = weights.R + eps_inv * (usys.E2.T @ usys.E2)
    Ne = eps_inv * (usys.E1.T @ usys.E2)
    return Qe, Re, Ne


def gcc_riccati_map(usys, weights, S, eps):
    """One application of the guaranteed-cost Riccati operator.

    Returns (S_next, X, K).  Raises GccInfeasible when the rank-p
    correction that defines X does not exist for this (S, eps) pair.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    F, G = usys.F, usys.G

    M = _feasibility_matrix(usys, S, eps)
    if usys.p:
        wmin = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        if wmin <= 1e-9 * max(1.0, 1.0 / eps):
            raise GccInfeasible(eps, wmin)
        SH = S @ usys.H
        X = S + SH @ np.linalg.solve(0.5 * (M + M.T), SH.T)
    else:
        X = S.copy()
    X = 0.5 * (X + X.T)

    Qe, Re, Ne = _eps_weights(usys, weights, eps)
    Rbar = Re + G.T @ X @ G
    Rbar = 0.5 * (Rbar + Rbar.T)
    K = np.linalg.solve(Rbar, G.T @ X @ F + Ne.T)

    W = F.T @ X @ G + Ne
    S_next = F.T @ X @ F + Qe - W @ np.linalg.solve(Rbar, W.T)
    S_next = 0.5 * (S_next + S_next.T)
    return S_next, X, K


def gcc_solve_infinite(usys, weights, eps, tol=1e-10, max_iter=10000):
    """Stationary solution of the guaranteed-cost Riccati fixed point.

    Iterates from S = Q.  Raises GccInfeasible if eps is out of range and
    GccNoConvergence if the iteration diverges or stalls.
    """
    S = weights.Q.copy()
    blowup = 1e12 * (1.0 + np.abs(weights.Q).max())
    for it in range(1, max_iter + 1):
        S_next, X, K = gcc_riccati_map(usys, weights, S, eps)
        delta = np.abs(S_next - S).max()
        scale = 1.0 + np.abs(S_next).max()
        S = S_next
        if np.abs(S).max() > blowup:
            raise GccNoConvergence(eps, it, "iterates diverged")
        if delta <= tol * scale:
            Qe, Re, Ne = _eps_weights(usys, weights, eps)
            Rbar = Re + usys.G.T @ X @ usys.G
            Rbar = 0.5 * (Rbar + Rbar.T)
            return GccSolution(eps=float(eps), S=S, X=X, K=K, Rbar=Rbar,
                               Qeps=Qe, Reps=Re, Neps=Ne, iterations=it)
    raise GccNoConvergence(eps, max_iter, "tolerance not reached")


def _eps_feasible(usys, weights, eps, cache):
    if eps in cache:
        return cache[eps] is not None
    try:
        cache[eps] = gcc_solve_infinite(usys, weights, eps)
    except (GccInfeasible, GccNoConvergence):
        cache[eps] = None
    return cache[eps] is not None


def gcc_epsilon_interval(usys, weights, resolution=1e-4):
    """Bracket the upper endpoint of the feasible interval (0, hi).

    `hi` is certified feasible and hi * (1 + resolution) certified
    infeasible.  A degenerate uncertainty channel (H'QH singularly zero)
    leaves eps unconstrained and yields hi = inf.
    """
    HQH = usys.H.T @ weights.Q @ usys.H
    cap = float(np.linalg.eigvalsh(HQH).max()) if usys.p else 0.0
    if cap <= 0.0:
        return EpsilonInterval(lo=0.0, hi=np.inf, probes=0)

    cache = {}
    # S >= Q at any fixed point, so eps >= 1/lambda_max(H'QH) is never feasible.
    hi_bad = 1.0 / cap
    t = hi_bad
    feas = None
    for _ in range(80):
        t *= 0.5
        if _eps_feasible(usys, weights, t, cache):
            feas = t
            break
        hi_bad = t
    if feas is None:
        raise NoFeasibleEpsilon("no feasible eps found above %.3e" % t)

    lo_f, hi_f = feas, hi_bad
    while hi_f - lo_f > resolution * lo_f:
        mid = 0.5 * (lo_f + hi_f)
        if _eps_feasible(usys, weights, mid, cache):
            lo_f = mid
        else:
            hi_f = mid
    return EpsilonInterval(lo=0.0, hi=lo_f, probes=len(cache))


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def gcc_select_epsilon(usys, weights, criterion="trace", x0=None,
                       interval=None, rel_tol=1e-6):
    """Pick eps inside the feasible interval by golden-section search.

    criterion "trace" minimizes trace(S); "state" minimizes x0'S x0 and
    requires x0.  Returns (eps_star, GccSolution at eps_star).
    """
    if criterion not in ("trace", "state"):
        raise ValueError("criterion must be 'trace' or 'state'")
    if criterion == "state":
        if x0 is None:
            raise ValueError("criterion 'state' needs x0")
        x0 = np.asarray(x0, dtype=float)

    if interval is None:
        interval = gcc_epsilon_interval(usys, weights)
    if not np.isfinite(interval.hi):
        raise ValueError("feasible interval is unbounded; pick eps explicitly")

    sols = {}

    def objective(eps):
        if eps not in sols:
            try:
                sols[eps] = gcc_solve_infinite(usys, weights, eps)
            except (GccInfeasible, GccNoConvergence):
                sols[eps] = None
        sol = sols[eps]
        if sol is None:
            return np.inf
        if criterion == "trace":
            return float(np.trace(sol.S))
        return float(x0 @ sol.S @ x0)

    a = interval.lo if interval.lo > 0.0 else interval.hi * 1e-6
    b = interval.hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(200):
        if b - a <= rel_tol * b:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = objective(x2)
    best = min((eps for eps, s in sols.items() if s is not None),
               key=objective, default=None)
    if best is None:
        raise NoFeasibleEpsilon("golden-section search found no feasible eps")
    return best, sols[best]


def verify_gcc(usys, weights, sol, n_samples=1000, seed=0, band=None):
    """Sample admissible contractions and check the certificate inequality

        (F - GK + H Delta (E1 - E2 K))' S (...)  + Q + K'RK  <=  S.

    The slack matrix is rank-deficient by construction, so its largest
    eigenvalue sits at zero (up to roundoff) for every admissible Delta;
    `band` sets the tolerance and defaults to 1e-7 * (1 + ||S||_2).
    """
    S, K = sol.S, sol.K
    F, G, H = usys.F, usys.G, usys.H
    E1t = usys.E1 - usys.E2 @ K
    Fcl = F - G @ K
    base = weights.Q + K.T @ weights.R @ K - S
    if band is None:
        band = 1e-7 * (1.0 + float(np.linalg.norm(S, 2)))

    rng = np.random.default_rng(seed)
    worst = -np.inf
    for i in range(n_samples):
        D = rng.standard_normal((usys.p, usys.l))
        smax = np.linalg.norm(D, 2) if D.size else 0.0
        if smax > 0.0:
            D = D / smax
            if i % 2:  # interior sample
                D = D * rng.uniform(0.0, 1.0)
        Fd = Fcl + H @ D @ E1t
        slack = Fd.T @ S @ Fd + base
        top = float(np.linalg.eigvalsh(0.5 * (slack + slack.T)).max())
        worst = max(worst, top)
    return GccCheck(passed=worst <= band, worst_slack=worst, band=band,
                    n_samples=n_samples)
