"""SMO solver for the box- and equality-constrained SVM dual.

The problem is ``min 1/2 a^T G a - sum(a)`` subject to ``y^T a = 0`` and
``0 <= a <= C`` where ``G`` already carries the ``y_i y_j`` factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# curvature floor; flatter pairs take a bound step
TAU = 1e-12
# margin for calling a coefficient free when recovering the bias
FREE_TOL = 1e-8


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class DualProblem:
    G: np.ndarray
    y: np.ndarray
    C: float
    tol: float = 1e-3

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        N = len(self.y)
        if self.G.shape != (N, N):
            raise ValueError(f"G has shape {self.G.shape}, expected {(N, N)}")
        if N < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if np.all(self.y == self.y[0]):
            raise ValueError("all labels are identical")
        if np.max(np.abs(self.G - self.G.T)) > 1e-10 * max(1.0, np.max(np.abs(self.G))):
            raise ValueError("G is not symmetric")
        if self.C < 0:
            raise ValueError("C must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def objective(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(0.5 * alpha @ self.G @ alpha - alpha.sum())


@dataclass
class DualSolution:
    alpha: np.ndarray
    b: float
    iterations: int
    max_kkt_violation: float
    converged: bool = True


def _bias(p: DualProblem, alpha: np.ndarray, grad: np.ndarray) -> float:
    # free vectors satisfy g_t + y_t b = 0
    yg = -p.y * grad
    free = (alpha > FREE_TOL) & (alpha < p.C - FREE_TOL)
    if np.any(free):
        return float(np.mean(yg[free]))
    at_zero = alpha <= FREE_TOL
    pos = p.y > 0
    lower = yg[(at_zero & pos) | (~at_zero & ~pos)]
    upper = yg[(at_zero & ~pos) | (~at_zero & pos)]
    lo = lower.max() if lower.size else None
    hi = upper.min() if upper.size else None
    if lo is None and hi is None:
        return 0.0
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2)


def solve_dual(p: DualProblem, max_passes: int = 1000, alpha0=None, debug: bool = False) -> DualSolution:
    """SMO with maximal-violating-pair selection (lowest index on ties).

    Stops when the pairwise KKT gap drops below ``p.tol``. ``max_passes``
    bounds the number of pair updates at ``max_passes * N``; on exhaustion
    a ``ConvergenceWarning`` is issued and the last iterate is returned.
    ``alpha0`` optionally warm-starts from a feasible point.
    """
    N = len(p.y)
    if p.C == 0:
        return DualSolution(np.zeros(N), 0.0, 0, 0.0)
    G, y, C = p.G, p.y, p.C
    alpha = np.zeros(N) if alpha0 is None else np.clip(np.array(alpha0, dtype=float), 0.0, C)
    grad = G @ alpha - 1.0
    obj = p.objective(alpha) if debug else None
    budget = max_passes * N
    it = 0
    converged = False
    pos = y > 0
    neg_y = -y
    while it < budget:
        yg = neg_y * grad
        below, above = alpha < C, alpha > 0
        up_score = np.where((pos & below) | (~pos & above), yg, -np.inf)
        low_score = np.where((pos & above) | (~pos & below), yg, np.inf)
        i = int(up_score.argmax())
        j = int(low_score.argmin())
        gap = up_score[i] - low_score[j]
        if not gap >= p.tol:  # also catches inf - inf when a side is empty
            converged = True
            break
        gap = float(gap)
        ai, aj = float(alpha[i]), float(alpha[j])
        curv = float(G[i, i] + G[j, j] - 2 * y[i] * y[j] * G[i, j])
        room_i = C - ai if pos[i] else ai
        room_j = aj if pos[j] else C - aj
        step = min(room_i, room_j, gap / max(curv, TAU))
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        # snap to the box to keep feasibility exact at the bounds
        for t, room in ((i, room_i), (j, room_j)):
            if step == room:
                alpha[t] = C if alpha[t] > C / 2 else 0.0
        grad += step * (y[i] * G[:, i] - y[j] * G[:, j])
        it += 1
        if debug:
            new = p.objective(alpha)
            assert new <= obj + 1e-12 * max(1.0, abs(obj)), "dual objective increased"
            obj = new
    if not converged:
        warnings.warn(f"SMO did not converge in {budget} pair updates", ConvergenceWarning, stacklevel=2)
    b = _bias(p, alpha, grad)
    sol = DualSolution(alpha, b, it, 0.0, converged)
    sol.max_kkt_violation = kkt_report(p, sol).max
    return sol


@dataclass
class KKTReport:
    violation: np.ndarray
    max: float


def kkt_report(p: DualProblem, s: DualSolution, feas_tol: float = 1e-8) -> KKTReport:
    """Per-sample KKT residuals of ``s`` at its own bias.

    With ``m_t = g_t + y_t b`` (the functional margin minus one), lower-bound
    points need ``m_t >= 0``, upper-bound points ``m_t <= 0`` and free points
    ``m_t = 0``.
    """
    alpha = np.asarray(s.alpha, dtype=float)
    if np.any(alpha < -feas_tol) or np.any(alpha > p.C + feas_tol):
        raise ValueError("solution violates the box constraint")
    if abs(alpha @ p.y) > feas_tol * max(1.0, p.C):
        raise ValueError("solution violates the equality constraint")
    if p.C == 0:
        return KKTReport(np.zeros(len(alpha)), 0.0)
    margin = p.G @ alpha - 1.0 + p.y * s.b
    lower = alpha <= FREE_TOL
    upper = alpha >= p.C - FREE_TOL
    v = np.abs(margin)
    v[lower] = np.maximum(0.0, -margin[lower])
    v[upper & ~lower] = np.maximum(0.0, margin[upper & ~lower])
    return KKTReport(v, float(v.max()))
