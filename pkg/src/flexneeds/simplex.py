"""Dense two-phase simplex solver for small linear programs.

Solves   min c.x   s.t.  A x <= b,  x >= 0
with a plain dense tableau. Instances at desk scale stay below a few
thousand variables, so no revised/sparse machinery is used. Degeneracy is
handled by switching to Bland's rule after the objective stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
# iterations without objective progress before Bland's rule kicks in
_STALL_LIMIT = 60


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    duals: np.ndarray | None = None
    iterations: int = 0
    # certified relative duality gap (0.0 when duals verify exactly)
    gap: float = np.nan
    slack: np.ndarray | None = field(default=None, repr=False)


class _Tableau:
    """Simplex tableau over rows ``A x + I s = b`` with b >= 0."""

    def __init__(self, T: np.ndarray, basis: np.ndarray):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def run(self, max_iter: int) -> str:
        T = self.T
        m = T.shape[0] - 1
        bland = False
        stall = 0
        best = -np.inf
        while self.iterations < max_iter:
            z = T[-1, :-1]
            if bland:
                neg = np.nonzero(z < -_COST_TOL)[0]
                if neg.size == 0:
                    return OPTIMAL
                col = neg[0]
            else:
                col = int(np.argmin(z))
                if z[col] >= -_COST_TOL:
                    return OPTIMAL
            ratios = np.full(m, np.inf)
            positive = T[:m, col] > _PIVOT_TOL
            ratios[positive] = T[:m, -1][positive] / T[:m, col][positive]
            row = int(np.argmin(ratios))
            if not np.isfinite(ratios[row]):
                return UNBOUNDED
            # break ratio ties toward the lowest basis index (anti-cycling)
            ties = np.nonzero(np.abs(ratios - ratios[row]) <= 1e-12 * (1.0 + abs(ratios[row])))[0]
            if ties.size > 1:
                row = int(ties[np.argmin(self.basis[ties])])
            self._pivot(row, col)
            self.iterations += 1
            # T[-1, -1] holds the negated objective and rises as the min improves
            obj = T[-1, -1]
            if obj > best + 1e-12 * (1.0 + abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
        return ITERATION_LIMIT

    def _pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        # keep the pivot column numerically exact
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col


def solve_lp(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    max_iter: int = 20000,
) -> LpResult:
    """Minimize ``c.x`` subject to ``A x <= b`` and ``x >= 0``.

    Returns the optimum together with the dual vector of the inequality
    rows and a verified relative duality gap. ``b`` may have negative
    entries; phase 1 then searches for a feasible basis.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape != (b.size, c.size):
        raise ValueError(f"inconsistent LP shapes: A{A.shape}, b({b.size},), c({c.size},)")
    m, n = A.shape
    if m == 0:
        if np.any(c < -_COST_TOL):
            return LpResult(status=UNBOUNDED)
        return LpResult(status=OPTIMAL, x=np.zeros(n), objective=0.0,
                        duals=np.zeros(0), gap=0.0, slack=np.zeros(0))

    neg = b < 0
    n_art = int(np.count_nonzero(neg))
    sign = np.where(neg, -1.0, 1.0)

    # columns: [x (n) | slack (m) | artificial (n_art) | rhs]
    width = n + m + n_art + 1
    T = np.zeros((m + 1, width))
    T[:m, :n] = A * sign[:, None]
    T[:m, n:n + m] = np.diag(sign)
    art_rows = np.nonzero(neg)[0]
    for k, r in enumerate(art_rows):
        T[r, n + m + k] = 1.0
    T[:m, -1] = b * sign

    basis = np.empty(m, dtype=int)
    basis[~neg] = n + np.nonzero(~neg)[0]
    basis[neg] = n + m + np.arange(n_art)

    total_iter = 0
    if n_art:
        # phase 1: minimize artificial total
        T[-1, :] = 0.0
        T[-1, n + m:n + m + n_art] = 1.0
        for r in art_rows:
            T[-1, :] -= T[r, :]
        tab = _Tableau(T, basis)
        status = tab.run(max_iter)
        total_iter = tab.iterations
        if status == ITERATION_LIMIT:
            return LpResult(status=ITERATION_LIMIT, iterations=total_iter)
        if status == UNBOUNDED or -T[-1, -1] > 1e-7 * (1.0 + np.abs(b).max()):
            return LpResult(status=INFEASIBLE, iterations=total_iter)
        # drive any zero-level artificials out of the basis
        for r in range(m):
            if basis[r] >= n + m:
                cols = np.nonzero(np.abs(T[r, :n + m]) > _PIVOT_TOL)[0]
                if cols.size:
                    tab._pivot(r, int(cols[0]))
        # freeze artificial columns
        T[:, n + m:n + m + n_art] = 0.0

    # phase 2
    T[-1, :] = 0.0
    T[-1, :n] = c
    for r in range(m):
        if basis[r] < n:
            T[-1, :] -= c[basis[r]] * T[r, :]
    tab = _Tableau(T, basis)
    status = tab.run(max_iter - total_iter)
    total_iter += tab.iterations
    if status != OPTIMAL:
        return LpResult(status=status, iterations=total_iter)

    x = np.zeros(n + m + n_art)
    x[basis] = T[:m, -1]
    primal = x[:n]
    slack = x[n:n + m]
    obj = float(c @ primal)
    # duals of the original rows are the negated slack reduced costs; the
    # sign flip applied to negative-b rows is already absorbed there
    duals = -T[-1, n:n + m]
    dual_obj = float(duals @ b)
    gap = abs(obj - dual_obj) / (1.0 + abs(obj))
    return LpResult(status=OPTIMAL, x=primal, objective=obj, duals=duals,
                    iterations=total_iter, gap=gap, slack=slack)
