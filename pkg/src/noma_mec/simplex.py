"""Small dense LP solver: two-phase primal simplex with Bland's rule.

Solves  min c.x  s.t.  A x <= b,  lb <= x <= ub  (defaults lb = 0,
ub = +inf).  Bland's rule is used for both the entering and the leaving
variable, which rules out cycling on the degenerate time-sharing programs
this package generates.  Feasibility problems (``objective=None``) run
phase one only.

Intended for dense problems up to a few hundred variables and constraints;
callers are expected to scale rows to O(1) magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10
_MAX_PIVOTS = 100_000


@dataclass
class LpProblem:
    """``objective=None`` marks a pure feasibility problem."""

    objective: Optional[np.ndarray]
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None


@dataclass
class LpResult:
    status: str  # 'feasible' | 'infeasible' | 'unbounded'
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    duals: Optional[np.ndarray] = None  # multipliers of the a_ub rows (>= 0)
    slack: Optional[np.ndarray] = None


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and tableau[i, col] != 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _run_simplex(tableau: np.ndarray, basis: np.ndarray, costs: np.ndarray) -> str:
    """Bland-rule simplex on a tableau already in canonical form."""
    for _ in range(_MAX_PIVOTS):
        reduced = costs - costs[basis] @ tableau[:, :-1]
        entering = -1
        for j in range(reduced.shape[0]):
            if reduced[j] < -_COST_TOL and j not in basis:
                entering = j
                break
        if entering < 0:
            return "optimal"
        col = tableau[:, entering]
        rows = np.where(col > _PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = np.maximum(tableau[rows, -1], 0.0) / col[rows]
        best = np.min(ratios)
        candidates = rows[ratios <= best + 1e-12]
        leave = candidates[np.argmin(basis[candidates])]
        _pivot(tableau, basis, leave, entering)
    raise RuntimeError("simplex exceeded the pivot budget")


def lp_solve(problem: LpProblem) -> LpResult:
    a = np.atleast_2d(np.asarray(problem.a_ub, dtype=float))
    b = np.asarray(problem.b_ub, dtype=float).ravel()
    m, n = a.shape
    if b.shape[0] != m:
        raise ValueError("a_ub/b_ub dimension mismatch")
    c = None
    if problem.objective is not None:
        c = np.asarray(problem.objective, dtype=float).ravel()
        if c.shape[0] != n:
            raise ValueError("objective dimension mismatch")
    lower = np.zeros(n) if problem.lower is None else np.asarray(problem.lower, float).ravel()
    if not np.all(np.isfinite(lower)):
        raise ValueError("lower bounds must be finite")
    upper = np.full(n, np.inf) if problem.upper is None else np.asarray(problem.upper, float).ravel()
    if lower.shape[0] != n or upper.shape[0] != n:
        raise ValueError("bound dimension mismatch")

    # Shift to z = x - lb >= 0 and append finite upper bounds as extra rows.
    b_shift = b - a @ lower
    ub_rows = np.where(np.isfinite(upper))[0]
    a_full = a
    b_full = b_shift
    if ub_rows.size:
        extra = np.zeros((ub_rows.size, n))
        extra[np.arange(ub_rows.size), ub_rows] = 1.0
        a_full = np.vstack([a, extra])
        b_full = np.concatenate([b_shift, upper[ub_rows] - lower[ub_rows]])
    rows = a_full.shape[0]

    negated = b_full < 0.0
    a_eq = np.where(negated[:, None], -a_full, a_full)
    rhs = np.where(negated, -b_full, b_full)
    slack = np.where(negated[:, None], -np.eye(rows), np.eye(rows))
    art_rows = np.where(negated)[0]
    n_art = art_rows.size
    art = np.zeros((rows, n_art))
    art[art_rows, np.arange(n_art)] = 1.0

    tableau = np.hstack([a_eq, slack, art, rhs[:, None]])
    basis = np.empty(rows, dtype=int)
    basis[~negated] = n + np.where(~negated)[0]
    basis[negated] = n + rows + np.arange(n_art)

    n_cols = n + rows + n_art
    if n_art:
        phase1 = np.zeros(n_cols)
        phase1[n + rows :] = 1.0
        status = _run_simplex(tableau, basis, phase1)
        if status != "optimal":
            raise RuntimeError("phase one cannot be unbounded")
        infeas = float(phase1[basis] @ tableau[:, -1])
        if infeas > 1e-8 * (1.0 + float(np.max(np.abs(rhs), initial=0.0))):
            return LpResult(status="infeasible")
        # Drive leftover artificials out of the basis; drop redundant rows.
        keep = np.ones(rows, dtype=bool)
        for i in range(rows):
            if basis[i] >= n + rows:
                pivot_col = -1
                for j in range(n + rows):
                    if abs(tableau[i, j]) > 1e-9 and j not in basis:
                        pivot_col = j
                        break
                if pivot_col >= 0:
                    _pivot(tableau, basis, i, pivot_col)
                else:
                    keep[i] = False
        if not np.all(keep):
            tableau = tableau[keep]
            basis = basis[keep]
        tableau = np.delete(tableau, np.s_[n + rows : n_cols], axis=1)

    costs = np.zeros(n + rows)
    if c is not None:
        costs[:n] = c
        status = _run_simplex(tableau, basis, costs)
        if status == "unbounded":
            return LpResult(status="unbounded")

    z = np.zeros(n + rows)
    z[basis] = tableau[:, -1]
    x = z[:n] + lower
    reduced = costs - costs[basis] @ tableau[:, :-1]
    duals_all = reduced[n : n + rows].copy()
    if n_art and not np.all(keep):
        duals_all[~keep] = 0.0  # redundant rows carry no multiplier
    value = float(c @ x) if c is not None else None
    return LpResult(
        status="feasible",
        x=x,
        value=value,
        duals=duals_all[:m],
        slack=b - a @ x,
    )
