"""Bounded-variable revised primal simplex (two phases, Dantzig pricing, Bland fallback).

Works on dense arrays and refactorizes the basis every iteration, which keeps
it simple and exact enough for the small models used as test oracles. Large
models go to the HiGHS backend instead.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la

from .model import LinearProgram, SolveResult, SolverOptions

_PIVOT_TOL = 1e-9
_DEGENERATE_STREAK = 30


class _Tableau:
    def __init__(self, A, b, lb, ub, x, basis, excluded):
        self.A = A
        self.b = b
        self.lb = lb
        self.ub = ub
        self.x = x
        self.basis = basis
        self.excluded = excluded  # columns never allowed to enter

    def factor(self):
        return la.lu_factor(self.A[:, self.basis], check_finite=False)

    def refresh_basic(self, lu):
        nonbasic = np.ones(self.x.size, dtype=bool)
        nonbasic[self.basis] = False
        r = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = la.lu_solve(lu, r, check_finite=False)


def _run(tab: _Tableau, cost: np.ndarray, opts: SolverOptions, budget: int):
    """Iterate until optimal/unbounded or the budget is exhausted; returns (status, iters, y, d)."""
    ftol, otol = opts.feasibility_tol, opts.optimality_tol
    n = tab.x.size
    streak = 0
    iters = 0
    while True:
        lu = tab.factor()
        tab.refresh_basic(lu)
        y = la.lu_solve(lu, cost[tab.basis], trans=1, check_finite=False)
        d = cost - tab.A.T @ y
        is_basic = np.zeros(n, dtype=bool)
        is_basic[tab.basis] = True
        x, lb, ub = tab.x, tab.lb, tab.ub
        can_inc = (~is_basic) & (~tab.excluded) & (x < ub - ftol)
        can_dec = (~is_basic) & (~tab.excluded) & (x > lb + ftol)
        inc = can_inc & (d < -otol)
        dec = can_dec & (d > otol)
        eligible = np.flatnonzero(inc | dec)
        if eligible.size == 0:
            return "optimal", iters, y, d
        if iters >= budget:
            return "iteration_limit", iters, y, d
        bland = opts.bland or streak >= _DEGENERATE_STREAK
        if bland:
            j = int(eligible[0])
        else:
            j = int(eligible[np.argmax(np.abs(d[eligible]))])
        direction = 1.0 if inc[j] else -1.0
        w = la.lu_solve(lu, tab.A[:, j], check_finite=False)
        delta = -direction * w  # change of basic values per unit step
        xb = x[tab.basis]
        lbb, ubb = lb[tab.basis], ub[tab.basis]
        ratios = np.full(delta.size, np.inf)
        down = delta < -_PIVOT_TOL
        up = delta > _PIVOT_TOL
        ratios[down] = (xb[down] - lbb[down]) / -delta[down]
        ratios[up] = (ubb[up] - xb[up]) / delta[up]
        ratios = np.maximum(ratios, 0.0)
        flip = ub[j] - lb[j]
        step = ratios.min() if ratios.size else np.inf
        if flip <= step:
            if not np.isfinite(flip):
                return "unbounded", iters, y, d
            x[j] += direction * flip
            streak = 0
            iters += 1
            continue
        ties = np.flatnonzero(ratios <= step + 1e-12)
        if bland:
            r = int(ties[np.argmin(np.asarray(tab.basis)[ties])])
        else:
            r = int(ties[np.argmax(np.abs(delta[ties]))])
        leaving = tab.basis[r]
        x[j] += direction * step
        x[tab.basis] += delta * step
        x[leaving] = lb[leaving] if delta[r] < 0 else ub[leaving]
        tab.basis[r] = j
        streak = streak + 1 if step < 1e-12 else 0
        iters += 1


def _presolve(lp: LinearProgram, ftol: float):
    """Drop empty rows (checking them) and report them as feasible/infeasible."""
    nnz = np.diff(lp.A.indptr)
    keep = nnz > 0
    for i in np.flatnonzero(~keep):
        s, b = lp.senses[i], lp.rhs[i]
        if (s == "L" and b < -ftol) or (s == "G" and b > ftol) or (s == "E" and abs(b) > ftol):
            return None
    return np.flatnonzero(keep)


def simplex_solve(lp: LinearProgram, opts: SolverOptions) -> SolveResult:
    rows = _presolve(lp, opts.feasibility_tol)
    if rows is None:
        return SolveResult("infeasible", backend="simplex", message="empty row violated")
    n = lp.n_vars
    A0 = lp.A[rows].toarray()
    senses = lp.senses[rows]
    b = lp.rhs[rows].copy()
    m = rows.size
    ineq = np.flatnonzero(senses != "E")
    slack = np.zeros((m, ineq.size))
    slack[ineq, np.arange(ineq.size)] = np.where(senses[ineq] == "L", 1.0, -1.0)
    lb = np.concatenate([lp.lb, np.zeros(ineq.size)])
    ub = np.concatenate([lp.ub, np.full(ineq.size, np.inf)])
    x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    As = np.hstack([A0, slack]) if m else np.zeros((0, n + ineq.size))
    r = b - As @ x
    sign = np.where(r >= 0, 1.0, -1.0)
    A = np.hstack([As, np.diag(sign)]) if m else As
    n_std = As.shape[1]
    lb = np.concatenate([lb, np.zeros(m)])
    ub = np.concatenate([ub, np.full(m, np.inf)])
    x = np.concatenate([x, np.abs(r)])
    basis = list(range(n_std, n_std + m))
    excluded = np.zeros(n_std + m, dtype=bool)
    tab = _Tableau(A, b, lb, ub, x, basis, excluded)
    budget = opts.iteration_limit(lp)

    if m == 0:
        cost = np.concatenate([lp.c, np.zeros(ineq.size)])
        for j in range(n):
            if cost[j] < -opts.optimality_tol:
                if not np.isfinite(ub[j]):
                    return SolveResult("unbounded", backend="simplex")
                x[j] = ub[j]
            elif cost[j] > opts.optimality_tol:
                if not np.isfinite(lb[j]):
                    return SolveResult("unbounded", backend="simplex")
                x[j] = lb[j]
        xo = x[:n].copy()
        return SolveResult("optimal", lp.objective_value(xo), xo, np.zeros(lp.n_cons),
                           lp.c.copy(), 0, "simplex")

    phase1 = np.concatenate([np.zeros(n_std), np.ones(m)])
    status, it1, _, _ = _run(tab, phase1, opts, budget)
    infeas = float(tab.x[n_std:].sum())
    if status == "iteration_limit":
        return SolveResult("iteration_limit", lp.objective_value(tab.x[:n]), tab.x[:n].copy(),
                           iterations=it1, backend="simplex", message="phase 1")
    if infeas > opts.feasibility_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
        return SolveResult("infeasible", iterations=it1, backend="simplex",
                           message=f"phase-1 optimum {infeas:.3e}")
    tab.ub[n_std:] = 0.0
    tab.x[n_std:] = np.minimum(tab.x[n_std:], 0.0)
    tab.excluded[n_std:] = True
    cost = np.concatenate([lp.c, np.zeros(ineq.size), np.zeros(m)])
    status, it2, y, d = _run(tab, cost, opts, budget - it1)
    xo = tab.x[:n].copy()
    res = SolveResult(status, lp.objective_value(xo), xo, iterations=it1 + it2, backend="simplex")
    if status == "optimal":
        duals = np.zeros(lp.n_cons)
        duals[rows] = y
        res.duals = duals
        res.reduced_costs = d[:n].copy()
    return res
