"""HiGHS backend (through scipy) for models too large for the embedded simplex."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import LinearProgram, SolveResult, SolverOptions

_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "error"}


def highs_solve(lp: LinearProgram, opts: SolverOptions) -> SolveResult:
    le = lp.senses == "L"
    ge = lp.senses == "G"
    eq = lp.senses == "E"
    ub_rows = np.flatnonzero(le | ge)
    flip = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(flip) @ lp.A[ub_rows] if ub_rows.size else None
    b_ub = flip * lp.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = lp.A[eq_rows] if eq_rows.size else None
    b_eq = lp.rhs[eq_rows] if eq_rows.size else None
    bounds = np.column_stack([lp.lb, lp.ub]) if lp.n_vars else None
    options = {
        "primal_feasibility_tolerance": opts.feasibility_tol,
        "dual_feasibility_tolerance": opts.optimality_tol,
        "presolve": True,
    }
    if opts.max_iterations is not None:
        options["maxiter"] = opts.max_iterations
    if lp.n_vars == 0:
        return SolveResult("optimal", lp.c0, np.zeros(0), np.zeros(lp.n_cons), np.zeros(0), 0, "highs")
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs-ds", options=options)
    status = _STATUS.get(res.status, "error")
    out = SolveResult(status, backend="highs", message=str(res.message),
                      iterations=int(getattr(res, "nit", 0) or 0))
    if res.x is not None:
        out.x = np.asarray(res.x, dtype=float)
        out.objective = lp.objective_value(out.x)
    if status == "optimal":
        duals = np.zeros(lp.n_cons)
        if ub_rows.size:
            duals[ub_rows] = flip * res.ineqlin.marginals
        if eq_rows.size:
            duals[eq_rows] = res.eqlin.marginals
        out.duals = duals
        out.reduced_costs = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
    return out
