from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .highs import highs_solve
from .model import LinearProgram, SolveResult, SolverOptions
from .simplex import simplex_solve


def solve(lp: LinearProgram, opts: SolverOptions | None = None) -> SolveResult:
    """Solve *lp* with the embedded simplex or HiGHS, per ``opts.backend``."""
    opts = opts or SolverOptions()
    backend = opts.backend
    if backend == "auto":
        backend = "simplex" if lp.n_vars + lp.n_cons <= opts.auto_simplex_limit else "highs"
    if backend == "simplex":
        return simplex_solve(lp, opts)
    return highs_solve(lp, opts)


def _solve_item(args):
    lp, opts = args
    try:
        return solve(lp, opts)
    except Exception as exc:  # carried per slot, siblings keep going
        return SolveResult("error", message=f"{type(exc).__name__}: {exc}")


def solve_parallel(lps, opts: SolverOptions | None = None, threads: int | None = None) -> list[SolveResult]:
    """Solve independent programs; results are positionally aligned with *lps*."""
    items = [(lp, opts) for lp in lps]
    if threads == 1 or len(items) <= 1:
        return [_solve_item(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_solve_item, items))
