"""Sparse linear programs, an embedded simplex solver and MPS export."""

from .model import LinearProgram, LPBuilder, SolveResult, SolverOptions, dual_objective
from .mps import export_mps, read_names, solve_mps_external
from .solve import solve, solve_parallel

__all__ = [
    "LinearProgram",
    "LPBuilder",
    "SolveResult",
    "SolverOptions",
    "dual_objective",
    "export_mps",
    "read_names",
    "solve",
    "solve_mps_external",
    "solve_parallel",
]
