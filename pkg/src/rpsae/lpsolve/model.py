from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SENSES = ("L", "G", "E")  # <=, >=, =
_SENSE_ALIASES = {"<=": "L", ">=": "G", "=": "E", "==": "E", "L": "L", "G": "G", "E": "E"}


@dataclass
class LinearProgram:
    """``min c.x + c0`` subject to sparse rows ``A x (<=|>=|=) rhs`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    var_names: list[str]
    con_names: list[str]
    c0: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        A = sp.csr_matrix(self.A, dtype=float)
        if A.shape[1] != n and A.shape[0] == 0:
            A = sp.csr_matrix((0, n))
        A.sum_duplicates()
        A.eliminate_zeros()
        self.A = A
        self.senses = np.array([_SENSE_ALIASES[s] for s in self.senses], dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        m = A.shape[0]
        if A.shape != (m, n) or self.senses.shape != (m,) or self.rhs.shape != (m,):
            raise ValueError("inconsistent constraint dimensions")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must match the number of variables")
        if len(self.var_names) != n or len(self.con_names) != m:
            raise ValueError("one name per variable and per constraint is required")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(self.rhs))
                and math.isfinite(self.c0)):
            raise ValueError("coefficients must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb == np.inf) \
                or np.any(self.ub == -np.inf):
            raise ValueError("invalid variable bounds")
        if len(set(self.var_names)) != n:
            raise ValueError("variable names must be unique")
        if len(set(self.con_names)) != m:
            raise ValueError("constraint names must be unique")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_cons(self) -> int:
        return self.A.shape[0]

    def objective_value(self, x) -> float:
        return float(self.c @ x + self.c0)

    def residuals(self, x) -> np.ndarray:
        """Per-row constraint violation (0 when satisfied)."""
        ax = self.A @ x
        viol = np.zeros(self.n_cons)
        le, ge, eq = self.senses == "L", self.senses == "G", self.senses == "E"
        viol[le] = np.maximum(ax[le] - self.rhs[le], 0)
        viol[ge] = np.maximum(self.rhs[ge] - ax[ge], 0)
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        return viol

    def scaled(self, factor: float) -> "LinearProgram":
        return LinearProgram(self.c * factor, self.A.copy(), self.senses.copy(), self.rhs.copy(),
                             self.lb.copy(), self.ub.copy(), list(self.var_names), list(self.con_names),
                             self.c0 * factor)


class LPBuilder:
    """Incremental assembly of a :class:`LinearProgram` from named variables and rows."""

    def __init__(self):
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._c: list[float] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._con_names: list[str] = []
        self.c0 = 0.0

    @property
    def n_vars(self):
        return len(self._names)

    @property
    def n_cons(self):
        return len(self._senses)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, cost: float = 0.0) -> int:
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        self._c.append(cost)
        return len(self._names) - 1

    def add_cost(self, j: int, value: float):
        self._c[j] += value

    def set_bounds(self, j: int, lb: float, ub: float):
        self._lb[j] = lb
        self._ub[j] = ub

    def add_row(self, terms, sense: str, rhs: float, name: str) -> int:
        """Add a row from ``(column, coefficient)`` pairs or a dict; repeated columns are summed."""
        i = len(self._senses)
        if isinstance(terms, dict):
            terms = terms.items()
        for j, v in terms:
            if v != 0:
                self._rows.append(i)
                self._cols.append(j)
                self._vals.append(v)
        self._senses.append(_SENSE_ALIASES[sense])
        self._rhs.append(rhs)
        self._con_names.append(name)
        return i

    def build(self) -> LinearProgram:
        m, n = len(self._senses), len(self._names)
        A = sp.coo_matrix((self._vals, (self._rows, self._cols)), shape=(m, n)).tocsr()
        return LinearProgram(np.array(self._c), A, np.array(self._senses, dtype="<U1"),
                             np.array(self._rhs), np.array(self._lb), np.array(self._ub),
                             list(self._names), list(self._con_names), self.c0)


@dataclass(frozen=True)
class SolverOptions:
    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-7
    max_iterations: int | None = None  # None: 10 * (rows + cols)
    bland: bool = False  # always use Bland's rule instead of Dantzig pricing
    backend: str = "auto"  # "simplex", "highs" or "auto"
    auto_simplex_limit: int = 400  # auto picks the embedded simplex when rows + cols <= this

    def __post_init__(self):
        if not (self.feasibility_tol > 0 and self.optimality_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.backend not in ("auto", "simplex", "highs"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def iteration_limit(self, lp: LinearProgram) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return 10 * (lp.n_cons + lp.n_vars)


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit | error
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # d(objective)/d(rhs) per constraint
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    backend: str = ""
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def dual_objective(lp: LinearProgram, res: SolveResult) -> float:
    """Lagrangian dual value ``rhs.y + sum(bound * reduced cost) + c0`` at an optimal result."""
    y, d = res.duals, res.reduced_costs
    total = float(lp.rhs @ y) + lp.c0
    for j in range(lp.n_vars):
        if d[j] > 0:
            total += d[j] * lp.lb[j]
        elif d[j] < 0:
            total += d[j] * lp.ub[j]
    return total
