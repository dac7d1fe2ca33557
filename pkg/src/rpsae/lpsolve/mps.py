"""Free-format MPS export with a name-mangling sidecar, plus an external HiGHS reader."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .model import LinearProgram, SolveResult

OBJ_ROW = "OBJ"


def _num(v: float) -> str:
    return repr(float(v))


def mangle_names(lp: LinearProgram) -> tuple[list[str], list[str]]:
    """Deterministic <= 8 character names: ``R0000001``... for rows, ``C0000001``... for columns."""
    if max(lp.n_vars, lp.n_cons) > 9_999_999:
        raise ValueError("too many rows/columns for 8-character MPS names")
    rows = [f"R{i + 1:07d}" for i in range(lp.n_cons)]
    cols = [f"C{j + 1:07d}" for j in range(lp.n_vars)]
    return rows, cols


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".names.csv")


def export_mps(lp: LinearProgram, path, name: str = "RPSAE") -> Path:
    """Write *lp* as free MPS to *path* and the name table next to it."""
    path = Path(path)
    rows, cols = mangle_names(lp)
    csc = lp.A.tocsc()
    lines = [f"NAME {name}", "ROWS", f" N {OBJ_ROW}"]
    lines += [f" {s} {r}" for s, r in zip(lp.senses, rows)]
    lines.append("COLUMNS")
    for j, cname in enumerate(cols):
        start, end = csc.indptr[j], csc.indptr[j + 1]
        entries = []
        if lp.c[j] != 0 or start == end:
            entries.append((OBJ_ROW, lp.c[j]))
        entries += [(rows[i], v) for i, v in zip(csc.indices[start:end], csc.data[start:end])]
        for rname, v in entries:
            lines.append(f" {cname} {rname} {_num(v)}")
    lines.append("RHS")
    if lp.c0 != 0:
        lines.append(f" RHS {OBJ_ROW} {_num(-lp.c0)}")
    for i, rname in enumerate(rows):
        if lp.rhs[i] != 0:
            lines.append(f" RHS {rname} {_num(lp.rhs[i])}")
    bounds = []
    for j, cname in enumerate(cols):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == 0 and hi == math.inf:
            continue
        if lo == -math.inf and hi == math.inf:
            bounds.append(f" FR BND {cname}")
        elif lo == hi:
            bounds.append(f" FX BND {cname} {_num(lo)}")
        else:
            if lo == -math.inf:
                bounds.append(f" MI BND {cname}")
            elif lo != 0 or hi < 0:
                bounds.append(f" LO BND {cname} {_num(lo)}")
            if hi != math.inf:
                bounds.append(f" UP BND {cname} {_num(hi)}")
    if bounds:
        lines.append("BOUNDS")
        lines += bounds
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    with sidecar_path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "mangled", "original"])
        w.writerow(["objective", OBJ_ROW, "objective"])
        w.writerows(["row", r, o] for r, o in zip(rows, lp.con_names))
        w.writerows(["column", c, o] for c, o in zip(cols, lp.var_names))
    return path


def read_names(path) -> dict[str, str]:
    with sidecar_path(path).open(newline="") as fh:
        return {row["mangled"]: row["original"] for row in csv.DictReader(fh)}


def solve_mps_external(path) -> SolveResult:
    """Read an MPS file with HiGHS' own reader and solve it (independent of our model code)."""
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    status = h.readModel(str(path))
    if status == highspy.HighsStatus.kError:
        return SolveResult("error", backend="highspy", message=f"cannot read {path}")
    h.run()
    ms = h.getModelStatus()
    mapping = {
        highspy.HighsModelStatus.kOptimal: "optimal",
        highspy.HighsModelStatus.kInfeasible: "infeasible",
        highspy.HighsModelStatus.kUnbounded: "unbounded",
        highspy.HighsModelStatus.kModelEmpty: "optimal",
    }
    status = mapping.get(ms, "error")
    res = SolveResult(status, backend="highspy", message=h.modelStatusToString(ms))
    if status == "optimal":
        res.objective = float(h.getInfo().objective_function_value)
        res.x = np.asarray(h.getSolution().col_value, dtype=float)
    return res
