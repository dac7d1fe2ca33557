"""Reduced-vs-full error metrics, evaluated on the hourly re-dispatch with reduced capacities."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cem import CemSolution, DispatchOnly, solve_variant
from .datamodel import ResourceKind, SystemSpec
from .lpsolve import SolverOptions

METRICS = ("capacity", "scoe", "nse", "generation")


def ae(x: float, y: float) -> float:
    """``|x - y| / y``; 0 when both vanish, NaN (excluded) when only ``y`` does."""
    if y == 0:
        return 0.0 if x == 0 else math.nan
    return abs(x - y) / abs(y)


def wae(values: Sequence[float], weights: Sequence[float], flags: list | None = None) -> float:
    """Weighted mean of *values*; NaN terms with zero weight are skipped.

    With zero total weight the result is 0 and a flag is appended.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape:
        raise ValueError("values and weights must have equal length")
    if np.any(w < 0):
        raise ValueError("weights must be >= 0")
    keep = ~np.isnan(v)
    if np.any(~keep & (w > 0)):
        raise ValueError("undefined error with a nonzero weight")
    total = w[keep].sum()
    if total == 0:
        if flags is not None:
            flags.append("zero_total_weight")
        return 0.0
    return float((v[keep] * w[keep]).sum() / total)


@dataclass
class CaseResult:
    case_id: str
    spec: SystemSpec
    full: CemSolution
    reduced: CemSolution
    redispatch: CemSolution
    method: str = ""

    def __post_init__(self):
        for name in ("full", "redispatch"):
            sol = getattr(self, name)
            if sol.n_steps != self.spec.hours:
                raise ValueError(f"{name} covers {sol.n_steps} hours, expected {self.spec.hours}")


def redispatch(spec: SystemSpec, reduced: CemSolution, opts: SolverOptions | None = None) -> CemSolution:
    """Hourly dispatch over the full horizon with the reduced model's capacities fixed."""
    if not reduced.optimal:
        raise ValueError(f"cannot redispatch a {reduced.status} solution")
    return solve_variant(spec, DispatchOnly(reduced.capacities), opts)


def scoe(sol: CemSolution) -> float:
    """Objective without the weighted non-served-energy penalty."""
    return sol.objective - sol.nse_cost


def _flag(flags, case, metric, entity, reason):
    if flags is not None:
        flags.append({"case": case, "metric": metric, "entity": entity, "reason": reason})


def case_capacity_error(case: CaseResult, flags=None, records=None) -> float:
    total = 0.0
    storage = {r.id for r in case.spec.of_kind(ResourceKind.STORAGE)}
    for attr in ("size", "energy", "charge"):
        ids = [r.id for r in case.spec.resources if (r.id in storage) == (attr != "size")]
        xs = [getattr(case.reduced.capacities[i], attr) for i in ids]
        ys = [getattr(case.full.capacities[i], attr) for i in ids]
        errs = [ae(x, y) for x, y in zip(xs, ys)]
        for i, e in zip(ids, errs):
            if math.isnan(e):
                _flag(flags, case.case_id, f"capacity_{attr}", i, "zero full-space capacity")
            elif records is not None:
                records.append((case.case_id, f"ae_capacity_{attr}", i, e))
        if sum(ys) == 0:
            if ids:
                _flag(flags, case.case_id, f"capacity_{attr}", "*", "term dropped: zero denominator")
            continue
        total += wae(errs, ys)
    return total


def capacity_error(cases: Sequence[CaseResult], flags=None) -> float:
    return float(np.mean([case_capacity_error(c, flags) for c in cases]))


def case_scoe_error(case: CaseResult, flags=None) -> dict:
    x, y = scoe(case.redispatch), scoe(case.full)
    demand = case.spec.total_demand()
    e = ae(x, y)
    if demand == 0 or math.isnan(e):
        _flag(flags, case.case_id, "scoe", "*", "zero demand or zero full-space cost")
        return {"scoe": math.nan, "scoe_ae": e, "scoe_abs_per_mwh": math.nan}
    return {"scoe": e / demand, "scoe_ae": e, "scoe_abs_per_mwh": abs(x - y) / demand}


def scoe_error(cases: Sequence[CaseResult], flags=None) -> float:
    vals = [case_scoe_error(c, flags)["scoe"] for c in cases]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def case_nse_error(case: CaseResult, flags=None) -> float:
    demand = case.spec.total_demand()
    if demand == 0:
        _flag(flags, case.case_id, "nse", "*", "zero demand")
        return math.nan
    shed = sum(float(case.redispatch.series("nse", z).sum()) for z in case.spec.zone_ids)
    return shed / demand


def nse_error(cases: Sequence[CaseResult], flags=None) -> float:
    vals = [v for v in (case_nse_error(c, flags) for c in cases) if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def case_generation_error(case: CaseResult, flags=None, records=None) -> float:
    ids = [r.id for r in case.spec.generators]
    xs = [float(case.redispatch.series("power", i).sum()) for i in ids]
    ys = [float(case.full.series("power", i).sum()) for i in ids]
    errs = [ae(x, y) for x, y in zip(xs, ys)]
    for i, e in zip(ids, errs):
        if math.isnan(e):
            _flag(flags, case.case_id, "generation", i, "zero full-space generation")
        elif records is not None:
            records.append((case.case_id, "ae_generation", i, e))
    if sum(ys) == 0:
        _flag(flags, case.case_id, "generation", "*", "zero total generation")
        return math.nan
    return wae(errs, ys)


def generation_error(cases: Sequence[CaseResult], flags=None) -> float:
    vals = [v for v in (case_generation_error(c, flags) for c in cases) if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------- reports


@dataclass
class ErrorReport:
    records: list = field(default_factory=list)  # (case, metric, entity, value)
    per_case: dict = field(default_factory=dict)  # case -> {metric: value}
    methods: dict = field(default_factory=dict)  # case -> method
    flags: list = field(default_factory=list)

    def mean(self, metric: str, method: str | None = None) -> float:
        vals = [v[metric] for c, v in self.per_case.items()
                if (method is None or self.methods.get(c) == method) and not math.isnan(v[metric])]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> dict:
        return summarize(self.records, self.methods)

    def write(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_errors_csv(d / "errors.csv", self.records)
        summary = self.summary()
        summary["flags"] = self.flags
        summary["cases"] = dict(sorted(self.methods.items()))
        (d / "errors_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        return d


def evaluate(cases: Sequence[CaseResult]) -> ErrorReport:
    """All four metrics per case; header metrics use entity ``*``."""
    rep = ErrorReport()
    for c in cases:
        if c.case_id in rep.per_case:
            raise ValueError(f"duplicate case id {c.case_id}")
        rep.methods[c.case_id] = c.method
        vals = {"capacity": case_capacity_error(c, rep.flags, rep.records)}
        vals.update(case_scoe_error(c, rep.flags))
        vals["nse"] = case_nse_error(c, rep.flags)
        vals["generation"] = case_generation_error(c, rep.flags, rep.records)
        rep.per_case[c.case_id] = vals
        for metric in sorted(vals):
            rep.records.append((c.case_id, metric, "*", vals[metric]))
    return rep


def write_errors_csv(path, records):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "metric", "entity", "value"])
        for case, metric, entity, value in records:
            w.writerow([case, metric, entity, repr(float(value))])


def read_errors_csv(path):
    with Path(path).open(newline="") as fh:
        return [(r["case"], r["metric"], r["entity"], float(r["value"])) for r in csv.DictReader(fh)]


def summarize(records, methods: dict) -> dict:
    """Mean and sample standard deviation per (method, metric) over the case-level values."""
    groups = defaultdict(list)
    for case, metric, entity, value in records:
        if entity == "*" and not math.isnan(value):
            groups[methods.get(case, ""), metric].append(value)
    out: dict = {"methods": {}}
    for (method, metric), vals in sorted(groups.items()):
        a = np.array(vals)
        out["methods"].setdefault(method, {})[metric] = {
            "mean": float(a.mean()), "std": float(a.std(ddof=1)) if a.size > 1 else 0.0, "n": int(a.size)}
    return out
