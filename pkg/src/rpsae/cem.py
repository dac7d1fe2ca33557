"""Capacity expansion model variants assembled as linear programs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .datamodel import Resource, ResourceKind, SpecError, SystemSpec, output_series_keys
from .lpsolve import LinearProgram, LPBuilder, SolveResult, SolverOptions, solve, solve_parallel

THERMAL, VRE, STORAGE = ResourceKind.THERMAL, ResourceKind.VRE, ResourceKind.STORAGE


@dataclass(frozen=True)
class Capacity:
    size: float = 0.0
    energy: float = 0.0
    charge: float = 0.0


@dataclass(frozen=True)
class CapacityPlan:
    """Installed capacity per resource (the zone is the resource's own zone)."""

    values: Mapping[str, Capacity]

    def __getitem__(self, rid) -> Capacity:
        return self.values[rid]

    def __iter__(self):
        return iter(self.values)

    def as_rows(self, spec: SystemSpec):
        for r in spec.resources:
            c = self.values.get(r.id, Capacity())
            yield r.id, r.zone, c.size, c.energy, c.charge


@dataclass(frozen=True)
class Full:
    pass


@dataclass(frozen=True)
class Reduced:
    periods: tuple[int, ...]
    weights: tuple[int, ...]
    q: int
    total_periods: int | None = None  # defaults to hours // q of the spec being built

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(int(i) for i in self.periods))
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))


@dataclass(frozen=True)
class SinglePeriod:
    index: int
    q: int


@dataclass(frozen=True)
class DispatchOnly:
    capacities: CapacityPlan


CemVariant = Union[Full, Reduced, SinglePeriod, DispatchOnly]


@dataclass(frozen=True)
class TimeLayout:
    hours: np.ndarray  # spec hour index of every model step
    weights: np.ndarray  # w_t
    prev: np.ndarray  # step looked back to (wraps inside each period)


def time_layout(spec: SystemSpec, variant: CemVariant) -> TimeLayout:
    def blocks_to_layout(starts, length, block_weights):
        hours, weights, prev = [], [], []
        for b, (s, w) in enumerate(zip(starts, block_weights)):
            base = b * length
            hours += range(s, s + length)
            weights += [w] * length
            prev += [base + length - 1] + list(range(base, base + length - 1))
        return TimeLayout(np.array(hours, dtype=int), np.array(weights, dtype=float),
                          np.array(prev, dtype=int))

    if isinstance(variant, (Full, DispatchOnly)):
        return blocks_to_layout([0], spec.hours, [1])
    if isinstance(variant, SinglePeriod):
        q = variant.q
        if not 1 <= q <= spec.hours:
            raise SpecError(f"period length {q} outside [1, {spec.hours}]")
        if not 0 <= variant.index < spec.hours // q:
            raise SpecError(f"period index {variant.index} outside [0, {spec.hours // q})")
        return blocks_to_layout([variant.index * q], q, [1])
    if isinstance(variant, Reduced):
        q = variant.q
        if not 1 <= q <= spec.hours:
            raise SpecError(f"period length {q} outside [1, {spec.hours}]")
        p = spec.hours // q
        total = variant.total_periods if variant.total_periods is not None else p
        if len(variant.periods) != len(variant.weights) or not variant.periods:
            raise SpecError("reduced variant needs one positive weight per representative period")
        if any(not 0 <= i < p for i in variant.periods):
            raise SpecError(f"representative period index outside [0, {p})")
        if any(w < 1 for w in variant.weights):
            raise SpecError("weights must be positive integers")
        if sum(variant.weights) != total:
            raise SpecError(f"weights sum to {sum(variant.weights)}, expected {total}")
        return blocks_to_layout([i * q for i in variant.periods], q, variant.weights)
    raise TypeError(f"unknown variant {variant!r}")


@dataclass
class CemModel:
    lp: LinearProgram
    layout: TimeLayout
    index: dict  # (quantity, entity) -> column index array (or scalar index for capacities)
    cost_index: dict = field(default_factory=dict)
    variant: CemVariant | None = None


def _storage_checks(spec: SystemSpec):
    for r in spec.of_kind(STORAGE):
        if r.costs.invest_power or r.costs.fixed_om:
            raise SpecError(f"storage {r.id}: power capacity is priced via invest_charge/fixed_om_charge")


def build_model(spec: SystemSpec, variant: CemVariant, scale_invest_per_period: bool = False) -> CemModel:
    _storage_checks(spec)
    layout = time_layout(spec, variant)
    T = layout.hours.size
    w = layout.weights
    prev = layout.prev
    fixed = variant.capacities if isinstance(variant, DispatchOnly) else None
    invest_scale = 1.0
    if scale_invest_per_period and isinstance(variant, SinglePeriod):
        invest_scale = variant.q / spec.hours

    b = LPBuilder()
    idx: dict = {}

    def capacity_var(name, rid, cost, ub=math.inf):
        if fixed is not None:
            value = getattr(fixed.values.get(rid, Capacity()), "charge" if name == "charge_cap" else name)
            b.c0 += cost * value
            return b.add_var(f"{name}[{rid}]", value, value, 0.0)
        return b.add_var(f"{name}[{rid}]", 0.0, ub, cost)

    for r in spec.resources:
        c = r.costs
        if r.kind is STORAGE:
            idx["energy", r.id] = capacity_var("energy", r.id,
                                               invest_scale * c.invest_energy * (1 + c.degradation))
            idx["charge_cap", r.id] = capacity_var("charge_cap", r.id,
                                                   invest_scale * (c.invest_charge + c.fixed_om_charge))
        else:
            idx["size", r.id] = capacity_var("size", r.id, invest_scale * (c.invest_power + c.fixed_om),
                                             r.ops.max_capacity)

    def series_vars(qty, entity, cost_per_step=0.0, lb=0.0, ub=math.inf):
        cols = np.array([b.add_var(f"{qty}[{entity},{t}]", lb, ub, w[t] * cost_per_step) for t in range(T)])
        idx[qty, entity] = cols
        return cols

    for r in spec.resources:
        c, o = r.costs, r.ops
        if r.kind is THERMAL:
            pi = series_vars("power", r.id, c.var_om + c.fuel)
            v = series_vars("commit", r.id)
            u = series_vars("startup", r.id, c.startup * o.unit_size)
            n = series_vars("shutdown", r.id)
            size = idx["size", r.id]
            inv_unit = 1.0 / o.unit_size
            for t in range(T):
                tp = prev[t]
                b.add_row([(v[t], 1), (size, -inv_unit)], "<=", 0, f"commit_cap[{r.id},{t}]")
                b.add_row([(u[t], 1), (size, -inv_unit)], "<=", 0, f"startup_cap[{r.id},{t}]")
                b.add_row([(n[t], 1), (size, -inv_unit)], "<=", 0, f"shutdown_cap[{r.id},{t}]")
                b.add_row([(v[t], 1), (v[tp], -1), (u[t], -1), (n[t], 1)], "=", 0, f"commit_bal[{r.id},{t}]")
                b.add_row([(pi[t], 1), (v[t], -o.rho_min * o.unit_size)], ">=", 0, f"pmin[{r.id},{t}]")
                b.add_row([(pi[t], 1), (v[t], -o.rho_max * o.unit_size)], "<=", 0, f"pmax[{r.id},{t}]")
                b.add_row([(pi[t], 1), (pi[tp], -1), (size, -o.ramp_up)], "<=", 0, f"ramp_up[{r.id},{t}]")
                b.add_row([(pi[tp], 1), (pi[t], -1), (size, -o.ramp_down)], "<=", 0, f"ramp_dn[{r.id},{t}]")
        elif r.kind is VRE:
            pi = series_vars("power", r.id, c.var_om + c.fuel)
            avail = spec.availability[r.availability_column][layout.hours]
            size = idx["size", r.id]
            for t in range(T):
                b.add_row([(pi[t], 1), (size, -avail[t])], "<=", 0, f"avail[{r.id},{t}]")
        else:
            chg = series_vars("charge", r.id, c.var_om_charge)
            dis = series_vars("discharge", r.id)
            soc = series_vars("soc", r.id)
            e_cap, c_cap = idx["energy", r.id], idx["charge_cap", r.id]
            for t in range(T):
                tp = prev[t]
                b.add_row([(soc[t], 1), (soc[tp], -1), (dis[t], 1 / o.eta_discharge),
                           (chg[t], -o.eta_charge)], "=", 0, f"soc_bal[{r.id},{t}]")
                b.add_row([(soc[t], 1), (e_cap, -o.depth_of_discharge)], "<=", 0, f"soc_cap[{r.id},{t}]")
                b.add_row([(chg[t], 1), (c_cap, -1)], "<=", 0, f"charge_cap[{r.id},{t}]")
                b.add_row([(chg[t], 1), (dis[t], 1), (c_cap, -1)], "<=", 0, f"power_cap[{r.id},{t}]")
                b.add_row([(dis[t], 1), (soc[tp], -1)], "<=", 0, f"dis_avail[{r.id},{t}]")

    ref = spec.zone_ids[0]
    for z in spec.zone_ids:
        series_vars("nse", z, spec.voll[z])
        if z == ref:
            series_vars("angle", z, lb=0.0, ub=0.0)
        else:
            series_vars("angle", z, lb=-math.inf, ub=math.inf)
    tmin, tmax = spec.theta_bounds
    for ln in spec.lines:
        phi = series_vars("flow", ln.id, lb=-math.inf, ub=math.inf)
        th_f, th_t = idx["angle", ln.from_zone], idx["angle", ln.to_zone]
        for t in range(T):
            b.add_row([(phi[t], 1), (th_f[t], -ln.susceptance), (th_t[t], ln.susceptance)], "=", 0,
                      f"dc_flow[{ln.id},{t}]")
            b.add_row([(phi[t], 1)], "<=", ln.max_flow, f"flow_max[{ln.id},{t}]")
            b.add_row([(phi[t], 1)], ">=", -ln.max_flow, f"flow_min[{ln.id},{t}]")
            b.add_row([(th_f[t], 1), (th_t[t], -1)], ">=", tmin, f"angle_min[{ln.id},{t}]")
            b.add_row([(th_f[t], 1), (th_t[t], -1)], "<=", tmax, f"angle_max[{ln.id},{t}]")

    by_zone: dict[str, list[Resource]] = {z: [] for z in spec.zone_ids}
    for r in spec.resources:
        by_zone[r.zone].append(r)
    for z in spec.zone_ids:
        load = spec.load[z][layout.hours]
        chi = idx["nse", z]
        for t in range(T):
            terms = [(chi[t], 1.0)]
            for r in by_zone[z]:
                if r.kind is STORAGE:
                    terms += [(idx["discharge", r.id][t], 1.0), (idx["charge", r.id][t], -1.0)]
                else:
                    terms.append((idx["power", r.id][t], 1.0))
            for ln in spec.lines:
                if ln.to_zone == z:
                    terms.append((idx["flow", ln.id][t], 1.0))
                elif ln.from_zone == z:
                    terms.append((idx["flow", ln.id][t], -1.0))
            b.add_row(terms, "=", float(load[t]), f"balance[{z},{t}]")

    return CemModel(b.build(), layout, idx, variant=variant)


def build(spec: SystemSpec, variant: CemVariant, scale_invest_per_period: bool = False) -> LinearProgram:
    """The linear program of *variant* on *spec*."""
    return build_model(spec, variant, scale_invest_per_period).lp


# ---------------------------------------------------------------- solutions


@dataclass(frozen=True)
class CemSolution:
    status: str
    objective: float
    capacities: CapacityPlan
    hours: np.ndarray
    weights: np.ndarray
    series_values: Mapping[tuple[str, str], np.ndarray]
    nse_cost: float = 0.0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def series(self, kind: str, entity: str) -> np.ndarray:
        return self.series_values[kind, entity]

    def get(self, kind: str, entity: str, default=None):
        return self.series_values.get((kind, entity), default)

    @property
    def n_steps(self) -> int:
        return self.hours.size


def _unpack(spec: SystemSpec, model: CemModel, res: SolveResult) -> CemSolution:
    layout = model.layout
    if not res.optimal or res.x is None:
        empty = CapacityPlan({})
        return CemSolution(res.status, math.nan, empty, layout.hours, layout.weights, {},
                           message=res.message)
    x = res.x
    caps = {}
    for r in spec.resources:
        if r.kind is STORAGE:
            caps[r.id] = Capacity(0.0, max(float(x[model.index["energy", r.id]]), 0.0),
                                  max(float(x[model.index["charge_cap", r.id]]), 0.0))
        else:
            caps[r.id] = Capacity(max(float(x[model.index["size", r.id]]), 0.0))
    series = {}
    for key, cols in model.index.items():
        if isinstance(cols, np.ndarray):
            series[key] = x[cols].copy()
    nse_cost = sum(float(np.dot(layout.weights, series["nse", z])) * spec.voll[z] for z in spec.zone_ids)
    return CemSolution("optimal", res.objective, CapacityPlan(caps), layout.hours, layout.weights,
                       series, nse_cost)


def solve_variant(spec: SystemSpec, variant: CemVariant, opts: SolverOptions | None = None,
                  scale_invest_per_period: bool = False) -> CemSolution:
    model = build_model(spec, variant, scale_invest_per_period)
    return _unpack(spec, model, solve(model.lp, opts))


def solve_periods(spec: SystemSpec, q: int, opts: SolverOptions | None = None, threads: int | None = None,
                  scale_invest_per_period: bool = False) -> list[CemSolution]:
    """Independent single-period models for every disjoint period of length *q*."""
    if not 1 <= q <= spec.hours:
        raise SpecError(f"period length {q} outside [1, {spec.hours}]")
    models = [build_model(spec, SinglePeriod(i, q), scale_invest_per_period) for i in range(spec.hours // q)]
    results = solve_parallel([m.lp for m in models], opts, threads)
    return [_unpack(spec, m, r) for m, r in zip(models, results)]


def extract_output_features(sol: CemSolution, spec: SystemSpec) -> dict[tuple[str, str], np.ndarray]:
    """The five output series (power, charge, discharge, nse, flow) in column order."""
    if not sol.optimal:
        raise ValueError(f"cannot extract features from a {sol.status} solution")
    return {key: sol.series(*key) for key in output_series_keys(spec)}


def investment_cost(spec: SystemSpec, caps: CapacityPlan, scale: float = 1.0) -> float:
    total = 0.0
    for r in spec.resources:
        c, cap = r.costs, caps.values.get(r.id, Capacity())
        total += cap.size * (c.invest_power + c.fixed_om)
        total += cap.energy * c.invest_energy * (1 + c.degradation)
        total += cap.charge * (c.invest_charge + c.fixed_om_charge)
    return scale * total


def operating_cost(spec: SystemSpec, sol: CemSolution, include_nse: bool = True) -> float:
    """Weighted hourly cost terms recomputed from the dispatch series."""
    w = sol.weights
    total = 0.0
    for r in spec.resources:
        c = r.costs
        if r.kind is STORAGE:
            total += c.var_om_charge * float(w @ sol.series("charge", r.id))
        else:
            total += (c.var_om + c.fuel) * float(w @ sol.series("power", r.id))
        if r.kind is THERMAL:
            total += c.startup * r.ops.unit_size * float(w @ sol.series("startup", r.id))
    if include_nse:
        total += sum(spec.voll[z] * float(w @ sol.series("nse", z)) for z in spec.zone_ids)
    return total


def balance_residuals(spec: SystemSpec, sol: CemSolution) -> np.ndarray:
    """``load - supply`` per (zone, step), shape (zones, T)."""
    out = np.zeros((len(spec.zones), sol.n_steps))
    for i, z in enumerate(spec.zone_ids):
        supply = sol.series("nse", z).copy()
        for r in spec.resources:
            if r.zone != z:
                continue
            if r.kind is STORAGE:
                supply += sol.series("discharge", r.id) - sol.series("charge", r.id)
            else:
                supply += sol.series("power", r.id)
        for ln in spec.lines:
            if ln.to_zone == z:
                supply += sol.series("flow", ln.id)
            elif ln.from_zone == z:
                supply -= sol.series("flow", ln.id)
        out[i] = spec.load[z][sol.hours] - supply
    return out


# ---------------------------------------------------------------- serialization

_SERIES_ORDER = ("power", "commit", "startup", "shutdown", "charge", "discharge", "soc", "nse", "angle", "flow")


def save_solution(sol: CemSolution, directory, spec: SystemSpec, extra: dict | None = None) -> Path:
    """Write ``capacity.csv``, ``dispatch.csv`` and ``summary.json`` into *directory*."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "capacity.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["resource", "zone", "size", "energy", "charge"])
        if sol.optimal:
            for rid, zone, size, energy, charge in sol.capacities.as_rows(spec):
                wr.writerow([rid, zone, repr(size), repr(energy), repr(charge)])
    keys = sorted(sol.series_values, key=lambda k: (_SERIES_ORDER.index(k[0]), k[1]))
    with (directory / "dispatch.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "hour", "variable", "entity", "value"])
        for t in range(sol.n_steps):
            hour = int(sol.hours[t]) + 1
            for kind, entity in keys:
                wr.writerow([t, hour, kind, entity, repr(float(sol.series_values[kind, entity][t]))])
    summary = {
        "status": sol.status,
        "objective": sol.objective if math.isfinite(sol.objective) else None,
        "nse_cost": sol.nse_cost,
        "weights": [float(x) for x in sol.weights],
        "hours": [int(h) for h in sol.hours],
        "message": sol.message,
    }
    if extra:
        summary.update(extra)
    (directory / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return directory


def load_solution(directory) -> CemSolution:
    directory = Path(directory)
    summary = json.loads((directory / "summary.json").read_text())
    caps = {}
    with (directory / "capacity.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            caps[row["resource"]] = Capacity(float(row["size"]), float(row["energy"]), float(row["charge"]))
    hours = np.array(summary["hours"], dtype=int)
    series: dict = {}
    with (directory / "dispatch.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["variable"], row["entity"])
            if key not in series:
                series[key] = np.zeros(hours.size)
            series[key][int(row["step"])] = float(row["value"])
    obj = summary["objective"]
    return CemSolution(summary["status"], math.nan if obj is None else obj, CapacityPlan(caps), hours,
                       np.array(summary["weights"], dtype=float), series, summary["nse_cost"],
                       summary.get("message", ""))


def variant_from_periods(periods: Sequence[int], weights: Sequence[int], q: int) -> Reduced:
    return Reduced(tuple(periods), tuple(weights), q)
