"""System description, time-series ingestion and per-period feature matrices."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_HOURS = 8760

INPUT_KINDS = ("avail", "load")
OUTPUT_KINDS = ("charge", "discharge", "flow", "nse", "power")


class SpecError(ValueError):
    """Invalid system description or time-series file."""

    def __init__(self, message, file=None, column=None, row=None):
        where = [f"{k}={v}" for k, v in (("file", file), ("column", column), ("row", row)) if v is not None]
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.file = file
        self.column = column
        self.row = row


class ResourceKind(str, Enum):
    THERMAL = "thermal"
    VRE = "vre"
    STORAGE = "storage"


@dataclass(frozen=True)
class Zone:
    id: str
    name: str = ""


@dataclass(frozen=True)
class Line:
    from_zone: str
    to_zone: str
    susceptance: float
    max_flow: float
    id: str = ""

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", f"{self.from_zone}_{self.to_zone}")
        if self.from_zone == self.to_zone:
            raise SpecError(f"line {self.id} connects zone {self.from_zone} to itself")
        if not self.susceptance > 0:
            raise SpecError(f"line {self.id} susceptance must be > 0")
        if not self.max_flow >= 0:
            raise SpecError(f"line {self.id} max_flow must be >= 0")


@dataclass(frozen=True)
class CostParams:
    invest_power: float = 0.0
    invest_energy: float = 0.0
    invest_charge: float = 0.0
    degradation: float = 0.0
    fixed_om: float = 0.0
    fixed_om_charge: float = 0.0
    var_om: float = 0.0
    fuel: float = 0.0
    var_om_charge: float = 0.0
    startup: float = 0.0


STORAGE_ONLY_COSTS = ("invest_energy", "invest_charge", "degradation", "fixed_om_charge", "var_om_charge")


@dataclass(frozen=True)
class OperationalParams:
    unit_size: float = 1.0
    rho_min: float = 0.0
    rho_max: float = 1.0
    ramp_up: float = 1.0
    ramp_down: float = 1.0
    depth_of_discharge: float = 1.0
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    max_capacity: float = math.inf


@dataclass(frozen=True)
class Resource:
    id: str
    kind: ResourceKind
    zone: str
    costs: CostParams = field(default_factory=CostParams)
    ops: OperationalParams = field(default_factory=OperationalParams)
    availability_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ResourceKind(self.kind))
        costs, ops = self.costs, self.ops
        for name, value in vars(costs).items():
            if not value >= 0:
                raise SpecError(f"resource {self.id}: cost {name} must be >= 0")
        if self.kind is not ResourceKind.STORAGE:
            for name in STORAGE_ONLY_COSTS:
                if getattr(costs, name) != 0:
                    raise SpecError(f"resource {self.id}: {name} is storage-only and must be 0")
        if self.kind is not ResourceKind.THERMAL and costs.startup != 0:
            raise SpecError(f"resource {self.id}: startup cost is thermal-only")
        if not 0 <= ops.rho_min <= ops.rho_max <= 1:
            raise SpecError(f"resource {self.id}: need 0 <= rho_min <= rho_max <= 1")
        if not (0 < ops.eta_charge <= 1 and 0 < ops.eta_discharge <= 1):
            raise SpecError(f"resource {self.id}: efficiencies must lie in (0, 1]")
        if not 0 < ops.depth_of_discharge <= 1:
            raise SpecError(f"resource {self.id}: depth_of_discharge must lie in (0, 1]")
        if self.kind is ResourceKind.THERMAL and not ops.unit_size > 0:
            raise SpecError(f"resource {self.id}: thermal unit_size must be > 0")
        if not (ops.ramp_up >= 0 and ops.ramp_down >= 0 and ops.max_capacity >= 0):
            raise SpecError(f"resource {self.id}: ramps and max_capacity must be >= 0")
        if self.kind is ResourceKind.VRE and not self.availability_column:
            raise SpecError(f"resource {self.id}: vre resources need an availability_column")
        if self.kind is not ResourceKind.VRE and self.availability_column:
            raise SpecError(f"resource {self.id}: only vre resources take an availability_column")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemSpec:
    zones: tuple[Zone, ...]
    lines: tuple[Line, ...]
    resources: tuple[Resource, ...]
    load: Mapping[str, np.ndarray]
    availability: Mapping[str, np.ndarray]
    voll: Mapping[str, float]
    theta_bounds: tuple[float, float] = (-math.pi, math.pi)
    hours: int = DEFAULT_HOURS

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "load", {z: _frozen(v) for z, v in self.load.items()})
        object.__setattr__(self, "availability", {c: _frozen(v) for c, v in self.availability.items()})
        if isinstance(self.voll, (int, float)):
            object.__setattr__(self, "voll", {z.id: float(self.voll) for z in self.zones})
        else:
            object.__setattr__(self, "voll", {z: float(v) for z, v in self.voll.items()})
        object.__setattr__(self, "theta_bounds", tuple(float(b) for b in self.theta_bounds))
        self._validate()

    def _validate(self):
        ids = [z.id for z in self.zones]
        if not ids:
            raise SpecError("at least one zone is required")
        if len(set(ids)) != len(ids):
            raise SpecError("zone ids must be unique")
        zone_set = set(ids)
        pairs = set()
        for ln in self.lines:
            if ln.from_zone not in zone_set or ln.to_zone not in zone_set:
                raise SpecError(f"line {ln.id} references an unknown zone")
            pair = frozenset((ln.from_zone, ln.to_zone))
            if pair in pairs:
                raise SpecError(f"more than one line between {ln.from_zone} and {ln.to_zone}")
            pairs.add(pair)
        if len({ln.id for ln in self.lines}) != len(self.lines):
            raise SpecError("line ids must be unique")
        res_ids = [r.id for r in self.resources]
        if len(set(res_ids)) != len(res_ids):
            raise SpecError("resource ids must be unique")
        for r in self.resources:
            if r.zone not in zone_set:
                raise SpecError(f"resource {r.id} references unknown zone {r.zone}")
            if r.kind is ResourceKind.VRE and r.availability_column not in self.availability:
                raise SpecError(f"resource {r.id} references missing availability column",
                                column=r.availability_column)
        if self.hours < 1:
            raise SpecError("hours must be >= 1")
        for z in ids:
            if z not in self.load:
                raise SpecError(f"no load series for zone {z}", column=f"load.{z}")
            if z not in self.voll:
                raise SpecError(f"no voll for zone {z}")
        for name, table in (("load", self.load), ("avail", self.availability)):
            for col, values in table.items():
                if values.shape != (self.hours,):
                    raise SpecError(f"series has {values.size} rows, expected {self.hours}",
                                    column=f"{name}.{col}")
                if not np.all(np.isfinite(values)):
                    raise SpecError("non-finite value", column=f"{name}.{col}")
        for z, values in self.load.items():
            if values.min(initial=0.0) < 0:
                raise SpecError("load must be >= 0", column=f"load.{z}", row=int(np.argmin(values)) + 1)
        for col, values in self.availability.items():
            bad = np.flatnonzero((values < 0) | (values > 1))
            if bad.size:
                raise SpecError("availability outside [0, 1]", column=f"avail.{col}", row=int(bad[0]) + 1)
        lo, hi = self.theta_bounds
        if not lo <= hi:
            raise SpecError("theta_bounds must satisfy min <= max")

    @property
    def zone_ids(self) -> list[str]:
        return [z.id for z in self.zones]

    def of_kind(self, kind: ResourceKind) -> list[Resource]:
        return [r for r in self.resources if r.kind is ResourceKind(kind)]

    @property
    def generators(self) -> list[Resource]:
        """Energy-producing resources (thermal and vre), excluding storage."""
        return [r for r in self.resources if r.kind is not ResourceKind.STORAGE]

    def vre_columns(self) -> list[str]:
        return sorted({r.availability_column for r in self.of_kind(ResourceKind.VRE)})

    def with_series(self, load, availability, hours=None) -> "SystemSpec":
        """Same system with replaced hourly tables."""
        if hours is None:
            hours = len(next(iter(load.values())))
        return replace(self, load=load, availability=availability, hours=int(hours))

    def total_demand(self) -> float:
        return float(sum(v.sum() for v in self.load.values()))


# ---------------------------------------------------------------- ingestion


def read_series_csv(path, prefix: str, hours: int) -> dict[str, np.ndarray]:
    """Read an hourly CSV whose value columns are named ``<prefix>.<entity>``."""
    path = Path(path)
    if not path.is_file():
        raise SpecError("missing time-series file", file=str(path))
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SpecError("empty file, header row is mandatory", file=str(path))
    header = [h.strip() for h in rows[0]]
    if header[0] != "hour":
        raise SpecError("first column must be 'hour'", file=str(path), column=header[0])
    entities = []
    for col in header[1:]:
        kind, _, entity = col.partition(".")
        if kind != prefix or not entity:
            raise SpecError(f"column must be named '{prefix}.<entity>'", file=str(path), column=col)
        entities.append(entity)
    if len(set(entities)) != len(entities):
        raise SpecError("duplicate column", file=str(path))
    body = rows[1:]
    if len(body) != hours:
        raise SpecError(f"row count {len(body)} != hours {hours}", file=str(path))
    values = np.empty((hours, len(entities)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise SpecError(f"expected {len(header)} fields, got {len(row)}", file=str(path), row=i + 2)
        try:
            hour = int(row[0])
        except ValueError:
            raise SpecError("hour must be an integer", file=str(path), column="hour", row=i + 2) from None
        if hour != i + 1:
            raise SpecError(f"hour {hour} out of sequence, expected {i + 1}", file=str(path),
                            column="hour", row=i + 2)
        for j, cell in enumerate(row[1:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise SpecError(f"cannot parse {cell!r}", file=str(path), column=header[j + 1],
                                row=i + 2) from None
    return {e: values[:, j] for j, e in enumerate(entities)}


def write_series_csv(path, prefix: str, series: Mapping[str, np.ndarray]):
    names = sorted(series)
    n = len(series[names[0]]) if names else 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour"] + [f"{prefix}.{e}" for e in names])
        for t in range(n):
            w.writerow([t + 1] + [repr(float(series[e][t])) for e in names])


def _resource_from_dict(d: dict) -> Resource:
    known = {"id", "kind", "zone", "costs", "ops", "availability_column"}
    extra = set(d) - known
    if extra:
        raise SpecError(f"resource {d.get('id')}: unknown keys {sorted(extra)}")
    col = d.get("availability_column")
    if col and col.startswith("avail."):
        col = col[len("avail."):]
    ops = dict(d.get("ops", {}))
    if ops.get("max_capacity") is None:
        ops["max_capacity"] = math.inf
    try:
        return Resource(id=d["id"], kind=ResourceKind(d["kind"]), zone=d["zone"],
                        costs=CostParams(**d.get("costs", {})), ops=OperationalParams(**ops),
                        availability_column=col)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"resource {d.get('id')}: {exc}") from None


def load_system(config_path) -> SystemSpec:
    """Load and validate a system from its JSON config and referenced CSVs."""
    config_path = Path(config_path)
    if not config_path.is_file():
        raise SpecError("missing config file", file=str(config_path))
    try:
        cfg = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc}", file=str(config_path)) from None
    return system_from_dict(cfg, base_dir=config_path.parent, source=str(config_path))


def system_from_dict(cfg: dict, base_dir=".", source="<config>") -> SystemSpec:
    for key in ("zones", "resources", "files", "voll"):
        if key not in cfg:
            raise SpecError(f"missing key '{key}'", file=source)
    hours = int(cfg.get("hours", DEFAULT_HOURS))
    base_dir = Path(base_dir)
    try:
        zones = [Zone(**z) for z in cfg["zones"]]
        lines = [Line(**ln) for ln in cfg.get("lines", [])]
    except TypeError as exc:
        raise SpecError(str(exc), file=source) from None
    resources = [_resource_from_dict(r) for r in cfg["resources"]]
    files = cfg["files"]
    if "load" not in files:
        raise SpecError("files.load is required", file=source)
    load = read_series_csv(base_dir / files["load"], "load", hours)
    availability = {}
    if files.get("availability"):
        availability = read_series_csv(base_dir / files["availability"], "avail", hours)
    for r in resources:
        if r.kind is ResourceKind.VRE and r.availability_column not in availability:
            raise SpecError(f"resource {r.id} references absent availability column",
                            file=str(base_dir / files.get("availability", "")),
                            column=f"avail.{r.availability_column}")
    theta = cfg.get("theta_bounds", [-math.pi, math.pi])
    return SystemSpec(zones=zones, lines=lines, resources=resources, load=load,
                      availability=availability, voll=cfg["voll"], theta_bounds=tuple(theta),
                      hours=hours)


def system_to_dict(spec: SystemSpec, files: Mapping[str, str]) -> dict:
    def res(r: Resource):
        d = {"id": r.id, "kind": r.kind.value, "zone": r.zone, "costs": vars(r.costs).copy(),
             "ops": vars(r.ops).copy()}
        if math.isinf(d["ops"]["max_capacity"]):
            d["ops"]["max_capacity"] = None
        if r.availability_column:
            d["availability_column"] = r.availability_column
        return d

    return {
        "zones": [vars(z).copy() for z in spec.zones],
        "lines": [vars(ln).copy() for ln in spec.lines],
        "resources": [res(r) for r in spec.resources],
        "files": dict(files),
        "voll": dict(spec.voll),
        "hours": spec.hours,
        "theta_bounds": list(spec.theta_bounds),
    }


def save_system(spec: SystemSpec, directory) -> Path:
    """Write ``system.json`` plus ``load.csv``/``availability.csv`` into *directory*."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_series_csv(directory / "load.csv", "load", spec.load)
    files = {"load": "load.csv"}
    if spec.availability:
        write_series_csv(directory / "availability.csv", "avail", spec.availability)
        files["availability"] = "availability.csv"
    path = directory / "system.json"
    path.write_text(json.dumps(system_to_dict(spec, files), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- periods


@dataclass(frozen=True)
class PeriodMatrix:
    data: np.ndarray
    period_hours: int
    column_labels: tuple[tuple[str, str, int], ...]
    scaling: np.ndarray | None = None  # shape (2, d): per-column (min, max)

    def __post_init__(self):
        data = _frozen(np.atleast_2d(self.data))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "column_labels", tuple(tuple(c) for c in self.column_labels))
        if len(self.column_labels) != data.shape[1]:
            raise ValueError(f"{len(self.column_labels)} labels for {data.shape[1]} columns")
        if self.scaling is not None:
            s = _frozen(self.scaling)
            if s.shape != (2, data.shape[1]):
                raise ValueError("scaling must have shape (2, d)")
            object.__setattr__(self, "scaling", s)

    @property
    def n_periods(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def series_keys(self) -> list[tuple[str, str]]:
        seen = []
        for kind, entity, _ in self.column_labels:
            if not seen or seen[-1] != (kind, entity):
                seen.append((kind, entity))
        return seen

    def columns_of(self, kinds: Iterable[str]) -> np.ndarray:
        kinds = set(kinds)
        return np.array([i for i, c in enumerate(self.column_labels) if c[0] in kinds], dtype=int)

    def take_columns(self, idx) -> "PeriodMatrix":
        idx = np.asarray(idx, dtype=int)
        return PeriodMatrix(self.data[:, idx], self.period_hours,
                            [self.column_labels[i] for i in idx],
                            None if self.scaling is None else self.scaling[:, idx])

    def take_rows(self, rows) -> "PeriodMatrix":
        return replace(self, data=self.data[np.asarray(rows, dtype=int)])

    def with_data(self, data) -> "PeriodMatrix":
        return replace(self, data=data)

    def unflatten(self, row) -> dict[tuple[str, str], np.ndarray]:
        """Split one row back into its per-series hourly blocks."""
        row = np.asarray(row)
        q = self.period_hours
        return {key: row[j * q:(j + 1) * q] for j, key in enumerate(self.series_keys())}


def hstack(a: PeriodMatrix, b: PeriodMatrix) -> PeriodMatrix:
    """Column-wise concatenation ``[a | b]`` of two matrices over the same periods."""
    if a.n_periods != b.n_periods or a.period_hours != b.period_hours:
        raise ValueError("matrices must share periods and period length")
    scaling = None
    if a.scaling is not None and b.scaling is not None:
        scaling = np.hstack([a.scaling, b.scaling])
    return PeriodMatrix(np.hstack([a.data, b.data]), a.period_hours,
                        a.column_labels + b.column_labels, scaling)


def input_series(spec: SystemSpec) -> list[tuple[tuple[str, str], np.ndarray]]:
    items = [(("avail", c), spec.availability[c]) for c in spec.vre_columns()]
    items += [(("load", z), spec.load[z]) for z in spec.zone_ids]
    return sorted(items, key=lambda kv: kv[0])


def output_series_keys(spec: SystemSpec) -> list[tuple[str, str]]:
    keys = [("power", r.id) for r in spec.generators]
    for r in spec.of_kind(ResourceKind.STORAGE):
        keys += [("charge", r.id), ("discharge", r.id)]
    keys += [("nse", z) for z in spec.zone_ids]
    keys += [("flow", ln.id) for ln in spec.lines]
    return sorted(keys)


def _flatten(keyed: Sequence[tuple[tuple[str, str], np.ndarray]], p: int, q: int):
    blocks, labels = [], []
    for (kind, entity), values in keyed:
        blocks.append(np.asarray(values, dtype=float)[: p * q].reshape(p, q))
        labels += [(kind, entity, h) for h in range(q)]
    data = np.hstack(blocks) if blocks else np.zeros((p, 0))
    return data, labels


def periodize(spec: SystemSpec, q: int, series_selector: str = "input",
              output_source: Sequence | None = None) -> PeriodMatrix:
    """Cut the horizon into ``p = hours // q`` disjoint periods, one row each.

    Within a row every series occupies ``q`` consecutive columns (hour-major),
    series are ordered by ``(kind, entity)``; with ``"both"`` the input block
    precedes the output block. ``output_source`` holds one solved single-period
    model per period, each exposing ``series(kind, entity)``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if q > spec.hours:
        raise ValueError(f"q={q} exceeds the horizon of {spec.hours} hours")
    if series_selector not in ("input", "output", "both"):
        raise ValueError(f"unknown series selector {series_selector!r}")
    p = spec.hours // q
    parts = []
    if series_selector in ("input", "both"):
        parts.append(_flatten(input_series(spec), p, q))
    if series_selector in ("output", "both"):
        if output_source is None or len(output_source) < p:
            raise ValueError(f"output features need {p} per-period solutions")
        keyed = []
        for kind, entity in output_series_keys(spec):
            rows = []
            for i in range(p):
                sol = output_source[i]
                if sol is None:
                    raise ValueError(f"missing solution for period {i}")
                values = np.asarray(sol.series(kind, entity), dtype=float)
                if values.shape != (q,):
                    raise ValueError(f"period {i} series {kind}.{entity} has length {values.size}, expected {q}")
                rows.append(values)
            keyed.append(((kind, entity), np.concatenate(rows)))
        parts.append(_flatten(keyed, p, q))
    data = np.hstack([d for d, _ in parts])
    labels = [lab for _, labs in parts for lab in labs]
    return PeriodMatrix(data, q, labels)


def normalize(m: PeriodMatrix) -> PeriodMatrix:
    """Per-column min-max scaling to [0, 1]; constant columns become zero.

    Normalizing an already-normalized matrix composes the stored scaling so
    that ``denormalize`` still recovers the original values.
    """
    x = m.data
    lo = x.min(axis=0) if x.size else np.zeros(x.shape[1])
    hi = x.max(axis=0) if x.size else np.zeros(x.shape[1])
    span = hi - lo
    const = span == 0
    y = np.where(const, 0.0, (x - lo) / np.where(const, 1.0, span))
    if m.scaling is not None:
        olo, ohi = m.scaling
        ospan = ohi - olo
        lo, hi = olo + ospan * lo, olo + ospan * hi
    return PeriodMatrix(y, m.period_hours, m.column_labels, np.vstack([lo, hi]))


def denormalize(m: PeriodMatrix) -> PeriodMatrix:
    if m.scaling is None:
        raise ValueError("matrix carries no scaling to invert")
    lo, hi = m.scaling
    x = np.where(hi == lo, lo, lo + (hi - lo) * m.data)
    return PeriodMatrix(x, m.period_hours, m.column_labels, None)
