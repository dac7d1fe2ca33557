"""Staged batch pipeline: ``rpsae <command> --config run.json --out runs``.

Every stage writes into ``<out>/<config hash>/<stage>/[<method>-k<k>-s<seed>/]`` together with
a ``stage.json`` recording the config hash and digests of the files it read.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics, rps
from .cem import Full, Reduced, load_solution, save_solution, solve_periods, solve_variant
from .datamodel import SpecError, load_system, periodize, save_system
from .lpsolve import SolverOptions
from .nn import TrainConfig
from .nn.network import load_network
from .nn.train import TrainingDivergence
from .synthetic import make_system

EXIT_OK, EXIT_CONFIG, EXIT_UPSTREAM, EXIT_SOLVER, EXIT_DIVERGENCE = 0, 2, 3, 4, 5


class ConfigError(Exception):
    pass


class UpstreamMissing(Exception):
    pass


class SolverFailure(Exception):
    pass


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class RunConfig:
    system: str
    q: int = 168
    k: tuple = (4, 8, 20)
    methods: tuple = rps.METHODS
    seeds: tuple = (0,)
    solver: SolverOptions = SolverOptions()
    rps: rps.RpsConfig = rps.RpsConfig()
    use_original_medoid: bool = False
    scale_invest_per_period: bool = False

    def to_json(self) -> dict:
        return {"system": self.system, "q": self.q, "k": list(self.k), "methods": list(self.methods),
                "seeds": list(self.seeds), "solver": asdict(self.solver), "rps": self.rps.to_json(),
                "use_original_medoid": self.use_original_medoid,
                "scale_invest_per_period": self.scale_invest_per_period}

    @property
    def rps_config(self) -> rps.RpsConfig:
        return replace(self.rps, use_original_medoid=self.use_original_medoid)


def _system_files(system_path: Path) -> list[Path]:
    cfg = json.loads(system_path.read_text())
    return [system_path] + [system_path.parent / f for f in sorted(cfg.get("files", {}).values()) if f]


def load_run_config(path) -> RunConfig:
    """A run config JSON, or a bare system config (run defaults apply)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if "zones" in d:
        d = {"system": path.name}
    if "system" not in d:
        raise ConfigError(f"{path}: missing key 'system'")
    known = {"system", "q", "k", "methods", "seeds", "solver", "rps", "train", "use_original_medoid",
             "scale_invest_per_period"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        rcfg = rps.RpsConfig.from_json(d.get("rps", {}))
        if "train" in d:
            rcfg = replace(rcfg, train=TrainConfig(**d["train"]))
        cfg = RunConfig(
            system=str((path.parent / d["system"]).resolve()),
            q=int(d.get("q", 168)),
            k=tuple(int(k) for k in d.get("k", (4, 8, 20))),
            methods=tuple(d.get("methods", rps.METHODS)),
            seeds=tuple(int(s) for s in d.get("seeds", (0,))),
            solver=SolverOptions(**d.get("solver", {})),
            rps=rcfg,
            use_original_medoid=bool(d.get("use_original_medoid", False)),
            scale_invest_per_period=bool(d.get("scale_invest_per_period", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for m in cfg.methods:
        if m not in rps.METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(rps.METHODS)}")
    return cfg


def config_hash(cfg: RunConfig) -> str:
    """Digest of everything artifacts depend on; k, methods and seeds only pick sub-directories."""
    d = cfg.to_json()
    for key in ("system", "k", "methods", "seeds"):
        d.pop(key)
    h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
    for f in _system_files(Path(cfg.system)):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def combo_name(method, k, seed) -> str:
    return f"{method}-k{k}-s{seed}"


# ---------------------------------------------------------------- stage bookkeeping


@dataclass
class Run:
    cfg: RunConfig
    root: Path  # <out>/<hash>
    hash: str
    force: bool = False
    threads: int | None = None
    timings: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    _spec: object = None

    @property
    def spec(self):
        if self._spec is None:
            try:
                self._spec = load_system(self.cfg.system)
            except SpecError as exc:
                raise ConfigError(str(exc)) from None
        return self._spec

    def combos(self, methods=None, ks=None, seeds=None):
        p = self.spec.hours // self.cfg.q
        for k in ks or self.cfg.k:
            if not 1 <= k <= p:
                raise ConfigError(f"k={k} outside [1, p={p}]")
        return [(m, k, s) for m in (methods or self.cfg.methods) for k in (ks or self.cfg.k)
                for s in (seeds or self.cfg.seeds)]

    def dir(self, stage, combo=None) -> Path:
        d = self.root / stage
        return d / combo if combo else d

    def system_inputs(self) -> list[Path]:
        return _system_files(Path(self.cfg.system))

    def require(self, stage, combo=None) -> Path:
        d = self.dir(stage, combo)
        meta = d / "stage.json"
        if not meta.is_file():
            name = f"{stage}/{combo}" if combo else stage
            raise UpstreamMissing(f"missing upstream stage {name} in {self.root}; run it first")
        if json.loads(meta.read_text()).get("config_hash") != self.hash:
            raise ConfigError(f"{d} was produced under a different config hash")
        return d

    def stage(self, stage, combo, inputs, producer):
        """Run *producer(dir)* unless the stage is already up to date for *inputs*."""
        d = self.dir(stage, combo)
        meta_path = d / "stage.json"
        digests = {self._rel(p): _digest(p) for p in inputs}
        if meta_path.is_file() and not self.force:
            meta = json.loads(meta_path.read_text())
            if meta.get("config_hash") == self.hash and meta.get("inputs") == digests \
                    and all((d / o).is_file() for o in meta.get("outputs", [])):
                self._record(stage, combo, d, meta)
                return d
            raise ConfigError(f"stale artifacts in {d} (config or inputs changed); rerun with --force")
        d.mkdir(parents=True, exist_ok=True)
        for old in d.iterdir():
            if old.is_file():
                old.unlink()
        t0 = time.perf_counter()
        producer(d)
        self.timings[f"{stage}/{combo}" if combo else stage] = time.perf_counter() - t0
        outputs = sorted(p.name for p in d.iterdir() if p.is_file())
        meta = {"stage": stage, "combo": combo, "config_hash": self.hash, "inputs": digests,
                "outputs": outputs}
        meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        self._record(stage, combo, d, meta)
        return d

    def _rel(self, p: Path) -> str:
        p = Path(p).resolve()
        try:
            return str(p.relative_to(self.root.resolve()))
        except ValueError:
            return f"system:{p.name}"

    def _record(self, stage, combo, d, meta):
        self.records.append({"stage": stage, "combo": combo, "dir": self._rel(d),
                             "inputs": sorted(meta["inputs"]), "outputs": meta["outputs"]})


def open_run(cfg: RunConfig, out, force=False, threads=None) -> Run:
    if not Path(cfg.system).is_file():
        raise ConfigError(f"system config {cfg.system} not found")
    h = config_hash(cfg)
    root = Path(out) / h
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(json.dumps(cfg.to_json(), indent=1, sort_keys=True) + "\n")
    return Run(cfg, root, h, force, threads)


# ---------------------------------------------------------------- stages


def _check_solution(sol, what):
    if not sol.optimal:
        raise SolverFailure(f"{what}: solver returned {sol.status} ({sol.message})")


def stage_solve_full(run: Run) -> Path:
    def produce(d):
        sol = solve_variant(run.spec, Full(), run.cfg.solver, run.cfg.scale_invest_per_period)
        save_solution(sol, d, run.spec)
        _check_solution(sol, "full-space model")
    return run.stage("full", None, run.system_inputs(), produce)


def stage_solve_periods(run: Run) -> Path:
    def produce(d):
        sols = solve_periods(run.spec, run.cfg.q, run.cfg.solver, run.threads, run.cfg.scale_invest_per_period)
        status = [s.status for s in sols]
        (d / "status.json").write_text(json.dumps({"status": status}, indent=1) + "\n")
        bad = [i for i, s in enumerate(sols) if not s.optimal]
        if bad:
            raise SolverFailure(f"single-period models {bad} not optimal")
        out = periodize(run.spec, run.cfg.q, "output", sols)
        rps.write_period_rows_csv(d / "outputs.csv", out)
    return run.stage("periods", None, run.system_inputs(), produce)


def _matrices(run: Run, method):
    inp = periodize(run.spec, run.cfg.q, "input")
    out = None
    if method in rps.NEEDS_OUTPUT:
        d = run.require("periods")
        out = rps.read_period_rows_csv(d / "outputs.csv", run.cfg.q)
    return inp, out


def _train_inputs(run, method):
    ins = run.system_inputs()
    if method in rps.NEEDS_OUTPUT:
        ins = ins + [run.require("periods") / "outputs.csv"]
    return ins


def stage_train(run: Run, method, k, seed) -> Path:
    combo = combo_name(method, k, seed)

    def produce(d):
        inp, out = _matrices(run, method)
        fit = rps.fit_latent(method, inp, out, k, seed, run.cfg.rps_config)
        np.savetxt(d / "latent.csv", fit.latent, delimiter=",", fmt="%.17g")
        (d / "fit.json").write_text(json.dumps(rps._jsonable({"method": method, "k": k, "seed": seed,
                                                                "losses": fit.losses}),
                                               indent=1, sort_keys=True) + "\n")
        for name, net in fit.networks.items():
            rps.save_network(net, d / f"{name}.net")
    return run.stage("train", combo, _train_inputs(run, method), produce)


def _load_fit(d: Path) -> rps.LatentFit:
    info = json.loads((d / "fit.json").read_text())
    latent = np.loadtxt(d / "latent.csv", delimiter=",", ndmin=2)
    nets = {p.stem: load_network(p)[0] for p in sorted(d.glob("*.net"))}
    return rps.LatentFit(info["method"], info["k"], latent, nets, info["losses"])


def stage_cluster(run: Run, method, k, seed) -> Path:
    combo = combo_name(method, k, seed)
    up = run.require("train", combo)

    def produce(d):
        fit = _load_fit(up)
        inp = periodize(run.spec, run.cfg.q, "input")
        res = rps.select(fit, inp, seed, run.cfg.rps_config)
        rps.save_result(res, d, seed, run.hash)
    inputs = sorted(p for p in up.iterdir() if p.name != "stage.json") + run.system_inputs()
    return run.stage("cluster", combo, inputs, produce)


def stage_build_reduced(run: Run, method, k, seed) -> Path:
    combo = combo_name(method, k, seed)
    up = run.require("cluster", combo)

    def produce(d):
        res = rps.load_result(up)
        spec_r, w = rps.build_rcem_inputs(run.spec, res, run.cfg.q)
        save_system(spec_r, d)
        variant = rps.rcem_variant(res, run.cfg.q)
        (d / "variant.json").write_text(json.dumps(
            {"periods": list(variant.periods), "weights": list(variant.weights), "q": variant.q,
             "total_periods": variant.total_periods}, indent=1, sort_keys=True) + "\n")
        with (d / "weights.csv").open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["hour", "weight"])
            for t, v in enumerate(w):
                wr.writerow([t + 1, repr(float(v))])
    inputs = [up / "manifest.json", up / "representatives.csv", up / "clusters.json"] + run.system_inputs()
    return run.stage("reduced", combo, inputs, produce)


def stage_solve_reduced(run: Run, method, k, seed) -> Path:
    combo = combo_name(method, k, seed)
    up = run.require("reduced", combo)

    def produce(d):
        spec_r = load_system(up / "system.json")
        v = json.loads((up / "variant.json").read_text())
        variant = Reduced(tuple(v["periods"]), tuple(v["weights"]), v["q"], v["total_periods"])
        sol = solve_variant(spec_r, variant, run.cfg.solver, run.cfg.scale_invest_per_period)
        save_solution(sol, d, spec_r)
        _check_solution(sol, f"reduced model {combo}")
    inputs = sorted(p for p in up.iterdir() if p.name != "stage.json")
    return run.stage("rcem", combo, inputs, produce)


def stage_redispatch(run: Run, method, k, seed) -> Path:
    combo = combo_name(method, k, seed)
    up = run.require("rcem", combo)

    def produce(d):
        red = load_solution(up)
        sol = metrics.redispatch(run.spec, red, run.cfg.solver)
        save_solution(sol, d, run.spec)
        _check_solution(sol, f"redispatch {combo}")
    return run.stage("redispatch", combo, [up / "capacity.csv", up / "summary.json"] + run.system_inputs(),
                     produce)


def stage_evaluate(run: Run, combos) -> Path:
    full_dir = run.require("full")
    dirs = [(c, run.require("rcem", combo_name(*c)), run.require("redispatch", combo_name(*c))) for c in combos]

    def produce(d):
        full = load_solution(full_dir)
        cases = [metrics.CaseResult(combo_name(*c), run.spec, full, load_solution(r), load_solution(x), c[0])
                 for c, r, x in dirs]
        metrics.evaluate(cases).write(d)
    inputs = [full_dir / "summary.json", full_dir / "capacity.csv", full_dir / "dispatch.csv"]
    for _, r, x in dirs:
        inputs += [r / "summary.json", r / "capacity.csv", x / "summary.json", x / "dispatch.csv"]
    return run.stage("evaluate", None, inputs, produce)


def emit_plots(run_root: Path, out: Path | None = None) -> Path:
    """Distribution CSVs per metric and a full-vs-reduced capacity/generation table."""
    run_root = Path(run_root)
    ev = run_root / "evaluate"
    if not (ev / "errors.csv").is_file():
        raise UpstreamMissing(f"no evaluate/errors.csv under {run_root}")
    out = Path(out) if out else run_root / "plots"
    out.mkdir(parents=True, exist_ok=True)
    summary = json.loads((ev / "errors_summary.json").read_text())
    methods = summary.get("cases", {})
    by_metric = defaultdict(list)
    for case, metric, entity, value in metrics.read_errors_csv(ev / "errors.csv"):
        if entity == "*":
            by_metric[metric].append((methods.get(case, ""), case, value))
    for metric, rows in sorted(by_metric.items()):
        with (out / f"distribution_{metric}.csv").open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "case", "value"])
            for method, case, value in sorted(rows):
                wr.writerow([method, case, repr(value)])
    full_dir = run_root / "full"
    rows = []
    if (full_dir / "summary.json").is_file():
        full = load_solution(full_dir)
        for case in sorted(methods):
            rc, rd = run_root / "rcem" / case, run_root / "redispatch" / case
            if not (rc / "summary.json").is_file() or not (rd / "summary.json").is_file():
                continue
            red, dis = load_solution(rc), load_solution(rd)
            for rid, cap in sorted(full.capacities.values.items()):
                rcap = red.capacities[rid]
                for attr in ("size", "energy", "charge"):
                    a, b = getattr(cap, attr), getattr(rcap, attr)
                    if a or b:
                        rows.append([case, methods[case], rid, f"capacity_{attr}", repr(a), repr(b), repr(b - a)])
                if full.get("power", rid) is not None:
                    a, b = float(full.series("power", rid).sum()), float(dis.series("power", rid).sum())
                    rows.append([case, methods[case], rid, "generation", repr(a), repr(b), repr(b - a)])
    with (out / "capacity_generation_diff.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["case", "method", "resource", "quantity", "full", "reduced", "difference"])
        wr.writerows(rows)
    return out


def run_pipeline(run: Run, combos) -> Path:
    stage_solve_full(run)
    if any(m in rps.NEEDS_OUTPUT for m, _, _ in combos):
        stage_solve_periods(run)
    for c in combos:
        stage_train(run, *c)
        stage_cluster(run, *c)
        stage_build_reduced(run, *c)
        stage_solve_reduced(run, *c)
        stage_redispatch(run, *c)
    stage_evaluate(run, combos)
    emit_plots(run.root)
    write_manifest(run)
    return run.root


def write_manifest(run: Run):
    manifest = {"config_hash": run.hash, "config": run.cfg.to_json(), "stages": run.records,
                "timings_file": "timings.json"}
    (run.root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (run.root / "timings.json").write_text(json.dumps(run.timings, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- command line

PER_COMBO = {"train-ae": stage_train, "cluster": stage_cluster, "build-reduced": stage_build_reduced,
             "solve-reduced": stage_solve_reduced, "redispatch": stage_redispatch}


def _csv(kind):
    def parse(s):
        try:
            return [kind(x) for x in s.split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {s!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpsae", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    commands = ["solve-full", "solve-periods", *PER_COMBO, "evaluate", "pipeline"]
    for name in commands:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--force", action="store_true")
        sp.add_argument("--use-original-medoid", action="store_true")
        sp.add_argument("--k", type=_csv(int))
        sp.add_argument("--method", type=_csv(str))
    sp = sub.add_parser("emit-plots")
    sp.add_argument("run_dir", nargs="?")
    sp.add_argument("--config")
    sp.add_argument("--out", default="runs")
    sp = sub.add_parser("make-synthetic")
    sp.add_argument("--out", required=True)
    sp.add_argument("--hours", type=int, default=1680)
    sp.add_argument("--zones", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    for flag in ("thermal", "solar", "wind", "storage", "unit-commitment"):
        sp.add_argument(f"--no-{flag}", action="store_true")
    return ap


def _make_synthetic(args):
    spec = make_system(hours=args.hours, seed=args.seed, zones=args.zones, thermal=not args.no_thermal,
                       solar=not args.no_solar, wind=not args.no_wind, storage=not args.no_storage,
                       unit_commitment=not args.no_unit_commitment)
    path = save_system(spec, args.out)
    q = min(168, args.hours)
    run = {"system": "system.json", "q": q, "k": [min(4, args.hours // q)], "methods": list(rps.METHODS),
           "seeds": [0]}
    (Path(args.out) / "run.json").write_text(json.dumps(run, indent=1) + "\n")
    print(path)


def dispatch(args) -> int:
    if args.command == "make-synthetic":
        _make_synthetic(args)
        return EXIT_OK
    if args.command == "emit-plots":
        if args.run_dir:
            root = Path(args.run_dir)
        elif args.config:
            cfg = load_run_config(args.config)
            root = Path(args.out) / config_hash(cfg)
        else:
            raise ConfigError("emit-plots needs a run directory or --config")
        print(emit_plots(root))
        return EXIT_OK
    cfg = load_run_config(args.config)
    if args.use_original_medoid:
        cfg = replace(cfg, use_original_medoid=True)
    run = open_run(cfg, args.out, args.force, args.threads)
    seeds = [args.seed] if args.seed is not None else None
    if args.command == "solve-full":
        d = stage_solve_full(run)
    elif args.command == "solve-periods":
        d = stage_solve_periods(run)
    elif args.command in PER_COMBO:
        for c in run.combos(args.method, args.k, seeds):
            d = PER_COMBO[args.command](run, *c)
    elif args.command == "evaluate":
        d = stage_evaluate(run, run.combos(args.method, args.k, seeds))
    else:
        d = run_pipeline(run, run.combos(args.method, args.k, seeds))
    print(d)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UpstreamMissing as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
