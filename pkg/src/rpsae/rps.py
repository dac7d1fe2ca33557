"""Representative period selection: k-means baselines and three autoencoder couplings."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cem import Reduced
from .clustering import ClusterResult, kmeans, load_clusters, save_clusters
from .datamodel import PeriodMatrix, SystemSpec, denormalize, hstack, normalize
from .nn import Adam, ClusterState, Network, TrainConfig, build_autoencoder, train
from .nn.network import load_network, save_network
from .nn.train import TrainingDivergence, refresh_clusters, restore, snapshot

METHODS = ("i_kmeans", "io_kmeans", "ae_type1", "ae_type2", "ae_type3")
NEEDS_OUTPUT = {"io_kmeans", "ae_type2", "ae_type3"}


@dataclass(frozen=True)
class RpsConfig:
    train: TrainConfig = TrainConfig()
    filters: int = 50
    kernel: int = 10
    lstm_units: int = 50
    restarts: int = 100
    gamma: float = 0.1
    finetune_epochs: int = 20  # combined-loss epochs after reconstruction pretraining
    alpha_grid_size: int = 100
    intermediate_pool: int = 1
    use_original_medoid: bool = False

    def __post_init__(self):
        if self.alpha_grid_size < 2:
            raise ValueError("alpha grid needs at least 2 points")

    def to_json(self) -> dict:
        d = asdict(self)
        d["train"] = asdict(self.train)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RpsConfig":
        d = dict(d)
        d["train"] = TrainConfig(**d.get("train", {}))
        return cls(**d)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RpsResult:
    method: str
    k: int
    representative_periods: np.ndarray
    weights: np.ndarray
    representative_series: PeriodMatrix  # k rows, input columns, physical units
    losses: dict
    cluster: ClusterResult
    latent: np.ndarray
    clipping: dict = field(default_factory=dict)
    networks: dict = field(default_factory=dict)

    @property
    def n_periods(self) -> int:
        return int(self.weights.sum())


# ---------------------------------------------------------------- helpers


def clip_physical(m: PeriodMatrix) -> tuple[PeriodMatrix, dict]:
    """Clip availability to [0, 1] and load at 0; report the total/max adjustments."""
    data = m.data.copy()
    report = {}
    for kind, lo, hi in (("avail", 0.0, 1.0), ("load", 0.0, np.inf)):
        cols = m.columns_of([kind])
        if cols.size == 0:
            continue
        before = data[:, cols]
        after = np.clip(before, lo, hi)
        delta = np.abs(after - before)
        data[:, cols] = after
        report[kind] = {"total_abs": float(delta.sum()), "max_abs": float(delta.max(initial=0.0)),
                        "n_clipped": int((delta > 0).sum())}
    return m.with_data(data), report


def _cluster(latent, k, cfg: RpsConfig, seed: int) -> ClusterResult:
    return kmeans(latent, k, restarts=cfg.restarts, seed=seed)


def _check_inputs(method, input_m, output_m, k):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method in NEEDS_OUTPUT and output_m is None:
        raise ValueError(f"{method} needs an output feature matrix")
    if method not in NEEDS_OUTPUT and output_m is not None:
        raise ValueError(f"{method} only uses input features")
    if output_m is not None and output_m.n_periods != input_m.n_periods:
        raise ValueError("input and output matrices must have the same number of periods")
    if output_m is not None and output_m.period_hours != input_m.period_hours:
        raise ValueError("input and output matrices must have the same period length")
    if not 1 <= k <= input_m.n_periods:
        raise ValueError(f"need 1 <= k <= p = {input_m.n_periods}")


def _new_ae(length, pool, cfg: RpsConfig, seed) -> Network:
    return build_autoencoder(length, pool, cfg.filters, cfg.kernel, cfg.lstm_units, seed)


def _train_single(x, k, cfg: RpsConfig, seed):
    """Reconstruction pretraining, then combined-loss fine-tuning with cluster refresh."""
    net = _new_ae(x.shape[1], k, cfg, seed)
    tcfg = replace(cfg.train, seed=seed, loss="reconstruction")
    net, trace = train(net, x, tcfg)
    traces = {"pretrain": trace.loss}
    if cfg.finetune_epochs > 0:
        state = refresh_clusters(net, x, k, min(cfg.restarts, cfg.train.cluster_restarts), seed)
        fcfg = replace(tcfg, loss="combined", gamma=cfg.gamma, epochs=cfg.finetune_epochs)
        net, ftrace = train(net, x, fcfg, state)
        traces["finetune"] = ftrace.loss
    return net, traces


def _representatives(input_m: PeriodMatrix, rows: np.ndarray, decoded_norm: np.ndarray | None,
                     scaling_src: PeriodMatrix | None, cfg: RpsConfig):
    if cfg.use_original_medoid or decoded_norm is None:
        reps = input_m.take_rows(rows)
        return reps, {}
    norm = scaling_src.with_data(decoded_norm)
    reps = denormalize(norm)
    reps = PeriodMatrix(reps.data, input_m.period_hours, input_m.column_labels)
    return clip_physical(reps)


# ---------------------------------------------------------------- type 3


@dataclass
class Type3Stack:
    input_ae: Network
    output_ae: Network
    inter_ae: Network

    def networks(self):
        return (self.input_ae, self.output_ae, self.inter_ae)

    def copy(self) -> "Type3Stack":
        return Type3Stack(*(n.copy() for n in self.networks()))

    def latent(self, xi, xo):
        z = np.hstack([self.input_ae.encode(xi), self.output_ae.encode(xo)])
        return self.inter_ae.encode(z)

    def decode_input(self, h):
        z_hat = self.inter_ae.decode(h)
        li = self.input_ae.latent_length()
        return self.input_ae.decode(z_hat[:, :li])

    def losses(self, xi, xo):
        p = xi.shape[0]
        zi, zo = self.input_ae.encode(xi), self.output_ae.encode(xo)
        z = np.hstack([zi, zo])
        L_I = float(((self.input_ae.decode(zi) - xi) ** 2).sum() / p)
        L_O = float(((self.output_ae.decode(zo) - xo) ** 2).sum() / p)
        L_int = float(((self.inter_ae.reconstruct(z) - z) ** 2).sum() / p)
        return L_int, L_I, L_O

    def step(self, xi, xo, alpha, beta, gamma, state: ClusterState | None):
        """Forward/backward of ``L_int * (alpha L_I + beta L_O) + gamma L_c``."""
        A, O, M = self.networks()
        for n in self.networks():
            n.zero_grad()
        p = xi.shape[0]
        xi3, xo3 = xi[:, :, None], xo[:, :, None]
        zi = A.encoder_forward(xi3)
        zo = O.encoder_forward(xo3)
        ri = A.decoder_forward(zi) - xi3
        ro = O.decoder_forward(zo) - xo3
        z = np.concatenate([zi, zo], axis=1)
        h = M.encoder_forward(z)
        rz = M.decoder_forward(h) - z
        L_I = float((ri * ri).sum() / p)
        L_O = float((ro * ro).sum() / p)
        L_int = float((rz * rz).sum() / p)
        mix = alpha * L_I + beta * L_O
        gh = M.decoder_backward(mix * 2.0 * rz / p)
        L_c = 0.0
        if state is not None:
            dh = h[:, :, 0] - state.centroids[state.labels]
            L_c = float((dh * dh).sum() / p)
            gh = gh + (2.0 * gamma / p) * dh[:, :, None]
        gz = M.encoder_backward(gh) - mix * 2.0 * rz / p
        li = zi.shape[1]
        gzi = A.decoder_backward(L_int * alpha * 2.0 * ri / p) + gz[:, :li]
        gzo = O.decoder_backward(L_int * beta * 2.0 * ro / p) + gz[:, li:]
        A.encoder_backward(gzi)
        O.encoder_backward(gzo)
        return L_int * mix + gamma * L_c

    def parameters(self):
        return [(prm, g) for n in self.networks() for _, _, prm, g in n.parameters()]


def pretrain_type3(xi, xo, k, cfg: RpsConfig, seed) -> Type3Stack:
    tcfg = replace(cfg.train, seed=seed, loss="reconstruction")
    a, _ = train(_new_ae(xi.shape[1], k, cfg, seed), xi, tcfg)
    # same seed for both sides: identical input and output features give identical AEs
    o, _ = train(_new_ae(xo.shape[1], k, cfg, seed), xo, tcfg)
    z = np.hstack([a.encode(xi), o.encode(xo)])
    m, _ = train(_new_ae(z.shape[1], cfg.intermediate_pool, cfg, seed + 1), z, tcfg)
    return Type3Stack(a, o, m)


def alpha_grid(size: int) -> np.ndarray:
    if size < 2:
        raise ValueError("alpha grid needs at least 2 points")
    return np.linspace(0.0, 1.0, size)


def finetune_type3(base: Type3Stack, xi, xo, k, alpha, cfg: RpsConfig, seed):
    """Fine-tune a copy of *base* for one (alpha, 1 - alpha) pair and score it."""
    stack = base.copy()
    alpha = float(alpha)
    beta = 1.0 - alpha
    restarts = min(cfg.restarts, cfg.train.cluster_restarts)
    state = None
    if cfg.gamma > 0:
        st = kmeans(stack.latent(xi, xo), k, restarts=restarts, seed=seed)
        state = ClusterState(st.centroids, st.labels)
    opt = Adam(stack.parameters(), cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps)
    best, best_params = np.inf, None
    for epoch in range(cfg.finetune_epochs):
        if state is not None and epoch > 0 and epoch % cfg.train.refresh_every == 0:
            st = kmeans(stack.latent(xi, xo), k, restarts=restarts, seed=seed + epoch)
            state = ClusterState(st.centroids, st.labels)
        before = [snapshot(n) for n in stack.networks()]
        L = stack.step(xi, xo, alpha, beta, cfg.gamma, state)
        if not np.isfinite(L):
            raise TrainingDivergence(f"type 3 fine-tune diverged at alpha={alpha}", None)
        if L < best:
            best, best_params = L, before
        opt.step()
    final = stack.step(xi, xo, alpha, beta, cfg.gamma, state)
    if best_params is not None and final >= best:
        for n, vals in zip(stack.networks(), best_params):
            restore(n, vals)
    for n in stack.networks():
        n.zero_grad()
    latent = stack.latent(xi, xo)
    cluster = kmeans(latent, k, restarts=cfg.restarts, seed=seed)
    L_int, L_I, L_O = stack.losses(xi, xo)
    L_r = L_int * (alpha * L_I + beta * L_O)
    losses = {"alpha": float(alpha), "beta": float(beta), "L_int": L_int, "L_I": L_I, "L_O": L_O,
              "L_r": L_r, "L_c": cluster.inertia, "L": L_r + cfg.gamma * cluster.inertia}
    return stack, latent, cluster, losses


def scan_alpha_beta(input_m: PeriodMatrix, output_m: PeriodMatrix, k: int, grid: int = 100, seed: int = 0,
                    cfg: RpsConfig = RpsConfig(), _keep_best=False):
    """Evaluate every (alpha, 1 - alpha) on a uniform grid from one pretrained base.

    Returns ``(alpha, beta, trace)`` where ``trace`` lists the loss record of
    every grid point and the argmin (earliest on ties) minimizes ``L``.
    """
    xi = normalize(input_m).data
    xo = normalize(output_m).data
    base = pretrain_type3(xi, xo, k, cfg, seed)
    trace, best = [], None
    for alpha in alpha_grid(grid):
        stack, latent, cluster, losses = finetune_type3(base, xi, xo, k, alpha, cfg, seed)
        trace.append(losses)
        if best is None or losses["L"] < best[3]["L"]:
            best = (stack, latent, cluster, losses)
    a, b = best[3]["alpha"], best[3]["beta"]
    if _keep_best:
        return a, b, trace, best
    return a, b, trace


# ---------------------------------------------------------------- entry points


@dataclass
class LatentFit:
    """Everything learned before the final clustering: latent codes, networks, losses."""
    method: str
    k: int
    latent: np.ndarray
    networks: dict = field(default_factory=dict)
    losses: dict = field(default_factory=dict)


def fit_latent(method: str, input_m: PeriodMatrix, output_m: PeriodMatrix | None, k: int, seed: int = 0,
               cfg: RpsConfig = RpsConfig()) -> LatentFit:
    """The clustering space of *method*: normalized features or a trained latent."""
    _check_inputs(method, input_m, output_m, k)
    norm_in = normalize(input_m)
    if method in ("i_kmeans", "io_kmeans"):
        latent = norm_in.data if method == "i_kmeans" else hstack(norm_in, normalize(output_m)).data
        return LatentFit(method, k, latent.copy(), {}, {"L_r": 0.0})
    if method in ("ae_type1", "ae_type2"):
        x = norm_in.data if method == "ae_type1" else hstack(norm_in, normalize(output_m)).data
        net, traces = _train_single(x, k, cfg, seed)
        r = net.reconstruct(x) - x
        losses = {"L_r": float((r * r).sum() / x.shape[0]), "trace": traces}
        return LatentFit(method, k, net.encode(x), {"autoencoder": net}, losses)
    _, _, trace, best = scan_alpha_beta(input_m, output_m, k, cfg.alpha_grid_size, seed, cfg, _keep_best=True)
    stack, latent, _, best_losses = best
    losses = dict(best_losses)
    losses["grid"] = trace
    networks = {"input_ae": stack.input_ae, "output_ae": stack.output_ae, "inter_ae": stack.inter_ae}
    return LatentFit(method, k, latent, networks, losses)


def _decode(fit: LatentFit, codes, n_in):
    if fit.method in ("ae_type1", "ae_type2"):
        return fit.networks["autoencoder"].decode(codes)[:, :n_in]
    if fit.method == "ae_type3":
        n = fit.networks
        return Type3Stack(n["input_ae"], n["output_ae"], n["inter_ae"]).decode_input(codes)
    return None


def select(fit: LatentFit, input_m: PeriodMatrix, seed: int = 0, cfg: RpsConfig = RpsConfig()) -> RpsResult:
    """Cluster the latent codes and build the representatives of each medoid."""
    cluster = _cluster(fit.latent, fit.k, cfg, seed)
    losses = dict(fit.losses)
    losses["L_c"] = cluster.inertia
    losses["L"] = losses["L_r"] + cfg.gamma * cluster.inertia
    rows = cluster.medoid_indices
    decoded = None if cfg.use_original_medoid else _decode(fit, fit.latent[rows], input_m.shape[1])
    reps, clipping = _representatives(input_m, rows, decoded, normalize(input_m), cfg)
    return RpsResult(fit.method, fit.k, rows.copy(), cluster.weights.copy(), reps, losses, cluster,
                     fit.latent, clipping, fit.networks)


def run(method: str, input_m: PeriodMatrix, output_m: PeriodMatrix | None, k: int, seed: int = 0,
        cfg: RpsConfig = RpsConfig()) -> RpsResult:
    """Select ``k`` representative periods (medoids) and their weights."""
    return select(fit_latent(method, input_m, output_m, k, seed, cfg), input_m, seed, cfg)


def build_rcem_inputs(spec: SystemSpec, result: RpsResult, q: int) -> tuple[SystemSpec, np.ndarray]:
    """Hourly system restricted to the representative periods, plus ``w_t`` per hour."""
    reps = result.representative_series
    if reps.period_hours != q:
        raise ValueError(f"representatives have period length {reps.period_hours}, expected {q}")
    p = spec.hours // q
    if result.n_periods != p:
        raise ValueError(f"weights sum to {result.n_periods}, but the system has {p} periods")
    blocks = [reps.unflatten(row) for row in reps.data]
    load = {z: spec.load[z][:0] for z in spec.zone_ids}
    avail = {c: v[:0] for c, v in spec.availability.items()}
    for key in blocks[0]:
        kind, entity = key
        series = np.concatenate([b[key] for b in blocks])
        if kind == "load":
            load[entity] = series
        elif kind == "avail":
            avail[entity] = series
    hours = result.k * q
    for c, v in avail.items():
        if v.size != hours:  # availability columns no resource uses: keep the original hours
            avail[c] = np.concatenate([spec.availability[c][i * q:(i + 1) * q]
                                       for i in result.representative_periods])
    w = np.repeat(result.weights.astype(float), q)
    return spec.with_series(load, avail, hours), w


def rcem_variant(result: RpsResult, q: int) -> Reduced:
    """Reduced model over the ``k`` concatenated representative periods."""
    return Reduced(tuple(range(result.k)), tuple(int(w) for w in result.weights), q,
                   total_periods=result.n_periods)


# ---------------------------------------------------------------- serialization


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_period_rows_csv(path, m: PeriodMatrix):
    """Rows of *m* laid out as an hourly table (``hour`` then ``<kind>.<entity>`` columns)."""
    keys = m.series_keys()
    blocks = [m.unflatten(row) for row in m.data]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour"] + [f"{k}.{e}" for k, e in keys])
        hour = 1
        for b in blocks:
            for t in range(m.period_hours):
                w.writerow([hour] + [repr(float(b[key][t])) for key in keys])
                hour += 1


def read_period_rows_csv(path, q: int) -> PeriodMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    keys = [tuple(h.split(".", 1)) for h in header]
    values = np.array([[float(c) for c in r[1:]] for r in rows[1:]]).reshape(-1, q, len(keys))
    data = values.transpose(0, 2, 1).reshape(values.shape[0], -1)
    labels = [(k, e, h) for k, e in keys for h in range(q)]
    return PeriodMatrix(data, q, labels)


def save_result(result: RpsResult, directory, seed: int, config_hash: str) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_clusters(result.cluster, d / "clusters.json")
    write_period_rows_csv(d / "representatives.csv", result.representative_series)
    losses = _jsonable(dict(result.losses))
    losses["clipping"] = result.clipping
    (d / "losses.json").write_text(json.dumps(losses, indent=1, sort_keys=True) + "\n")
    manifest = {"method": result.method, "k": result.k, "seed": seed, "config_hash": config_hash,
                "period_hours": result.representative_series.period_hours,
                "representative_periods": [int(i) for i in result.representative_periods],
                "weights": [int(w) for w in result.weights]}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    np.savetxt(d / "latent.csv", result.latent, delimiter=",", fmt="%.17g")
    for name, net in result.networks.items():
        save_network(net, d / f"{name}.net")
    return d


def load_result(directory) -> RpsResult:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    cluster = load_clusters(d / "clusters.json")
    losses = json.loads((d / "losses.json").read_text())
    clipping = losses.pop("clipping", {})
    reps = read_period_rows_csv(d / "representatives.csv", manifest["period_hours"])
    latent = np.atleast_2d(np.loadtxt(d / "latent.csv", delimiter=","))
    if latent.shape[0] != cluster.labels.size:
        latent = latent.reshape(cluster.labels.size, -1)
    networks = {p.stem: load_network(p)[0] for p in sorted(d.glob("*.net"))}
    return RpsResult(manifest["method"], manifest["k"], np.array(manifest["representative_periods"]),
                     np.array(manifest["weights"]), reps, losses, cluster, latent, clipping, networks)
