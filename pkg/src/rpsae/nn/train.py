from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clustering import kmeans
from .network import Network


class TrainingDivergence(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int | None = None  # None: full batch (p)
    seed: int = 0
    loss: str = "reconstruction"  # or "combined"
    gamma: float = 0.1
    patience: int = 20
    refresh_every: int = 10
    cluster_restarts: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in ("reconstruction", "combined"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class ClusterState:
    centroids: np.ndarray  # (k, latent)
    labels: np.ndarray  # (p,)


@dataclass
class TrainTrace:
    loss: list = field(default_factory=list)
    reconstruction: list = field(default_factory=list)
    clustering: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)  # (array, grad) pairs, updated in place
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p, _ in self.params]
        self.v = [np.zeros_like(p) for p, _ in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for (p, g), m, v in zip(self.params, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def snapshot(net: Network):
    return [p.copy() for _, _, p, _ in net.parameters()]


def restore(net: Network, values):
    for (_, _, p, _), v in zip(net.parameters(), values):
        p[...] = v


def loss_and_backward(net: Network, x3, cluster_state: ClusterState | None, gamma: float):
    """Forward + backward of ``L_r + gamma * L_c`` on a batch; returns (L, L_r, L_c)."""
    p = x3.shape[0]
    z = net.encoder_forward(x3)
    out = net.decoder_forward(z)
    r = out - x3
    lr_ = float((r * r).sum() / p)
    gz = net.decoder_backward(2.0 * r / p)
    lc = 0.0
    if cluster_state is not None:
        dz = z[:, :, 0] - cluster_state.centroids[cluster_state.labels]
        lc = float((dz * dz).sum() / p)
        gz = gz + (2.0 * gamma / p) * dz[:, :, None]
    net.encoder_backward(gz)
    return lr_ + gamma * lc, lr_, lc


def refresh_clusters(net: Network, x2d, k: int, restarts: int, seed: int) -> ClusterState:
    z = net.encode(x2d)
    res = kmeans(z, k, restarts=restarts, seed=seed)
    return ClusterState(res.centroids, res.labels)


def train(net: Network, x2d, cfg: TrainConfig = TrainConfig(),
          cluster_state: ClusterState | None = None) -> tuple[Network, TrainTrace]:
    """Train a copy of *net* with Adam; returns the best-loss parameters and the trace.

    With ``cfg.loss == "combined"`` the clustering term uses *cluster_state*,
    re-running k-means on the latent codes every ``cfg.refresh_every`` epochs.
    """
    x2d = np.asarray(x2d, dtype=float)
    if cfg.loss == "combined" and cluster_state is None:
        raise ValueError("combined loss needs an initial cluster state")
    state = cluster_state if cfg.loss == "combined" else None
    k = None if state is None else state.centroids.shape[0]
    net = net.copy()
    x3 = x2d[:, :, None]
    p = x2d.shape[0]
    bs = p if cfg.batch_size is None else min(cfg.batch_size, p)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam([(prm, g) for _, _, prm, g in net.parameters()], cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    trace = TrainTrace()
    best, best_params, since_best = np.inf, None, 0
    for epoch in range(cfg.epochs):
        if state is not None and epoch > 0 and epoch % cfg.refresh_every == 0:
            state = refresh_clusters(net, x2d, k, cfg.cluster_restarts, cfg.seed + epoch)
        before = snapshot(net)
        order = np.arange(p) if bs == p else rng.permutation(p)
        tot = rec = clu = 0.0
        for start in range(0, p, bs):
            rows = order[start:start + bs]
            net.zero_grad()
            sub = None if state is None else ClusterState(state.centroids, state.labels[rows])
            L, Lr, Lc = loss_and_backward(net, x3[rows], sub, cfg.gamma)
            if not np.isfinite(L):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}", trace)
            opt.step()
            frac = rows.size / p
            tot, rec, clu = tot + L * frac, rec + Lr * frac, clu + Lc * frac
        trace.loss.append(tot)
        trace.reconstruction.append(rec)
        trace.clustering.append(clu)
        # the epoch loss scores the parameters held before this epoch's updates
        if tot < best:
            best, best_params, since_best = tot, before, 0
            trace.best_epoch = epoch
        else:
            since_best += 1
        if since_best >= cfg.patience:
            trace.stopped_early = True
            break
    net.zero_grad()
    final, _, _ = loss_and_backward(net, x3, state, cfg.gamma)
    net.zero_grad()
    if not np.isfinite(final):
        raise TrainingDivergence("non-finite loss after the last update", trace)
    if final >= best:
        restore(net, best_params)
    else:
        trace.best_epoch = len(trace.loss)
    return net, trace
