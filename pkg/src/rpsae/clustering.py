"""k-means with k-means++ restarts, medoid prototypes and cluster weights."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_RESTARTS = 100
MAX_LLOYD_ITERATIONS = 300


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray  # (p,) ids in [0, k), numbered by first member
    centroids: np.ndarray  # (k, d)
    medoid_indices: np.ndarray  # (k,)
    weights: np.ndarray  # (k,) cluster sizes, sum p
    inertia: float
    best_restart: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def partition(self) -> frozenset:
        return frozenset(frozenset(np.flatnonzero(self.labels == j).tolist()) for j in range(self.k))

    def to_json(self) -> dict:
        return {
            "labels": [int(x) for x in self.labels],
            "medoid_indices": [int(x) for x in self.medoid_indices],
            "weights": [int(x) for x in self.weights],
            "inertia": float(self.inertia),
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "best_restart": int(self.best_restart),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ClusterResult":
        return cls(np.array(d["labels"], dtype=int), np.array(d["centroids"], dtype=float),
                   np.array(d["medoid_indices"], dtype=int), np.array(d["weights"], dtype=int),
                   float(d["inertia"]), int(d.get("best_restart", 0)))


def _sq_dist(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("pkd,pkd->pk", diff, diff)


def inertia(points, labels, centroids) -> float:
    """Sum of squared distances of every point to its cluster centroid."""
    diff = np.asarray(points) - np.asarray(centroids)[np.asarray(labels)]
    return float(np.einsum("pd,pd->", diff, diff))


def _kmeanspp(points, k, rng):
    p = points.shape[0]
    centers = [int(rng.integers(p))]
    d2 = _sq_dist(points, points[centers])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(p, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(p), centers)
            nxt = int(rng.choice(free))
        centers.append(nxt)
        d2 = np.minimum(d2, _sq_dist(points, points[[nxt]])[:, 0])
    return points[centers].copy()


def _means(points, labels, k):
    d = points.shape[1]
    sums = np.zeros((k, d))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k)
    return sums, counts


def _repair_empty(points, labels, centroids, counts):
    """Move the point farthest from its centroid into each empty cluster."""
    for j in np.flatnonzero(counts == 0):
        d2 = ((points - centroids[labels]) ** 2).sum(axis=1)
        d2[counts[labels] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(d2))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        centroids[j] = points[i]


def _lloyd(points, centers, max_iter):
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        new = _sq_dist(points, centers).argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums, counts = _means(points, labels, k)
        centers = sums / np.maximum(counts, 1)[:, None]
        if np.any(counts == 0):
            _repair_empty(points, labels, centers, counts)
            sums, counts = _means(points, labels, k)
            centers = sums / counts[:, None]
    sums, counts = _means(points, labels, k)
    return labels, sums / counts[:, None]


def canonicalize(labels, centroids):
    """Renumber clusters in order of their lowest-index member."""
    order = []
    for lab in labels:
        if lab not in order:
            order.append(int(lab))
    remap = np.empty(len(order), dtype=int)
    remap[order] = np.arange(len(order))
    return remap[labels], centroids[order]


def medoids(points, labels, centroids) -> np.ndarray:
    """Per cluster, the member nearest its centroid (lowest index on ties)."""
    points = np.asarray(points, dtype=float)
    out = []
    for j in range(len(centroids)):
        members = np.flatnonzero(labels == j)
        if members.size == 0:
            raise ValueError(f"cluster {j} is empty")
        d2 = ((points[members] - centroids[j]) ** 2).sum(axis=1)
        out.append(int(members[np.argmin(d2)]))
    return np.array(out, dtype=int)


def weights(labels, k: int | None = None) -> np.ndarray:
    """Cluster cardinalities in cluster-id (= medoid) order."""
    labels = np.asarray(labels, dtype=int)
    return np.bincount(labels, minlength=k or (labels.max() + 1 if labels.size else 0))


def single_run(points, k, seed=0, restart=0, max_iter=MAX_LLOYD_ITERATIONS) -> ClusterResult:
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng([seed, restart])
    labels, centroids = _lloyd(points, _kmeanspp(points, k, rng), max_iter)
    labels, centroids = canonicalize(labels, centroids)
    return ClusterResult(labels, centroids, medoids(points, labels, centroids), weights(labels, k),
                         inertia(points, labels, centroids), restart)


def kmeans(points, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
           max_iter: int = MAX_LLOYD_ITERATIONS) -> ClusterResult:
    """Best-inertia k-means over ``restarts`` k-means++ initializations.

    Restart ``r`` draws from the stream ``(seed, r)``; ties in inertia keep the
    earliest restart.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a (p, d) matrix")
    p = points.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= p, got k={k}, p={p}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        res = single_run(points, k, seed, r, max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def save_clusters(result: ClusterResult, path, extra: dict | None = None) -> Path:
    d = result.to_json()
    if extra:
        d.update(extra)
    path = Path(path)
    path.write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    return path


def load_clusters(path) -> ClusterResult:
    return ClusterResult.from_json(json.loads(Path(path).read_text()))
