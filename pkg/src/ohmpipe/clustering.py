"""Incremental cluster model: bounded leaf statistics plus a global k-means.

The model keeps a flat, bounded list of cluster-feature leaves (count,
linear sum, sum of squared norms). Each absorbed vector either joins the
nearest leaf, if the leaf's radius stays under the absorption threshold,
or opens a new leaf. When the leaf list overflows, the threshold grows and
the leaves are rebuilt by merging. A weighted k-means over leaf centroids
then produces the K global centroids used for online label prediction.

Snapshots are immutable: ``partial_fit`` returns a new model and never
mutates its input, so readers can keep predicting on the old snapshot
while a refit runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import _unit

__all__ = [
    "ClusterFeature",
    "ClusterModel",
    "partial_fit",
    "model_quality",
]

DEFAULT_THRESHOLD = 0.25
DEFAULT_MAX_LEAVES = 256
DEFAULT_GROWTH_FACTOR = 1.5
DEFAULT_KMEANS_ITERS = 10


@dataclass(frozen=True)
class ClusterFeature:
    """Sufficient statistics of one leaf: count, linear sum, squared sum.

    Supports O(1) merges by additivity. ``centroid`` and ``radius`` are
    defined only for non-empty leaves.
    """

    n: int
    ls: np.ndarray
    ss: float

    def centroid(self) -> np.ndarray:
        if self.n == 0:
            raise ValueError("centroid undefined for an empty leaf")
        return self.ls / self.n

    def radius(self) -> float:
        """Root-mean-square distance of absorbed points to the centroid."""
        if self.n == 0:
            raise ValueError("radius undefined for an empty leaf")
        r2 = self.ss / self.n - float(self.ls @ self.ls) / (self.n * self.n)
        return float(np.sqrt(max(r2, 0.0)))

    def merged(self, other: "ClusterFeature") -> "ClusterFeature":
        return ClusterFeature(self.n + other.n, self.ls + other.ls, self.ss + other.ss)


@dataclass(frozen=True)
class ClusterModel:
    """An immutable snapshot of the incremental cluster model.

    An unfitted model predicts the sentinel label 0 for every input, which
    makes the batching pipeline degrade to uniform batching before the
    first fit. ``version`` increases by exactly 1 per refit.
    """

    dim: int
    n_clusters: int
    cf_entries: tuple[ClusterFeature, ...] = ()
    centroids: np.ndarray | None = None
    threshold: float = DEFAULT_THRESHOLD
    fitted: bool = False
    version: int = 0
    max_leaves: int = DEFAULT_MAX_LEAVES
    growth_factor: float = DEFAULT_GROWTH_FACTOR
    kmeans_iters: int = DEFAULT_KMEANS_ITERS

    @classmethod
    def empty(
        cls,
        dim: int,
        n_clusters: int,
        threshold: float = DEFAULT_THRESHOLD,
        max_leaves: int = DEFAULT_MAX_LEAVES,
        growth_factor: float = DEFAULT_GROWTH_FACTOR,
        kmeans_iters: int = DEFAULT_KMEANS_ITERS,
    ) -> "ClusterModel":
        if dim < 1 or n_clusters < 1:
            raise ValueError("dim and n_clusters must be positive")
        if threshold <= 0 or max_leaves < 1 or growth_factor <= 1:
            raise ValueError("invalid threshold, max_leaves, or growth_factor")
        return cls(dim=dim, n_clusters=n_clusters, threshold=threshold,
                   max_leaves=max_leaves, growth_factor=growth_factor,
                   kmeans_iters=kmeans_iters)

    @classmethod
    def from_centroids(cls, centroids: np.ndarray, **kwargs) -> "ClusterModel":
        """Build a fitted model directly from a centroid matrix."""
        centroids = np.asarray(centroids, dtype=np.float64)
        return cls(dim=centroids.shape[1], n_clusters=centroids.shape[0],
                   centroids=centroids, fitted=True, version=1, **kwargs)

    def total_absorbed(self) -> int:
        return sum(cf.n for cf in self.cf_entries)

    def predict(self, v: np.ndarray) -> int:
        """Label ``v`` with the nearest centroid after unit-normalizing it.

        Distance is Euclidean over the normalized query, which is monotone
        in cosine distance for unit-norm model data. Ties break toward the
        lowest label index. An unfitted model returns 0.
        """
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a vector of dimension {self.dim}, got shape {v.shape}")
        if not self.fitted:
            return 0
        q = _unit(v)
        # argmin ||c - q||^2 == argmin (||c||^2 - 2 c.q); ||q||^2 is constant.
        scores = self._centroid_sqnorms() - 2.0 * (self.centroids @ q)
        return int(np.argmin(scores))

    def _centroid_sqnorms(self) -> np.ndarray:
        # Cached on first use; snapshots are immutable so this never goes stale.
        cached = getattr(self, "_sqnorms_cache", None)
        if cached is None:
            cached = np.einsum("ij,ij->i", self.centroids, self.centroids)
            object.__setattr__(self, "_sqnorms_cache", cached)
        return cached

    def to_record(self) -> dict:
        """Serialize the snapshot for pipeline restart."""
        return {
            "format": 1,
            "dim": self.dim,
            "n_clusters": self.n_clusters,
            "threshold": self.threshold,
            "fitted": self.fitted,
            "version": self.version,
            "max_leaves": self.max_leaves,
            "growth_factor": self.growth_factor,
            "kmeans_iters": self.kmeans_iters,
            "centroids": None if self.centroids is None else self.centroids.tolist(),
            "leaves": [
                {"n": cf.n, "ls": cf.ls.tolist(), "ss": cf.ss} for cf in self.cf_entries
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ClusterModel":
        if record.get("format") != 1:
            raise ValueError(f"unsupported model format {record.get('format')!r}")
        centroids = record["centroids"]
        return cls(
            dim=record["dim"],
            n_clusters=record["n_clusters"],
            cf_entries=tuple(
                ClusterFeature(leaf["n"], np.asarray(leaf["ls"], dtype=np.float64), leaf["ss"])
                for leaf in record["leaves"]
            ),
            centroids=None if centroids is None else np.asarray(centroids, dtype=np.float64),
            threshold=record["threshold"],
            fitted=record["fitted"],
            version=record["version"],
            max_leaves=record["max_leaves"],
            growth_factor=record["growth_factor"],
            kmeans_iters=record["kmeans_iters"],
        )


class _LeafArrays:
    """Mutable array view of the leaf list used inside partial_fit."""

    def __init__(self, leaves: Sequence[ClusterFeature], dim: int):
        self.dim = dim
        self.count = len(leaves)
        cap = max(4, 2 * self.count)
        self.n = np.zeros(cap, dtype=np.int64)
        self.ls = np.zeros((cap, dim), dtype=np.float64)
        self.ss = np.zeros(cap, dtype=np.float64)
        self.cent = np.zeros((cap, dim), dtype=np.float64)
        self.cent_sq = np.zeros(cap, dtype=np.float64)
        for i, cf in enumerate(leaves):
            self.n[i] = cf.n
            self.ls[i] = cf.ls
            self.ss[i] = cf.ss
            self._refresh(i)

    def _refresh(self, i: int):
        self.cent[i] = self.ls[i] / self.n[i]
        self.cent_sq[i] = float(self.cent[i] @ self.cent[i])

    def _grow(self):
        cap = 2 * len(self.n)
        for name in ("n", "ls", "ss", "cent", "cent_sq"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def nearest(self, x: np.ndarray) -> int:
        m = self.count
        scores = self.cent_sq[:m] - 2.0 * (self.cent[:m] @ x)
        return int(np.argmin(scores))

    def absorb_radius_sq(self, i: int, x: np.ndarray, x_sq: float) -> float:
        n1 = self.n[i] + 1
        ls1 = self.ls[i] + x
        return (self.ss[i] + x_sq) / n1 - float(ls1 @ ls1) / (n1 * n1)

    def absorb(self, i: int, x: np.ndarray, x_sq: float):
        self.n[i] += 1
        self.ls[i] += x
        self.ss[i] += x_sq
        self._refresh(i)

    def append(self, n: int, ls: np.ndarray, ss: float):
        if self.count == len(self.n):
            self._grow()
        i = self.count
        self.n[i] = n
        self.ls[i] = ls
        self.ss[i] = ss
        self.count = i + 1
        self._refresh(i)

    def to_features(self) -> tuple[ClusterFeature, ...]:
        return tuple(
            ClusterFeature(int(self.n[i]), self.ls[i].copy(), float(self.ss[i]))
            for i in range(self.count)
        )


def _rebuild(leaves: _LeafArrays, threshold: float, max_leaves: int, growth: float) -> tuple[_LeafArrays, float]:
    """Grow the threshold and re-merge leaves until the list fits."""
    while leaves.count > max_leaves:
        threshold *= growth
        t_sq = threshold * threshold
        rebuilt = _LeafArrays([], leaves.dim)
        for i in range(leaves.count):
            n_i, ls_i, ss_i = int(leaves.n[i]), leaves.ls[i], float(leaves.ss[i])
            if rebuilt.count == 0:
                rebuilt.append(n_i, ls_i.copy(), ss_i)
                continue
            j = rebuilt.nearest(ls_i / n_i)
            n1 = rebuilt.n[j] + n_i
            ls1 = rebuilt.ls[j] + ls_i
            r_sq = (rebuilt.ss[j] + ss_i) / n1 - float(ls1 @ ls1) / (n1 * n1)
            if r_sq <= t_sq:
                rebuilt.n[j] = n1
                rebuilt.ls[j] = ls1
                rebuilt.ss[j] += ss_i
                rebuilt._refresh(j)
            else:
                rebuilt.append(n_i, ls_i.copy(), ss_i)
        leaves = rebuilt
    return leaves, threshold


def _weighted_kmeans(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    iters: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Weighted Lloyd iterations with k-means++ seeding.

    An empty cluster is reseeded to the point farthest from its nearest
    surviving centroid. With fewer distinct points than k the surplus
    centroids come out duplicated; the caller flags that case.
    """
    m = points.shape[0]
    # k-means++ seeding, weight-proportional.
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    probs = weights / weights.sum()
    first = int(rng.choice(m, p=probs))
    centroids[0] = points[first]
    closest_sq = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        mass = weights * closest_sq
        total = mass.sum()
        if total <= 0:
            # No spread left to seed from; duplicate deterministically.
            centroids[j] = points[j % m]
            continue
        pick = int(rng.choice(m, p=mass / total))
        centroids[j] = points[pick]
        closest_sq = np.minimum(closest_sq, np.sum((points - centroids[j]) ** 2, axis=1))

    for _ in range(iters):
        d_sq = (
            np.einsum("ij,ij->i", centroids, centroids)[None, :]
            - 2.0 * points @ centroids.T
        )
        assign = np.argmin(d_sq, axis=1)
        new_centroids = centroids.copy()
        cluster_weight = np.zeros(k)
        for j in range(k):
            mask = assign == j
            w = weights[mask]
            cluster_weight[j] = w.sum()
            if cluster_weight[j] > 0:
                new_centroids[j] = (points[mask] * w[:, None]).sum(axis=0) / cluster_weight[j]
        empty = np.flatnonzero(cluster_weight == 0)
        if empty.size:
            survivors = new_centroids[cluster_weight > 0]
            if survivors.size:
                d_surv = np.sqrt(
                    np.maximum(
                        np.einsum("ij,ij->i", survivors, survivors)[None, :]
                        - 2.0 * points @ survivors.T
                        + np.einsum("ij,ij->i", points, points)[:, None],
                        0.0,
                    )
                )
                nearest_surv = d_surv.min(axis=1)
                for j in empty:
                    far = int(np.argmax(nearest_surv))
                    new_centroids[j] = points[far]
                    nearest_surv[far] = -np.inf
        centroids = new_centroids
    return centroids


def partial_fit(
    model: ClusterModel,
    buffer: Sequence[np.ndarray] | np.ndarray,
    rng: np.random.Generator | None = None,
) -> ClusterModel:
    """Absorb a buffer of vectors and refresh the global centroids.

    Returns a new snapshot with ``version + 1``; the input model is left
    untouched. Vectors are absorbed in buffer order into the nearest leaf
    whose post-absorption radius stays within the threshold, otherwise a
    new leaf opens. Overflowing ``max_leaves`` grows the threshold and
    re-merges. The K global centroids are a weighted k-means over leaf
    centroids, seeded from ``rng`` (default: a fresh seed-0 generator, so
    standalone refits are reproducible).
    """
    data = np.asarray(buffer, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.size == 0:
        raise ValueError("partial_fit requires a non-empty buffer")
    if data.shape[1] != model.dim:
        raise ValueError(f"buffer vectors have dimension {data.shape[1]}, model expects {model.dim}")
    if rng is None:
        rng = np.random.default_rng(0)

    leaves = _LeafArrays(model.cf_entries, model.dim)
    threshold = model.threshold
    t_sq = threshold * threshold
    for x in data:
        x_sq = float(x @ x)
        if leaves.count == 0:
            leaves.append(1, x.copy(), x_sq)
            continue
        i = leaves.nearest(x)
        if leaves.absorb_radius_sq(i, x, x_sq) <= t_sq:
            leaves.absorb(i, x, x_sq)
        else:
            leaves.append(1, x.copy(), x_sq)
            if leaves.count > model.max_leaves:
                leaves, threshold = _rebuild(leaves, threshold, model.max_leaves, model.growth_factor)
                t_sq = threshold * threshold

    m = leaves.count
    points = leaves.cent[:m].copy()
    weights = leaves.n[:m].astype(np.float64)
    centroids = _weighted_kmeans(points, weights, model.n_clusters, model.kmeans_iters, rng)

    distinct = np.unique(np.round(centroids, decimals=12), axis=0).shape[0]
    if distinct < model.n_clusters:
        warnings.warn(
            f"fit produced {distinct} distinct centroids for {model.n_clusters} clusters; "
            "duplicates present",
            RuntimeWarning,
        )

    return ClusterModel(
        dim=model.dim,
        n_clusters=model.n_clusters,
        cf_entries=leaves.to_features(),
        centroids=centroids,
        threshold=threshold,
        fitted=True,
        version=model.version + 1,
        max_leaves=model.max_leaves,
        growth_factor=model.growth_factor,
        kmeans_iters=model.kmeans_iters,
    )


def adjusted_rand_index(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Adjusted Rand index between two labelings, by pair counting."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("labelings must be non-empty and the same length")
    n = pred.size
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    contingency = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(contingency, (pi, ti), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb2(n)
    max_index = (sum_rows + sum_cols) / 2.0
    denom = max_index - expected
    if denom == 0:
        # Zero denominator only occurs when both sides are all-singletons or
        # both are a single class; either way the partitions coincide.
        warnings.warn("degenerate labeling in adjusted Rand index", RuntimeWarning)
        return 1.0
    return float((sum_cells - expected) / denom)


def model_quality(model: ClusterModel, labeled: Sequence[tuple[np.ndarray, int]]) -> float:
    """Adjusted Rand index of the model's predictions against true labels."""
    if not labeled:
        raise ValueError("model_quality requires a non-empty labeled set")
    if not model.fitted:
        raise ValueError("model_quality requires a fitted model")
    preds = [model.predict(v) for v, _ in labeled]
    truth = [t for _, t in labeled]
    if len(set(truth)) == 1:
        warnings.warn("model_quality called with single-class ground truth", RuntimeWarning)
        return 1.0 if len(set(preds)) == 1 else 0.0
    return adjusted_rand_index(preds, truth)
