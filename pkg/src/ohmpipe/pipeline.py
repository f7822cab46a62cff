"""Streaming hard-negative batch construction.

The pipeline scans a sample stream with three composed stages: a stateful
buffer update that periodically refits the cluster model, per-sample label
prediction against the current model snapshot, and per-cluster reservoirs
that emit fixed-size batches as they fill. Memory stays bounded by the
buffer window plus the reservoirs regardless of stream length, and a run
is bit-reproducible given its seed.

Embeddings are unit-normalized on entry to the clustering buffer so the
model's Euclidean geometry tracks cosine similarity; the samples
themselves pass through unmodified.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .clustering import (
    DEFAULT_GROWTH_FACTOR,
    DEFAULT_MAX_LEAVES,
    DEFAULT_THRESHOLD,
    ClusterModel,
    partial_fit,
)
from .ingest import Sample, _unit

__all__ = [
    "OhmConfig",
    "Reservoir",
    "Batch",
    "PipelineReport",
    "OhmPipeline",
    "run_pipeline",
]

FLUSH_POLICIES = ("emit_partial", "drop_partial")


@dataclass(frozen=True)
class OhmConfig:
    """Knobs for one pipeline run.

    Defaults follow the reference operating point: a 4096-sample update
    window, 32 clusters, refits every 10,000 samples, and batches of 16.
    ``reservoir_capacity`` defaults to four batches. The refit cadence is
    counted in samples; the first fit happens as soon as the buffer first
    fills, ahead of the periodic cadence.
    """

    dim: int
    update_window_size: int = 4096
    n_clusters: int = 32
    refit_interval: int = 10000
    batch_size: int = 16
    reservoir_capacity: int | None = None
    flush_policy: str = "emit_partial"
    rng_seed: int = 0
    leaf_threshold: float = DEFAULT_THRESHOLD
    max_leaves: int = DEFAULT_MAX_LEAVES
    growth_factor: float = DEFAULT_GROWTH_FACTOR

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.update_window_size < 1 or self.refit_interval < 1:
            raise ValueError("update_window_size and refit_interval must be positive")
        if self.n_clusters < 1 or self.batch_size < 1:
            raise ValueError("n_clusters and batch_size must be positive")
        if self.flush_policy not in FLUSH_POLICIES:
            raise ValueError(f"flush_policy must be one of {FLUSH_POLICIES}")
        if self.reservoir_capacity is None:
            object.__setattr__(self, "reservoir_capacity", 4 * self.batch_size)
        if self.reservoir_capacity < self.batch_size:
            raise ValueError("reservoir_capacity must be >= batch_size")


class Reservoir:
    """A fixed-capacity uniform sample of an unbounded stream (Algorithm R).

    While below capacity every offered item is kept. At capacity, the n-th
    offer replaces a uniformly random incumbent with probability
    capacity/n, so retention stays uniform over everything offered.
    """

    __slots__ = ("cluster_label", "capacity", "items", "seen")

    def __init__(self, cluster_label: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.cluster_label = cluster_label
        self.capacity = capacity
        self.items: list = []
        self.seen = 0

    def offer(self, item, rng: np.random.Generator):
        """Offer one item; returns the displaced item, or None if retained
        without displacement."""
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(item)
            return None
        j = int(rng.integers(0, self.seen))
        if j < self.capacity:
            displaced = self.items[j]
            self.items[j] = item
            return displaced
        return item

    def draw(self, k: int, rng: np.random.Generator) -> list:
        """Remove and return k items drawn uniformly without replacement."""
        if k > len(self.items):
            raise ValueError(f"cannot draw {k} items from a reservoir of {len(self.items)}")
        order = rng.permutation(len(self.items))
        picked = set(int(i) for i in order[:k])
        drawn = [self.items[i] for i in order[:k]]
        self.items = [item for i, item in enumerate(self.items) if i not in picked]
        # Remaining items start a fresh retention epoch.
        self.seen = len(self.items)
        return drawn


@dataclass(frozen=True)
class Batch:
    """An emitted group of same-label samples."""

    samples: tuple[Sample, ...]
    cluster_label: int
    model_version: int
    emitted_at: int

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class PipelineReport:
    """Counters describing one completed (or aborted) pipeline run."""

    samples_seen: int = 0
    samples_skipped: int = 0
    batches_emitted: int = 0
    partial_batches: int = 0
    samples_emitted: int = 0
    samples_dropped: int = 0
    fits_performed: int = 0
    per_cluster_batches: dict = field(default_factory=dict)
    peak_retained: int = 0
    final_model_version: int = 0
    wall_clock_s: float = 0.0

    @property
    def throughput(self) -> float:
        if self.wall_clock_s <= 0:
            return 0.0
        return self.samples_seen / self.wall_clock_s

    def to_dict(self) -> dict:
        return {
            "samples_seen": self.samples_seen,
            "samples_skipped": self.samples_skipped,
            "batches_emitted": self.batches_emitted,
            "partial_batches": self.partial_batches,
            "samples_emitted": self.samples_emitted,
            "samples_dropped": self.samples_dropped,
            "fits_performed": self.fits_performed,
            "per_cluster_batches": {str(k): v for k, v in sorted(self.per_cluster_batches.items())},
            "peak_retained": self.peak_retained,
            "final_model_version": self.final_model_version,
            "wall_clock_s": self.wall_clock_s,
            "throughput_samples_per_s": self.throughput,
        }


class OhmPipeline:
    """Stateful scan over a sample stream emitting per-cluster batches.

    All randomness (reservoir displacement, batch draws, k-means seeding)
    flows from one seeded generator split per component, so two runs with
    the same input and seed produce identical batch sequences. The model
    is replaced atomically at refits; samples seen between refits are
    labeled with the snapshot current at their arrival.
    """

    def __init__(self, config: OhmConfig, model: ClusterModel | None = None):
        self.config = config
        seeds = np.random.SeedSequence(config.rng_seed).spawn(3)
        self._kmeans_rng = np.random.default_rng(seeds[0])
        self._reservoir_rng = np.random.default_rng(seeds[1])
        self._batch_rng = np.random.default_rng(seeds[2])
        self.buffer: deque = deque(maxlen=config.update_window_size)
        self.model = model if model is not None else ClusterModel.empty(
            config.dim,
            config.n_clusters,
            threshold=config.leaf_threshold,
            max_leaves=config.max_leaves,
            growth_factor=config.growth_factor,
        )
        self.reservoirs: dict[int, Reservoir] = {}
        self.samples_seen = 0
        self.report = PipelineReport()
        self._retained_in_reservoirs = 0

    # -- stage 1: stateful buffer update with periodic refits ------------

    def update_clusters(self, sample: Sample) -> None:
        """Add the sample's embedding to the rolling buffer; refit on cadence.

        A refit runs when the buffer is full and either the sample count
        hits the refit interval or the model has never been fitted.
        """
        emb = sample.embedding
        if emb.shape[0] != self.config.dim:
            raise ValueError(
                f"sample {sample.id!r} has dimension {emb.shape[0]}, pipeline expects {self.config.dim}"
            )
        self.samples_seen += 1
        self.report.samples_seen = self.samples_seen
        self.buffer.append(_unit(emb))
        if len(self.buffer) >= self.config.update_window_size and (
            self.samples_seen % self.config.refit_interval == 0 or not self.model.fitted
        ):
            self.model = partial_fit(self.model, np.asarray(self.buffer), self._kmeans_rng)
            self.report.fits_performed += 1
            self.report.final_model_version = self.model.version

    # -- stage 2: labeling against the current snapshot ------------------

    def generate_labels(self, sample: Sample) -> tuple[Sample, int]:
        """Label the sample with the current model snapshot (0 before any fit)."""
        return sample, self.model.predict(sample.embedding)

    # -- stage 3: per-cluster reservoirs and batch emission ---------------

    def reservoir_offer(self, sample: Sample, label: int) -> Batch | None:
        """Offer the labeled sample to its cluster's reservoir; emit a batch
        once the reservoir holds at least ``batch_size`` items."""
        reservoir = self.reservoirs.get(label)
        if reservoir is None:
            reservoir = Reservoir(label, self.config.reservoir_capacity)
            self.reservoirs[label] = reservoir
        displaced = reservoir.offer(sample, self._reservoir_rng)
        if displaced is not None:
            self.report.samples_dropped += 1
        else:
            self._retained_in_reservoirs += 1
        if len(reservoir.items) >= self.config.batch_size:
            drawn = reservoir.draw(self.config.batch_size, self._batch_rng)
            self._retained_in_reservoirs -= len(drawn)
            return self._emit(drawn, label)
        return None

    def _emit(self, samples: list, label: int) -> Batch:
        batch = Batch(
            samples=tuple(samples),
            cluster_label=label,
            model_version=self.model.version,
            emitted_at=self.samples_seen,
        )
        self.report.batches_emitted += 1
        self.report.samples_emitted += len(samples)
        if len(samples) < self.config.batch_size:
            self.report.partial_batches += 1
        self.report.per_cluster_batches[label] = self.report.per_cluster_batches.get(label, 0) + 1
        return batch

    def process(self, sample: Sample) -> Batch | None:
        """Run one sample through all three stages."""
        self.update_clusters(sample)
        sample, label = self.generate_labels(sample)
        batch = self.reservoir_offer(sample, label)
        self._track_retained()
        return batch

    def _track_retained(self):
        retained = len(self.buffer) + self._retained_in_reservoirs
        if retained > self.report.peak_retained:
            self.report.peak_retained = retained

    def run(self, stream: Iterable[Sample]) -> Iterator[Batch]:
        """Consume a stream lazily, yielding batches, then flush.

        Samples with a wrong embedding dimension are skipped and counted.
        At end-of-stream, leftover reservoir contents are emitted as
        partial batches or dropped, per the configured flush policy.
        """
        started = time.perf_counter()
        try:
            for sample in stream:
                if sample.embedding.shape[0] != self.config.dim:
                    self.report.samples_skipped += 1
                    continue
                batch = self.process(sample)
                if batch is not None:
                    yield batch
            yield from self.flush()
        finally:
            self.report.wall_clock_s = time.perf_counter() - started
            self.report.final_model_version = self.model.version

    def flush(self) -> Iterator[Batch]:
        """Drain the reservoirs per the flush policy."""
        for label in sorted(self.reservoirs):
            reservoir = self.reservoirs[label]
            if not reservoir.items:
                continue
            leftover = reservoir.items
            reservoir.items = []
            reservoir.seen = 0
            self._retained_in_reservoirs -= len(leftover)
            if self.config.flush_policy == "emit_partial":
                while leftover:
                    chunk, leftover = leftover[: self.config.batch_size], leftover[self.config.batch_size:]
                    yield self._emit(chunk, label)
            else:
                self.report.samples_dropped += len(leftover)


def run_pipeline(stream: Iterable[Sample], config: OhmConfig) -> tuple[list[Batch], PipelineReport]:
    """Convenience wrapper: run a whole stream eagerly.

    Returns the emitted batches and the run report. For lazy consumption
    construct an ``OhmPipeline`` and iterate ``run`` directly.
    """
    pipeline = OhmPipeline(config)
    batches = list(pipeline.run(stream))
    return batches, pipeline.report
