"""Core data model, record parsing, and synthetic stream generation.

Samples arrive with precomputed embeddings; this package never computes
neural embeddings itself. The wire format is one JSON object per line
(see ``sample_to_record`` for the key set).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator

import numpy as np

__all__ = [
    "Sample",
    "Dialogue",
    "SyntheticSpec",
    "ParseStats",
    "RecordParseError",
    "parse_sample_stream",
    "generate_synthetic",
    "l2_normalize",
    "sample_to_record",
    "sample_from_record",
    "dialogue_to_record",
]


class RecordParseError(ValueError):
    """A malformed or invalid input record. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True, eq=False)
class Sample:
    """One utterance turn flowing through the pipeline.

    Immutable after creation; safe to hand across threads. ``embedding``
    is a float64 vector whose length must match the pipeline-configured
    dimension. ``context_embedding`` optionally carries the embedding of
    a same-dialogue context turn, used as the positive partner when
    evaluating contrastive loss over a batch.
    """

    id: str
    dialogue_id: str
    turn_index: int
    timestamp_s: float
    text: str
    embedding: np.ndarray
    domain_tag: str | None = None
    is_reformulation: bool | None = None
    assistant_text: str | None = None
    context_embedding: np.ndarray | None = None


@dataclass
class Dialogue:
    """A seed utterance plus its time-windowed past/future context turns.

    ``past`` and ``future`` are ordered by ascending timestamp; past turns
    are at or before the seed's timestamp, future turns at or after it.
    ``window_s`` records the final gathering interval that produced the
    contexts. ``has_reformulation`` is set by reformulation detection.
    """

    seed: Sample
    past: list[Sample] = field(default_factory=list)
    future: list[Sample] = field(default_factory=list)
    window_s: float = 90.0
    assistant_past: list[str] | None = None
    assistant_future: list[str] | None = None
    has_reformulation: bool | None = None

    def context_ids(self) -> set[str]:
        return {s.id for s in self.past} | {s.id for s in self.future}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for a deterministic Gaussian-mixture sample stream."""

    n_clusters: int
    dim: int
    samples_per_cluster: int
    cluster_spread: float = 1.0
    centroid_scale: float = 10.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1 or self.dim < 1 or self.samples_per_cluster < 1:
            raise ValueError("n_clusters, dim, and samples_per_cluster must be positive")
        if not (np.isfinite(self.cluster_spread) and self.cluster_spread >= 0):
            raise ValueError("cluster_spread must be finite and >= 0")
        if not (np.isfinite(self.centroid_scale) and self.centroid_scale > 0):
            raise ValueError("centroid_scale must be finite and > 0")


@dataclass
class ParseStats:
    """Counters filled in by ``parse_sample_stream`` as it runs."""

    records_read: int = 0
    records_skipped: int = 0
    last_line: int = 0


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    The zero vector is passed through unchanged with a warning; downstream
    cosine computations define sim(0, anything) = 0. Non-finite input is
    rejected.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalize a non-finite vector")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        warnings.warn("l2_normalize received a zero vector; passing it through", RuntimeWarning)
        return v.copy()
    return v / norm


def _unit(v: np.ndarray) -> np.ndarray:
    # Hot-path variant of l2_normalize: no finiteness check, no warning.
    norm = math.sqrt(float(v @ v))
    if norm == 0.0:
        return v
    return v / norm


_REQUIRED_KEYS = ("id", "dialogue_id", "turn_index", "timestamp_s", "text", "embedding")


def sample_from_record(record: dict, expected_dim: int | None = None, line_number: int = 0) -> Sample:
    """Build a Sample from a decoded wire record, validating invariants."""
    for key in _REQUIRED_KEYS:
        if key not in record:
            raise RecordParseError(f"missing required key '{key}'", line_number)
    embedding = np.asarray(record["embedding"], dtype=np.float64)
    if embedding.ndim != 1:
        raise RecordParseError("embedding must be a flat array of numbers", line_number)
    if expected_dim is not None and embedding.shape[0] != expected_dim:
        raise RecordParseError(
            f"embedding has {embedding.shape[0]} dimensions, expected {expected_dim}",
            line_number,
        )
    if not np.all(np.isfinite(embedding)):
        raise RecordParseError("embedding contains non-finite values", line_number)
    ts = float(record["timestamp_s"])
    if not np.isfinite(ts) or ts < 0:
        raise RecordParseError("timestamp_s must be finite and non-negative", line_number)
    turn_index = int(record["turn_index"])
    if turn_index < 0:
        raise RecordParseError("turn_index must be non-negative", line_number)
    context = record.get("context_embedding")
    if context is not None:
        context = np.asarray(context, dtype=np.float64)
        if expected_dim is not None and context.shape[0] != expected_dim:
            raise RecordParseError(
                f"context_embedding has {context.shape[0]} dimensions, expected {expected_dim}",
                line_number,
            )
    return Sample(
        id=str(record["id"]),
        dialogue_id=str(record["dialogue_id"]),
        turn_index=turn_index,
        timestamp_s=ts,
        text=str(record["text"]),
        embedding=embedding,
        domain_tag=record.get("domain"),
        is_reformulation=record.get("is_reformulation"),
        assistant_text=record.get("assistant_text"),
        context_embedding=context,
    )


def sample_to_record(sample: Sample) -> dict:
    """Serialize a Sample back to its wire-format dict.

    Round trip holds: parsing the emitted record reproduces a field-by-field
    identical Sample. Optional keys are emitted only when set.
    """
    record = {
        "id": sample.id,
        "dialogue_id": sample.dialogue_id,
        "turn_index": sample.turn_index,
        "timestamp_s": sample.timestamp_s,
        "text": sample.text,
        "embedding": [float(x) for x in sample.embedding],
    }
    if sample.domain_tag is not None:
        record["domain"] = sample.domain_tag
    if sample.is_reformulation is not None:
        record["is_reformulation"] = sample.is_reformulation
    if sample.assistant_text is not None:
        record["assistant_text"] = sample.assistant_text
    if sample.context_embedding is not None:
        record["context_embedding"] = [float(x) for x in sample.context_embedding]
    return record


def dialogue_to_record(dialogue: Dialogue) -> dict:
    """Serialize a Dialogue as a nested record referencing sample ids."""
    record = {
        "seed": dialogue.seed.id,
        "past": [s.id for s in dialogue.past],
        "future": [s.id for s in dialogue.future],
        "window_s": dialogue.window_s,
    }
    if dialogue.assistant_past is not None:
        record["assistant_past"] = dialogue.assistant_past
    if dialogue.assistant_future is not None:
        record["assistant_future"] = dialogue.assistant_future
    if dialogue.has_reformulation is not None:
        record["has_reformulation"] = dialogue.has_reformulation
        record["reformulation_ids"] = [
            s.id for s in dialogue.past + dialogue.future if s.is_reformulation
        ]
    return record


def parse_sample_stream(
    source: Iterable[str | bytes] | IO,
    expected_dim: int,
    strict: bool = True,
    stats: ParseStats | None = None,
) -> Iterator[Sample]:
    """Lazily parse newline-delimited JSON records into Samples.

    Memory use is constant in the stream length. In strict mode the first
    malformed record raises ``RecordParseError`` naming its line; in lenient
    mode bad records are skipped and counted in ``stats``.

    Args:
        source: An iterable of lines (text or bytes) or an open file.
        expected_dim: Required embedding dimensionality.
        strict: Abort on the first bad record instead of skipping it.
        stats: Optional counter object updated in place while iterating.
    """
    if expected_dim < 1:
        raise ValueError("expected_dim must be positive")
    for line_number, line in enumerate(source, start=1):
        if stats is not None:
            stats.last_line = line_number
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="strict" if strict else "replace")
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise RecordParseError("record is not a JSON object", line_number)
            sample = sample_from_record(record, expected_dim, line_number)
        except RecordParseError:
            if strict:
                raise
            if stats is not None:
                stats.records_skipped += 1
            continue
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            if strict:
                raise RecordParseError(str(exc), line_number) from exc
            if stats is not None:
                stats.records_skipped += 1
            continue
        if stats is not None:
            stats.records_read += 1
        yield sample


def generate_synthetic(spec: SyntheticSpec, attach_context: bool = False) -> list[Sample]:
    """Generate a deterministic Gaussian-mixture stream of Samples.

    Emits ``n_clusters * samples_per_cluster`` samples. Cluster centroids are
    drawn from N(0, centroid_scale^2 I); each sample is an isotropic Gaussian
    draw around its centroid with standard deviation ``cluster_spread``. The
    ground-truth cluster is recorded in ``domain_tag``. Emission order is a
    seeded shuffle, so the stream looks like mixed traffic rather than one
    cluster at a time. Identical specs produce bit-identical output.

    When ``attach_context`` is set, each sample also carries a second,
    independent draw from its own cluster as ``context_embedding``, standing
    in for a same-dialogue context turn.
    """
    rng = np.random.default_rng(spec.rng_seed)
    k, dim, per = spec.n_clusters, spec.dim, spec.samples_per_cluster
    centroids = rng.normal(0.0, spec.centroid_scale, size=(k, dim))
    points = rng.normal(0.0, 1.0, size=(k * per, dim)) * spec.cluster_spread
    points += np.repeat(centroids, per, axis=0)
    contexts = None
    if attach_context:
        contexts = rng.normal(0.0, 1.0, size=(k * per, dim)) * spec.cluster_spread
        contexts += np.repeat(centroids, per, axis=0)
    order = rng.permutation(k * per)

    samples = []
    for position, flat_index in enumerate(order):
        c, i = divmod(int(flat_index), per)
        sample_id = f"c{c:02d}-s{i:05d}"
        samples.append(
            Sample(
                id=sample_id,
                dialogue_id=f"dlg-{sample_id}",
                turn_index=0,
                timestamp_s=float(position),
                text=f"synthetic utterance {sample_id}",
                embedding=points[flat_index],
                domain_tag=f"cluster-{c:02d}",
                context_embedding=contexts[flat_index] if contexts is not None else None,
            )
        )
    return samples


def annotate_reformulation(sample: Sample, flag: bool) -> Sample:
    """Return a copy of ``sample`` with its reformulation flag set."""
    return replace(sample, is_reformulation=flag)


def true_centroids(spec: SyntheticSpec) -> np.ndarray:
    """The ground-truth centroids a given spec draws its clusters around."""
    rng = np.random.default_rng(spec.rng_seed)
    return rng.normal(0.0, spec.centroid_scale, size=(spec.n_clusters, spec.dim))
