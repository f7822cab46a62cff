"""Contrastive loss and batch-hardness measurement over embeddings.

This module is an evaluator, not a trainer: it scores how hard a batch is
for a temperature-scaled contrastive objective (cross-entropy over cosine
similarities), pairing each anchor with its same-dialogue positive against
the positives of the other dialogues in the batch. No gradients anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sstats

from .ingest import Sample
from .pipeline import Batch, OhmConfig, OhmPipeline

__all__ = [
    "ContrastiveItem",
    "ContrastiveConfig",
    "HardnessReport",
    "ComparisonReport",
    "pfclc_loss",
    "batch_hardness",
    "compare_batching",
]


@dataclass(frozen=True)
class ContrastiveItem:
    """An anchor embedding paired with a same-dialogue positive."""

    anchor: np.ndarray
    positive: np.ndarray
    dialogue_id: str

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=np.float64))
        object.__setattr__(self, "positive", np.asarray(self.positive, dtype=np.float64))
        if self.anchor.shape != self.positive.shape:
            raise ValueError("anchor and positive must share a dimension")
        if not self.dialogue_id:
            raise ValueError("dialogue_id must be non-empty")


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.07
    direction: str = "symmetric"

    def __post_init__(self):
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ValueError("temperature must be positive and finite")
        if self.direction not in ("anchor_to_positive", "symmetric"):
            raise ValueError("direction must be 'anchor_to_positive' or 'symmetric'")


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return m / safe


def _directional_loss(
    queries: np.ndarray, keys: np.ndarray, dialogue_ids: Sequence[str], tau: float
) -> float:
    """Mean cross-entropy of matching query i to key i among the keys of
    other dialogues. Rows are pre-normalized; sim(0, anything) is 0."""
    sims = queries @ keys.T
    logits = sims / tau
    n = len(dialogue_ids)
    ids = np.asarray(dialogue_ids, dtype=object)
    same_dialogue = ids[:, None] == ids[None, :]
    candidate = ~same_dialogue
    np.fill_diagonal(candidate, True)  # the true pair always competes
    if not np.all(candidate.sum(axis=1) >= 2):
        raise ValueError("every item needs at least one cross-dialogue negative")
    masked = np.where(candidate, logits, -np.inf)
    peak = masked.max(axis=1, keepdims=True)
    log_denom = np.log(np.exp(masked - peak).sum(axis=1)) + peak[:, 0]
    return float(np.mean(log_denom - np.diagonal(logits)))


def pfclc_loss(items: Sequence[ContrastiveItem], cfg: ContrastiveConfig | None = None) -> float:
    """Temperature-scaled contrastive loss over anchor/positive pairs.

    For item i the candidate set is its own positive plus the positives of
    every other dialogue in the batch; same-dialogue items never count as
    negatives. Symmetric mode averages the anchor-to-positive and
    positive-to-anchor directions. Equals ln(N) exactly when every
    similarity ties, and is invariant to a common rescaling of all
    embeddings.
    """
    cfg = cfg or ContrastiveConfig()
    if len(items) < 2:
        raise ValueError("need at least 2 items (a batch of 1 has no negatives)")
    dims = {item.anchor.shape for item in items}
    if len(dims) != 1:
        raise ValueError(f"items mix embedding dimensions: {sorted(dims)}")
    anchors = _unit_rows(np.stack([item.anchor for item in items]).astype(np.float64))
    positives = _unit_rows(np.stack([item.positive for item in items]).astype(np.float64))
    ids = [item.dialogue_id for item in items]

    forward = _directional_loss(anchors, positives, ids, cfg.temperature)
    if cfg.direction == "anchor_to_positive":
        return forward
    backward = _directional_loss(positives, anchors, ids, cfg.temperature)
    return 0.5 * (forward + backward)


@dataclass(frozen=True)
class HardnessReport:
    """Hardness statistics for one batch.

    ``mean_negative_sim`` is the mean cosine similarity over cross-dialogue
    sample pairs (NaN when the batch has a single dialogue). ``loss`` is
    the contrastive loss over anchor/positive items when the samples carry
    context embeddings, else None (anchor-only mode).
    """

    mean_negative_sim: float
    loss: float | None
    n_pairs: int


def batch_hardness(
    batch: Batch | Sequence[Sample], cfg: ContrastiveConfig | None = None
) -> HardnessReport:
    """Measure how semantically crowded a batch is.

    Accepts an emitted Batch or a plain sample sequence. Harder batches
    have higher cross-dialogue similarity, which inflates the contrastive
    denominator and with it the loss.
    """
    cfg = cfg or ContrastiveConfig()
    samples = list(batch.samples) if isinstance(batch, Batch) else list(batch)
    if len(samples) < 2:
        raise ValueError("hardness needs at least 2 samples")

    embeddings = _unit_rows(np.stack([s.embedding for s in samples]).astype(np.float64))
    ids = np.asarray([s.dialogue_id for s in samples], dtype=object)
    cross = ids[:, None] != ids[None, :]
    upper = np.triu(np.ones(cross.shape, dtype=bool), k=1)
    pair_mask = cross & upper
    n_pairs = int(pair_mask.sum())
    if n_pairs == 0:
        warnings.warn("single-dialogue batch: hardness undefined", RuntimeWarning)
        mean_sim = float("nan")
    else:
        sims = embeddings @ embeddings.T
        mean_sim = float(sims[pair_mask].mean())

    items = [
        ContrastiveItem(s.embedding, s.context_embedding, s.dialogue_id)
        for s in samples
        if s.context_embedding is not None
    ]
    loss = None
    if len(items) >= 2 and n_pairs > 0:
        try:
            loss = pfclc_loss(items, cfg)
        except ValueError:
            warnings.warn("batch lacks cross-dialogue negatives; loss omitted", RuntimeWarning)
    return HardnessReport(mean_negative_sim=mean_sim, loss=loss, n_pairs=n_pairs)


@dataclass
class ComparisonReport:
    """Hardness distributions for clustered vs uniformly shuffled batching."""

    n_batches: int
    batch_size: int
    ohm_sims: list = field(default_factory=list)
    ohm_losses: list = field(default_factory=list)
    uniform_sims: list = field(default_factory=list)
    uniform_losses: list = field(default_factory=list)
    p_value_sim: float = float("nan")
    p_value_loss: float = float("nan")

    @property
    def ohm_mean_sim(self) -> float:
        return float(np.mean(self.ohm_sims))

    @property
    def uniform_mean_sim(self) -> float:
        return float(np.mean(self.uniform_sims))

    @property
    def ohm_mean_loss(self) -> float:
        return float(np.mean(self.ohm_losses)) if self.ohm_losses else float("nan")

    @property
    def uniform_mean_loss(self) -> float:
        return float(np.mean(self.uniform_losses)) if self.uniform_losses else float("nan")

    def to_dict(self) -> dict:
        return {
            "n_batches": self.n_batches,
            "batch_size": self.batch_size,
            "ohm": {
                "mean_negative_sim": self.ohm_mean_sim,
                "mean_loss": self.ohm_mean_loss,
                "per_batch_sim": self.ohm_sims,
                "per_batch_loss": self.ohm_losses,
            },
            "uniform": {
                "mean_negative_sim": self.uniform_mean_sim,
                "mean_loss": self.uniform_mean_loss,
                "per_batch_sim": self.uniform_sims,
                "per_batch_loss": self.uniform_losses,
            },
            "p_value_sim": self.p_value_sim,
            "p_value_loss": self.p_value_loss,
        }


def compare_batching(
    samples: Sequence[Sample],
    config: OhmConfig,
    cfg: ContrastiveConfig | None = None,
    n_batches: int = 100,
) -> ComparisonReport:
    """Run clustered and uniform-shuffle batching over the same input.

    Both strategies use the same batch size and draw their randomness from
    the same seed family. Reports per-batch hardness for each strategy and
    one-sided Mann-Whitney U p-values for the hypothesis that clustered
    batches are harder (higher similarity, higher loss).
    """
    cfg = cfg or ContrastiveConfig()
    samples = list(samples)
    required = n_batches * config.batch_size
    if len(samples) < required:
        raise ValueError(
            f"need at least {required} samples for {n_batches} batches of {config.batch_size}, "
            f"got {len(samples)}"
        )

    # Both strategies consume the whole input; when they produce more than
    # n_batches, a seeded subsample keeps the evaluation representative of
    # the full run (cold-start batches included at their natural fraction).
    seeds = np.random.SeedSequence(config.rng_seed).spawn(5)
    shuffle_rng = np.random.default_rng(seeds[3])
    subsample_rng = np.random.default_rng(seeds[4])

    pipeline = OhmPipeline(config)
    ohm_batches = [b for b in pipeline.run(iter(samples)) if len(b) == config.batch_size]
    if len(ohm_batches) < n_batches:
        raise ValueError(
            f"clustered batching produced only {len(ohm_batches)} full batches; need {n_batches}"
        )

    order = shuffle_rng.permutation(len(samples))
    uniform_batches = [
        [samples[int(i)] for i in order[k * config.batch_size : (k + 1) * config.batch_size]]
        for k in range(len(samples) // config.batch_size)
    ]

    def subsample(batches: list) -> list:
        if len(batches) <= n_batches:
            return batches
        picked = subsample_rng.choice(len(batches), size=n_batches, replace=False)
        return [batches[int(i)] for i in np.sort(picked)]

    ohm_batches = subsample(ohm_batches)
    uniform_batches = subsample(uniform_batches)

    report = ComparisonReport(n_batches=n_batches, batch_size=config.batch_size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for batch in ohm_batches:
            h = batch_hardness(batch, cfg)
            if not np.isnan(h.mean_negative_sim):
                report.ohm_sims.append(h.mean_negative_sim)
            if h.loss is not None:
                report.ohm_losses.append(h.loss)
        for group in uniform_batches:
            h = batch_hardness(group, cfg)
            if not np.isnan(h.mean_negative_sim):
                report.uniform_sims.append(h.mean_negative_sim)
            if h.loss is not None:
                report.uniform_losses.append(h.loss)

    if report.ohm_sims and report.uniform_sims:
        report.p_value_sim = float(
            sstats.mannwhitneyu(report.ohm_sims, report.uniform_sims, alternative="greater").pvalue
        )
    if report.ohm_losses and report.uniform_losses:
        report.p_value_loss = float(
            sstats.mannwhitneyu(report.ohm_losses, report.uniform_losses, alternative="greater").pvalue
        )
    return report
