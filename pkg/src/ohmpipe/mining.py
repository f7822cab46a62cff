"""Dialogue mining: time-window construction, reformulation detection,
up-sampling, and weighted stream mixing.

A dialogue is built around a seed utterance by chaining in every utterance
within a time window of anything already included. If that pulls in too
many turns, the window shrinks geometrically down to a floor and the
gathering restarts from the seed. Reformulations are detected by text
similarity between the seed and its later context turns.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field, replace
from math import sqrt
from typing import Iterable, Iterator, Sequence

import numpy as np

from .ingest import Dialogue, Sample

__all__ = [
    "WindowConfig",
    "SimilarityConfig",
    "MixSpec",
    "UpsampleStats",
    "MixStats",
    "build_dialogue",
    "text_similarity",
    "detect_reformulations",
    "upsample_reformulations",
    "mix_streams",
]


@dataclass(frozen=True)
class WindowConfig:
    """Shrinking time-window schedule for dialogue construction."""

    initial_window_s: float = 90.0
    shrink_factor: float = 0.5
    min_window_s: float = 15.0
    max_utterances: int = 5

    def __post_init__(self):
        if not (self.initial_window_s >= self.min_window_s > 0):
            raise ValueError("require initial_window_s >= min_window_s > 0")
        if not (0 < self.shrink_factor < 1):
            raise ValueError("shrink_factor must be in (0, 1)")
        if self.max_utterances < 1:
            raise ValueError("max_utterances must be >= 1")


@dataclass(frozen=True)
class SimilarityConfig:
    """Thresholds for reformulation detection.

    ``combine`` decides whether either similarity ("any") or both ("all")
    must clear their thresholds. Candidates are the context turns after
    the seed by default; ``include_past`` restores the symmetric check.
    """

    cosine_threshold: float = 0.6
    edit_sim_threshold: float = 0.7
    combine: str = "any"
    ngram_order: int = 3
    include_past: bool = False

    def __post_init__(self):
        if not (0 <= self.cosine_threshold <= 1 and 0 <= self.edit_sim_threshold <= 1):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.combine not in ("any", "all"):
            raise ValueError("combine must be 'any' or 'all'")
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")


@dataclass
class MixSpec:
    """Weighted mixture of sample streams."""

    streams: list  # list of (iterable, weight) pairs
    rng_seed: int = 0

    def __post_init__(self):
        weights = [w for _, w in self.streams]
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("need at least one stream with a positive weight")


@dataclass
class UpsampleStats:
    standard_emitted: int = 0
    reform_emitted: int = 0
    reform_wraparounds: int = 0


@dataclass
class MixStats:
    emitted_per_stream: list = field(default_factory=list)
    exhausted_order: list = field(default_factory=list)


def build_dialogue(seed: Sample, pool: Sequence[Sample], cfg: WindowConfig | None = None) -> Dialogue:
    """Gather the time-windowed context turns around a seed utterance.

    Starting from the initial window w, every pool utterance within w
    seconds of any already-included utterance is pulled in, iterated to a
    fixed point. If more than ``max_utterances`` context turns result, w
    shrinks (w * shrink_factor, floored at the minimum) and the gathering
    restarts from the seed alone; the minimum-window result is returned
    even when still over the cap. The pool must be sorted by timestamp.
    """
    cfg = cfg or WindowConfig()
    times = [s.timestamp_s for s in pool]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("pool must be sorted by ascending timestamp")

    candidates = [s for s in pool if s.id != seed.id]
    window = cfg.initial_window_s
    while True:
        included = _chain_window(seed, candidates, window)
        if len(included) <= cfg.max_utterances or window <= cfg.min_window_s:
            break
        window = max(window * cfg.shrink_factor, cfg.min_window_s)

    past = [s for s in included if s.timestamp_s <= seed.timestamp_s]
    future = [s for s in included if s.timestamp_s > seed.timestamp_s]
    return Dialogue(seed=seed, past=past, future=future, window_s=window)


def _chain_window(seed: Sample, candidates: list[Sample], window: float) -> list[Sample]:
    # Inclusion chains transitively: a candidate joins when it is within
    # `window` of any included utterance. On a time-sorted pool this is a
    # frontier expansion left and right of the seed.
    before = [s for s in candidates if s.timestamp_s <= seed.timestamp_s]
    after = [s for s in candidates if s.timestamp_s > seed.timestamp_s]

    included: list[Sample] = []
    frontier = seed.timestamp_s
    for s in reversed(before):
        if frontier - s.timestamp_s <= window:
            included.append(s)
            frontier = s.timestamp_s
        else:
            break
    included.reverse()
    frontier = seed.timestamp_s
    for s in after:
        if s.timestamp_s - frontier <= window:
            included.append(s)
            frontier = s.timestamp_s
        else:
            break
    return included


_WHITESPACE = re.compile(r"\s+")


def _normalize_text(text: str) -> str:
    return _WHITESPACE.sub(" ", text.lower()).strip()


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def _token_levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        current = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            current.append(min(previous[j] + 1, current[-1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def text_similarity(a: str, b: str, cfg: SimilarityConfig | None = None) -> tuple[float, float]:
    """Cosine similarity of character n-gram counts and token edit similarity.

    Both texts are lowercased with whitespace collapsed first. Edit
    similarity is 1 - levenshtein(tokens) / max(len), with two empty texts
    defined as identical. Both values lie in [0, 1] and are symmetric.
    """
    cfg = cfg or SimilarityConfig()
    a_norm, b_norm = _normalize_text(a), _normalize_text(b)

    grams_a = _char_ngrams(a_norm, cfg.ngram_order)
    grams_b = _char_ngrams(b_norm, cfg.ngram_order)
    dot = sum(count * grams_b[g] for g, count in grams_a.items())
    sq_a = sum(c * c for c in grams_a.values())
    sq_b = sum(c * c for c in grams_b.values())
    # Single square root over the integer product keeps the identity case
    # exactly 1.0; clamp for safety on the rest.
    cosine = min(dot / sqrt(sq_a * sq_b), 1.0) if sq_a > 0 and sq_b > 0 else 0.0

    tokens_a = a_norm.split()
    tokens_b = b_norm.split()
    longest = max(len(tokens_a), len(tokens_b))
    if longest == 0:
        edit_sim = 1.0
    else:
        edit_sim = 1.0 - _token_levenshtein(tokens_a, tokens_b) / longest
    return cosine, edit_sim


def _passes(cosine: float, edit_sim: float, cfg: SimilarityConfig) -> bool:
    cos_ok = cosine >= cfg.cosine_threshold
    edit_ok = edit_sim >= cfg.edit_sim_threshold
    return (cos_ok or edit_ok) if cfg.combine == "any" else (cos_ok and edit_ok)


def detect_reformulations(dialogue: Dialogue, cfg: SimilarityConfig | None = None) -> Dialogue:
    """Flag context turns whose text rephrases the seed utterance.

    Only turns after the seed are candidates by default, since a user's
    rephrase follows the turn that caused it; ``cfg.include_past`` widens
    the check to every context turn. Returns a new Dialogue with per-turn
    flags and a dialogue-level flag set; idempotent and deterministic.
    """
    cfg = cfg or SimilarityConfig()

    def annotate(samples: list[Sample], active: bool) -> tuple[list[Sample], bool]:
        out, hit = [], False
        for s in samples:
            if active:
                cosine, edit_sim = text_similarity(dialogue.seed.text, s.text, cfg)
                flagged = _passes(cosine, edit_sim, cfg)
                out.append(replace(s, is_reformulation=flagged))
                hit = hit or flagged
            else:
                out.append(s)
        return out, hit

    past, past_hit = annotate(dialogue.past, cfg.include_past)
    future, future_hit = annotate(dialogue.future, True)
    return Dialogue(
        seed=dialogue.seed,
        past=past,
        future=future,
        window_s=dialogue.window_s,
        assistant_past=dialogue.assistant_past,
        assistant_future=dialogue.assistant_future,
        has_reformulation=past_hit or future_hit,
    )


def upsample_reformulations(
    standard: Iterable[Dialogue],
    reform: Iterable[Dialogue],
    ratio: int = 5,
    stats: UpsampleStats | None = None,
) -> Iterator[Dialogue]:
    """Interleave one reformulation dialogue after every ``ratio`` standard ones.

    The ratio is exact, not statistical: every aligned (ratio+1)-group of
    the output ends with exactly one reformulation item. The reformulation
    stream cycles from the start if it runs out, counting wraparounds; an
    empty reformulation stream is an error the first time one is needed.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    reform_iter = iter(reform)
    reform_cache: list[Dialogue] = []
    reform_pos = 0

    def next_reform() -> Dialogue:
        nonlocal reform_pos
        try:
            item = next(reform_iter)
            reform_cache.append(item)
            return item
        except StopIteration:
            if not reform_cache:
                raise ValueError("reformulation stream is empty; ratio cannot be met") from None
            if stats is not None and reform_pos % len(reform_cache) == 0:
                stats.reform_wraparounds += 1
            item = reform_cache[reform_pos % len(reform_cache)]
            reform_pos += 1
            return item

    since_reform = 0
    for dialogue in standard:
        yield dialogue
        if stats is not None:
            stats.standard_emitted += 1
        since_reform += 1
        if since_reform == ratio:
            item = next_reform()
            yield item
            if stats is not None:
                stats.reform_emitted += 1
            since_reform = 0


def mix_streams(spec: MixSpec, stats: MixStats | None = None) -> Iterator[Sample]:
    """Emit samples by picking a source stream per draw, weight-proportionally.

    Long-run empirical fractions converge to the normalized weights. When a
    stream runs dry the remaining weights are renormalized; the mix ends
    when every stream is exhausted.
    """
    rng = np.random.default_rng(spec.rng_seed)
    iterators = [iter(stream) for stream, _ in spec.streams]
    weights = np.asarray([float(w) for _, w in spec.streams])
    alive = [w > 0 for w in weights]
    counts = [0] * len(iterators)
    if stats is not None:
        stats.emitted_per_stream = counts

    while any(alive):
        probs = np.where(alive, weights, 0.0)
        probs = probs / probs.sum()
        pick = int(rng.choice(len(iterators), p=probs))
        try:
            item = next(iterators[pick])
        except StopIteration:
            alive[pick] = False
            if stats is not None:
                stats.exhausted_order.append(pick)
            continue
        counts[pick] += 1
        yield item
