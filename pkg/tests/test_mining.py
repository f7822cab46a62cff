import numpy as np
import pytest

from ohmpipe.ingest import Dialogue, Sample
from ohmpipe.mining import (
    MixSpec,
    MixStats,
    SimilarityConfig,
    UpsampleStats,
    WindowConfig,
    build_dialogue,
    detect_reformulations,
    mix_streams,
    text_similarity,
    upsample_reformulations,
)

DIM = 2


def _utt(uid, t, text="hello there"):
    return Sample(id=uid, dialogue_id=f"d-{uid}", turn_index=0, timestamp_s=float(t),
                  text=text, embedding=np.zeros(DIM))


def _pool(times):
    return [_utt(f"u{i}", t) for i, t in enumerate(times)]


class TestBuildDialogue:
    def test_hand_trace_chaining(self):
        # Seed at t=200 with offsets {-200, -30, +40, +80, +200}: the +200
        # utterance is 120s past the chain frontier at +80, so it stays out.
        seed = _utt("seed", 200.0)
        pool = sorted(_pool([0.0, 170.0, 240.0, 280.0, 400.0]) + [seed],
                      key=lambda s: s.timestamp_s)
        dialogue = build_dialogue(seed, pool)
        assert [s.timestamp_s for s in dialogue.past] == [170.0]
        assert [s.timestamp_s for s in dialogue.future] == [240.0, 280.0]
        assert dialogue.window_s == 90.0

    def test_seed_alone(self):
        seed = _utt("seed", 50.0)
        dialogue = build_dialogue(seed, [seed])
        assert dialogue.past == [] and dialogue.future == []
        assert dialogue.window_s == 90.0

    def test_shrink_stops_at_minimum_window(self):
        # Seven context turns within 10s of the seed survive every shrink;
        # the schedule bottoms out at 15s and returns all of them.
        seed = _utt("seed", 100.0)
        contexts = _pool([92.0, 94.0, 96.0, 103.0, 105.0, 107.0, 109.0])
        pool = sorted(contexts + [seed], key=lambda s: s.timestamp_s)
        dialogue = build_dialogue(seed, pool)
        assert len(dialogue.past) + len(dialogue.future) == 7
        assert dialogue.window_s == 15.0

    def test_shrink_recovers_small_dialogue(self):
        # Six future turns chain in at w=90; the 60s gap after +90 breaks the
        # chain once the window halves, leaving three turns at w=45.
        seed = _utt("seed", 1000.0)
        offsets = [30.0, 60.0, 90.0, 150.0, 220.0, 300.0]
        pool = sorted([_utt(f"c{i}", 1000.0 + off) for i, off in enumerate(offsets)] + [seed],
                      key=lambda s: s.timestamp_s)
        dialogue = build_dialogue(seed, pool, WindowConfig(max_utterances=5))
        assert dialogue.window_s == 45.0
        assert [s.timestamp_s for s in dialogue.future] == [1030.0, 1060.0, 1090.0]
        assert dialogue.past == []

    def test_window_monotonicity(self):
        rng = np.random.default_rng(10)
        for trial in range(30):
            times = np.sort(rng.uniform(0, 2000, size=20))
            pool = [_utt(f"u{i}", t) for i, t in enumerate(times)]
            seed = pool[int(rng.integers(0, 20))]
            previous: set = set()
            for w in (15.0, 22.5, 45.0, 90.0, 200.0):
                cfg = WindowConfig(initial_window_s=w, min_window_s=w, max_utterances=10**6)
                included = build_dialogue(seed, pool, cfg).context_ids()
                assert previous <= included
                previous = included

    def test_unsorted_pool_rejected(self):
        seed = _utt("seed", 5.0)
        pool = [_utt("a", 10.0), _utt("b", 1.0)]
        with pytest.raises(ValueError, match="sorted"):
            build_dialogue(seed, pool)

    def test_empty_pool(self):
        seed = _utt("seed", 5.0)
        dialogue = build_dialogue(seed, [])
        assert dialogue.past == [] and dialogue.future == []


class TestTextSimilarity:
    def test_identity(self):
        assert text_similarity("play jazz", "play jazz") == (1.0, 1.0)

    def test_token_insertion(self):
        _, edit_sim = text_similarity("play jazz", "play some jazz")
        assert edit_sim == pytest.approx(1 - 1 / 3)

    def test_disjoint_trigrams(self):
        cosine, _ = text_similarity("abc", "xyz")
        assert cosine == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        words = ["turn", "on", "the", "kitchen", "lights", "play", "jazz", "music"]
        for _ in range(50):
            a = " ".join(rng.choice(words, size=rng.integers(1, 6)))
            b = " ".join(rng.choice(words, size=rng.integers(1, 6)))
            assert text_similarity(a, b) == text_similarity(b, a)

    def test_case_and_whitespace_invariance(self):
        messy = text_similarity("Play   JAZZ", "play jazz")
        assert messy == (1.0, 1.0)

    def test_bounds(self):
        rng = np.random.default_rng(12)
        words = ["alpha", "beta", "gamma", "delta"]
        for _ in range(50):
            a = " ".join(rng.choice(words, size=rng.integers(0, 5)))
            b = " ".join(rng.choice(words, size=rng.integers(0, 5)))
            cosine, edit_sim = text_similarity(a, b)
            assert 0.0 <= cosine <= 1.0 + 1e-12
            assert 0.0 <= edit_sim <= 1.0

    def test_both_empty(self):
        cosine, edit_sim = text_similarity("", "")
        assert edit_sim == 1.0
        assert cosine == 0.0


def _dialogue(seed_text, future_texts, past_texts=()):
    seed = _utt("seed", 100.0, seed_text)
    past = [_utt(f"p{i}", 90.0 + i, t) for i, t in enumerate(past_texts)]
    future = [_utt(f"f{i}", 101.0 + i, t) for i, t in enumerate(future_texts)]
    return Dialogue(seed=seed, past=past, future=future, window_s=90.0)


class TestDetectReformulations:
    def test_near_repeat_flagged_by_edit_similarity(self):
        d = detect_reformulations(
            _dialogue("turn on kitchen lights", ["turn on the kitchen lights"]))
        assert d.has_reformulation is True
        assert d.future[0].is_reformulation is True

    def test_verbatim_repeat_flagged(self):
        d = detect_reformulations(_dialogue("play jazz", ["play jazz"]))
        assert d.has_reformulation is True

    def test_unrelated_query_not_flagged(self):
        cosine, edit_sim = text_similarity("play jazz", "what's the weather")
        assert cosine < 0.6 and edit_sim < 0.7  # defaults stay below threshold
        d = detect_reformulations(_dialogue("play jazz", ["what's the weather"]))
        assert d.has_reformulation is False
        assert d.future[0].is_reformulation is False

    def test_past_contexts_ignored_by_default(self):
        d = detect_reformulations(_dialogue("play jazz", [], past_texts=["play jazz"]))
        assert d.has_reformulation is False
        assert d.past[0].is_reformulation is None

    def test_include_past_restores_symmetric_check(self):
        cfg = SimilarityConfig(include_past=True)
        d = detect_reformulations(_dialogue("play jazz", [], past_texts=["play jazz"]), cfg)
        assert d.has_reformulation is True

    def test_idempotent(self):
        d = _dialogue("turn on kitchen lights", ["turn on the kitchen lights", "weather"])
        once = detect_reformulations(d)
        twice = detect_reformulations(once)
        assert [s.is_reformulation for s in once.future] == \
            [s.is_reformulation for s in twice.future]
        assert once.has_reformulation == twice.has_reformulation

    def test_combine_all_requires_both(self):
        cfg = SimilarityConfig(combine="all")
        # High edit similarity but the cosine must also pass under "all".
        d = detect_reformulations(
            _dialogue("turn on kitchen lights", ["turn on the kitchen lights"]), cfg)
        cosine, edit_sim = text_similarity("turn on kitchen lights",
                                           "turn on the kitchen lights")
        expected = cosine >= 0.6 and edit_sim >= 0.7
        assert d.has_reformulation is expected


def _dialogues(prefix, n):
    return [_dialogue(f"{prefix} {i}", []) for i in range(n)]


class TestUpsampleReformulations:
    def test_exact_one_in_five(self):
        stats = UpsampleStats()
        out = list(upsample_reformulations(_dialogues("std", 25), _dialogues("ref", 5),
                                           ratio=5, stats=stats))
        assert len(out) == 30
        reform_positions = [i for i, d in enumerate(out) if d.seed.text.startswith("ref")]
        assert reform_positions == [5, 11, 17, 23, 29]
        assert stats.reform_emitted == 5 and stats.standard_emitted == 25

    def test_strict_alternation_at_ratio_one(self):
        out = list(upsample_reformulations(_dialogues("std", 4), _dialogues("ref", 4), ratio=1))
        kinds = [d.seed.text.split()[0] for d in out]
        assert kinds == ["std", "ref", "std", "ref", "std", "ref", "std", "ref"]

    def test_ratio_ten_counts(self):
        out = list(upsample_reformulations(_dialogues("std", 100), _dialogues("ref", 50),
                                           ratio=10))
        reforms = [d for d in out if d.seed.text.startswith("ref")]
        assert len(reforms) == 10
        assert len(out) == 110

    def test_short_reform_stream_cycles(self):
        stats = UpsampleStats()
        out = list(upsample_reformulations(_dialogues("std", 20), _dialogues("ref", 2),
                                           ratio=5, stats=stats))
        reforms = [d.seed.text for d in out if d.seed.text.startswith("ref")]
        assert reforms == ["ref 0", "ref 1", "ref 0", "ref 1"]
        assert stats.reform_wraparounds >= 1

    def test_empty_reform_stream_is_an_error(self):
        with pytest.raises(ValueError, match="empty"):
            list(upsample_reformulations(_dialogues("std", 10), [], ratio=5))

    def test_every_sliding_window_has_exactly_one_reform(self):
        k = 4
        out = list(upsample_reformulations(_dialogues("std", 40), _dialogues("ref", 10),
                                           ratio=k))
        flags = [d.seed.text.startswith("ref") for d in out]
        for start in range(len(flags) - k):
            assert sum(flags[start : start + k + 1]) == 1


def _samples(prefix, n):
    return [_utt(f"{prefix}{i}", i) for i in range(n)]


class TestMixStreams:
    def test_degenerate_weight_uses_single_stream(self):
        spec = MixSpec(streams=[(_samples("a", 50), 100.0), (_samples("b", 50), 0.0)],
                       rng_seed=1)
        out = list(mix_streams(spec))
        assert len(out) == 50
        assert all(s.id.startswith("a") for s in out)

    def test_even_split_converges(self):
        n = 100_000
        spec = MixSpec(streams=[(_samples("a", n), 50.0), (_samples("b", n), 50.0)],
                       rng_seed=2)
        stats = MixStats()
        drawn = 0
        for _ in mix_streams(spec, stats):
            drawn += 1
            if drawn == n:
                break
        frac = stats.emitted_per_stream[0] / n
        assert abs(frac - 0.5) <= 0.01

    def test_unbalanced_split_converges(self):
        n = 100_000
        spec = MixSpec(streams=[(_samples("a", n), 20.0), (_samples("b", n), 80.0)],
                       rng_seed=3)
        stats = MixStats()
        drawn = 0
        for _ in mix_streams(spec, stats):
            drawn += 1
            if drawn == n:
                break
        frac = stats.emitted_per_stream[0] / n
        assert abs(frac - 0.2) <= 0.01

    def test_exhausted_stream_renormalizes(self):
        spec = MixSpec(streams=[(_samples("a", 10), 50.0), (_samples("b", 500), 50.0)],
                       rng_seed=4)
        stats = MixStats()
        out = list(mix_streams(spec, stats))
        assert len(out) == 510  # everything is eventually emitted
        assert stats.exhausted_order[0] == 0
        assert out[-1].id.startswith("b")

    def test_deterministic_given_seed(self):
        def run():
            spec = MixSpec(streams=[(_samples("a", 30), 30.0), (_samples("b", 30), 70.0)],
                           rng_seed=5)
            return [s.id for s in mix_streams(spec)]

        assert run() == run()

    def test_requires_positive_weight(self):
        with pytest.raises(ValueError):
            MixSpec(streams=[(_samples("a", 5), 0.0)])
