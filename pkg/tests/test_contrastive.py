import math

import numpy as np
import pytest

from ohmpipe.contrastive import (
    ContrastiveConfig,
    ContrastiveItem,
    batch_hardness,
    compare_batching,
    pfclc_loss,
)
from ohmpipe.ingest import Sample, SyntheticSpec, generate_synthetic
from ohmpipe.pipeline import OhmConfig


def _item(anchor, positive, dialogue):
    return ContrastiveItem(np.asarray(anchor, dtype=float),
                           np.asarray(positive, dtype=float), dialogue)


def _self_paired(vectors):
    return [_item(v, v, f"d{i}") for i, v in enumerate(vectors)]


def _naive_loss(items, tau, symmetric=True):
    """Per-item softmax loss computed with explicit loops, as an oracle."""

    def unit(v):
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    def one_direction(queries, keys):
        total = 0.0
        for i, q in enumerate(queries):
            exps = []
            positive = None
            for j, key in enumerate(keys):
                if j != i and items[j].dialogue_id == items[i].dialogue_id:
                    continue
                value = math.exp(float(unit(q) @ unit(key)) / tau)
                exps.append(value)
                if j == i:
                    positive = value
            total += -math.log(positive / sum(exps))
        return total / len(queries)

    anchors = [it.anchor for it in items]
    positives = [it.positive for it in items]
    forward = one_direction(anchors, positives)
    if not symmetric:
        return forward
    return 0.5 * (forward + one_direction(positives, anchors))


class TestPfclcLoss:
    @pytest.mark.parametrize("n", [2, 4, 16])
    def test_all_equal_similarities_give_ln_n(self, n):
        v = np.array([0.3, -0.7, 0.2])
        items = [_item(v, v, f"d{i}") for i in range(n)]
        loss = pfclc_loss(items, ContrastiveConfig(temperature=0.07))
        assert loss == pytest.approx(math.log(n), abs=1e-9)

    def test_two_item_orthogonal_value(self):
        items = [_item([1.0, 0.0], [1.0, 0.0], "d0"),
                 _item([0.0, 1.0], [0.0, 1.0], "d1")]
        loss = pfclc_loss(items, ContrastiveConfig(temperature=1.0))
        expected = -math.log(math.e / (math.e + 1.0))
        assert loss == pytest.approx(expected, abs=1e-12)
        assert loss == pytest.approx(0.3133, abs=1e-4)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(20)
        for direction in ("symmetric", "anchor_to_positive"):
            for _ in range(10):
                items = [
                    _item(rng.normal(size=6), rng.normal(size=6), f"d{i}")
                    for i in range(8)
                ]
                cfg = ContrastiveConfig(temperature=0.3, direction=direction)
                expected = _naive_loss(items, 0.3, symmetric=direction == "symmetric")
                assert pfclc_loss(items, cfg) == pytest.approx(expected, rel=1e-10)

    def test_mismatched_positives_raise_the_loss(self):
        # Eight well-separated dialogues; derange the positives.
        eye = np.eye(8)
        correct = [_item(eye[i], eye[i], f"d{i}") for i in range(8)]
        permuted = [_item(eye[i], eye[(i + 1) % 8], f"d{i}") for i in range(8)]
        cfg = ContrastiveConfig(temperature=0.5)
        assert pfclc_loss(permuted, cfg) > pfclc_loss(correct, cfg)
        # Against the loop oracle as well.
        assert pfclc_loss(permuted, cfg) == pytest.approx(_naive_loss(permuted, 0.5))

    def test_scale_invariance(self):
        rng = np.random.default_rng(21)
        items = [_item(rng.normal(size=5), rng.normal(size=5), f"d{i}") for i in range(6)]
        cfg = ContrastiveConfig(temperature=0.07)
        base = pfclc_loss(items, cfg)
        for scale in (0.1, 10.0):
            scaled = [
                _item(scale * it.anchor, scale * it.positive, it.dialogue_id)
                for it in items
            ]
            assert pfclc_loss(scaled, cfg) == pytest.approx(base, abs=1e-7)

    def test_lower_temperature_widens_the_correct_vs_permuted_gap(self):
        eye = np.eye(8)
        correct = [_item(eye[i], eye[i], f"d{i}") for i in range(8)]
        permuted = [_item(eye[i], eye[(i + 1) % 8], f"d{i}") for i in range(8)]
        gaps = []
        for tau in (1.0, 0.5, 0.1, 0.05):
            cfg = ContrastiveConfig(temperature=tau)
            gaps.append(pfclc_loss(permuted, cfg) - pfclc_loss(correct, cfg))
        assert all(b > a for a, b in zip(gaps, gaps[1:]))

    def test_loss_non_negative(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            items = [_item(rng.normal(size=4), rng.normal(size=4), f"d{i}")
                     for i in range(5)]
            assert pfclc_loss(items) >= 0.0

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            pfclc_loss([_item([1.0, 0.0], [1.0, 0.0], "d0")])

    def test_dimension_mismatch_rejected(self):
        items = [_item([1.0, 0.0], [1.0, 0.0], "d0"),
                 _item([0.0, 1.0, 0.0], [0.0, 1.0, 0.0], "d1")]
        with pytest.raises(ValueError, match="dimension"):
            pfclc_loss(items)

    def test_same_dialogue_items_excluded_from_negatives(self):
        # Two items share a dialogue: each keeps only the other dialogue's
        # positive as its negative, never its twin.
        a, b, c = np.eye(3)
        items = [_item(a, a, "shared"), _item(b, b, "shared"), _item(c, c, "solo")]
        loss = pfclc_loss(items, ContrastiveConfig(temperature=1.0,
                                                   direction="anchor_to_positive"))
        # Item 0: candidates {a, c}; item 1: {b, c}; item 2: {c, a, b}.
        expected = (
            -math.log(math.e / (math.e + 1.0)) * 2
            - math.log(math.e / (math.e + 2.0))
        ) / 3
        assert loss == pytest.approx(expected, abs=1e-12)


def _sample(uid, dialogue, embedding, context=None):
    return Sample(id=uid, dialogue_id=dialogue, turn_index=0, timestamp_s=0.0,
                  text=uid, embedding=np.asarray(embedding, dtype=float),
                  context_embedding=None if context is None else np.asarray(context, dtype=float))


class TestBatchHardness:
    def test_orthogonal_batch_scores_zero(self):
        eye = np.eye(4)
        batch = [_sample(f"s{i}", f"d{i}", eye[i]) for i in range(4)]
        report = batch_hardness(batch)
        assert report.mean_negative_sim == pytest.approx(0.0)
        assert report.n_pairs == 6

    def test_identical_embeddings_score_one(self):
        v = np.array([0.5, 0.5, 0.0])
        batch = [_sample(f"s{i}", f"d{i}", v) for i in range(4)]
        report = batch_hardness(batch)
        assert report.mean_negative_sim == pytest.approx(1.0)

    def test_single_cluster_batch_harder_than_mixed(self):
        rng = np.random.default_rng(23)
        blob_a = rng.normal([5.0, 0.0, 0.0], 0.1, size=(8, 3))
        blob_b = rng.normal([0.0, 5.0, 0.0], 0.1, size=(8, 3))
        pure = [_sample(f"a{i}", f"da{i}", blob_a[i]) for i in range(8)]
        mixed = [_sample(f"m{i}", f"dm{i}", (blob_a if i % 2 else blob_b)[i]) for i in range(8)]
        assert batch_hardness(pure).mean_negative_sim > batch_hardness(mixed).mean_negative_sim

    def test_permutation_invariance(self):
        rng = np.random.default_rng(24)
        batch = [_sample(f"s{i}", f"d{i}", rng.normal(size=4)) for i in range(6)]
        base = batch_hardness(batch).mean_negative_sim
        for _ in range(5):
            perm = [batch[int(i)] for i in rng.permutation(6)]
            assert batch_hardness(perm).mean_negative_sim == pytest.approx(base)

    def test_single_dialogue_batch_flagged(self):
        v = np.eye(2)
        batch = [_sample("s0", "same", v[0]), _sample("s1", "same", v[1])]
        with pytest.warns(RuntimeWarning, match="single-dialogue"):
            report = batch_hardness(batch)
        assert math.isnan(report.mean_negative_sim)
        assert report.loss is None

    def test_loss_computed_from_context_embeddings(self):
        rng = np.random.default_rng(25)
        batch = [
            _sample(f"s{i}", f"d{i}", rng.normal(size=4), context=rng.normal(size=4))
            for i in range(4)
        ]
        report = batch_hardness(batch, ContrastiveConfig(temperature=0.2))
        assert report.loss is not None and report.loss >= 0.0

    def test_loss_absent_without_contexts(self):
        rng = np.random.default_rng(26)
        batch = [_sample(f"s{i}", f"d{i}", rng.normal(size=4)) for i in range(4)]
        assert batch_hardness(batch).loss is None


def _synthetic(n_clusters=8, per_cluster=200, dim=16, seed=0, spread_ratio=20.0):
    spec = SyntheticSpec(n_clusters=n_clusters, dim=dim, samples_per_cluster=per_cluster,
                         cluster_spread=1.0, centroid_scale=spread_ratio, rng_seed=seed)
    return generate_synthetic(spec, attach_context=True)


class TestCompareBatching:
    def test_separated_clusters_make_harder_batches(self):
        samples = _synthetic()
        config = OhmConfig(dim=16, update_window_size=256, n_clusters=8,
                           refit_interval=400, batch_size=16, rng_seed=11)
        report = compare_batching(samples, config, ContrastiveConfig(), n_batches=60)
        assert report.ohm_mean_sim > report.uniform_mean_sim
        assert report.ohm_mean_loss > report.uniform_mean_loss
        assert report.p_value_sim < 0.01
        assert report.p_value_loss < 0.01

    def test_single_cluster_shows_no_difference(self):
        samples = _synthetic(n_clusters=1, per_cluster=1200)
        config = OhmConfig(dim=16, update_window_size=256, n_clusters=4,
                           refit_interval=400, batch_size=16, rng_seed=12)
        report = compare_batching(samples, config, ContrastiveConfig(), n_batches=40)
        assert report.p_value_sim > 0.05

    def test_cold_start_matches_uniform(self):
        samples = _synthetic(n_clusters=8, per_cluster=100)
        config = OhmConfig(dim=16, update_window_size=10_000, n_clusters=8,
                           refit_interval=10_000, batch_size=16, rng_seed=13)
        report = compare_batching(samples, config, ContrastiveConfig(), n_batches=40)
        assert report.p_value_sim > 0.05

    def test_insufficient_input_names_required_count(self):
        samples = _synthetic(n_clusters=2, per_cluster=10)
        config = OhmConfig(dim=16, batch_size=16, rng_seed=1)
        with pytest.raises(ValueError, match="320"):
            compare_batching(samples, config, n_batches=20)
