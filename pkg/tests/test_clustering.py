import numpy as np
import pytest

from ohmpipe.clustering import (
    ClusterFeature,
    ClusterModel,
    adjusted_rand_index,
    model_quality,
    partial_fit,
)
from ohmpipe.ingest import SyntheticSpec, generate_synthetic, l2_normalize


def _two_blob_points(rng_seed=42):
    rng = np.random.default_rng(rng_seed)
    blob_a = rng.normal([0.0, 0.0], 0.1, size=(100, 2))
    blob_b = rng.normal([10.0, 10.0], 0.1, size=(100, 2))
    return np.vstack([blob_a, blob_b]), blob_a.mean(axis=0), blob_b.mean(axis=0)


class TestClusterFeature:
    def test_additivity_of_sufficient_statistics(self):
        rng = np.random.default_rng(1)
        set_a = rng.normal(size=(6, 3))
        set_b = rng.normal(size=(4, 3))
        cf_a = ClusterFeature(len(set_a), set_a.sum(axis=0), float((set_a ** 2).sum()))
        cf_b = ClusterFeature(len(set_b), set_b.sum(axis=0), float((set_b ** 2).sum()))
        merged = cf_a.merged(cf_b)
        both = np.vstack([set_a, set_b])
        assert merged.n == 10
        np.testing.assert_allclose(merged.ls, both.sum(axis=0))
        assert merged.ss == pytest.approx(float((both ** 2).sum()))

    def test_radius_matches_rms_distance(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(50, 4))
        cf = ClusterFeature(50, points.sum(axis=0), float((points ** 2).sum()))
        rms = np.sqrt(np.mean(np.sum((points - points.mean(axis=0)) ** 2, axis=1)))
        assert cf.radius() == pytest.approx(rms, rel=1e-9)

    def test_radius_non_negative_within_tolerance(self):
        # A single point has radius exactly 0 up to rounding.
        x = np.array([3.0, -1.0, 2.5])
        cf = ClusterFeature(1, x.copy(), float(x @ x))
        assert 0.0 <= cf.radius() < 1e-9


class TestPartialFit:
    def test_repeated_point_degenerates_to_one_leaf(self):
        model = ClusterModel.empty(dim=2, n_clusters=3)
        p = np.array([0.4, -0.2])
        with pytest.warns(RuntimeWarning, match="duplicates"):
            fitted = partial_fit(model, np.tile(p, (10, 1)))
        assert len(fitted.cf_entries) == 1
        assert fitted.cf_entries[0].n == 10
        np.testing.assert_allclose(fitted.cf_entries[0].centroid(), p)
        for centroid in fitted.centroids:
            np.testing.assert_allclose(centroid, p)

    def test_two_blobs_recover_their_means(self):
        # Oracle: with two tight, far-apart blobs the optimal 2-means
        # solution is the pair of blob means.
        points, mean_a, mean_b = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        centroids = sorted(model.centroids.tolist())
        expected = sorted([mean_a.tolist(), mean_b.tolist()])
        for got, want in zip(centroids, expected):
            assert np.linalg.norm(np.array(got) - np.array(want)) < 0.1
        assert np.linalg.norm(model.centroids[0] - [0, 0]) < 0.1 or \
            np.linalg.norm(model.centroids[0] - [10, 10]) < 0.1

    def test_snapshot_semantics(self):
        model = ClusterModel.empty(dim=2, n_clusters=2)
        points, _, _ = _two_blob_points()
        fitted = partial_fit(model, points)
        assert model.version == 0 and not model.fitted
        assert fitted.version == 1 and fitted.fitted
        refit = partial_fit(fitted, points)
        assert refit.version == 2
        assert fitted.version == 1  # old snapshot untouched

    def test_leaf_counts_sum_to_absorbed_total(self):
        rng = np.random.default_rng(3)
        model = ClusterModel.empty(dim=4, n_clusters=2, max_leaves=8)
        total = 0
        for _ in range(3):
            buffer = rng.normal(size=(40, 4))
            model = partial_fit(model, buffer)
            total += len(buffer)
            assert model.total_absorbed() == total

    def test_overflow_rebuild_grows_threshold(self):
        # Widely spread points force more leaves than allowed.
        rng = np.random.default_rng(4)
        points = rng.uniform(-100, 100, size=(300, 2))
        model = ClusterModel.empty(dim=2, n_clusters=4, threshold=0.01, max_leaves=16)
        fitted = partial_fit(model, points)
        assert len(fitted.cf_entries) <= 16
        assert fitted.threshold > model.threshold
        assert fitted.total_absorbed() == 300

    def test_dimension_mismatch(self):
        model = ClusterModel.empty(dim=3, n_clusters=2)
        with pytest.raises(ValueError, match="dimension"):
            partial_fit(model, np.ones((5, 2)))

    def test_empty_buffer_rejected(self):
        model = ClusterModel.empty(dim=3, n_clusters=2)
        with pytest.raises(ValueError, match="non-empty"):
            partial_fit(model, np.empty((0, 3)))


class TestPredict:
    def test_unfitted_model_returns_sentinel(self):
        model = ClusterModel.empty(dim=3, n_clusters=4)
        assert model.predict(np.array([1.0, 2.0, 3.0])) == 0
        assert model.predict(np.zeros(3)) == 0

    def test_blob_model_labels_nearby_query(self):
        points, _, _ = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        label_origin = model.predict(np.array([0.05, -0.02]))
        origin_centroid = model.centroids[label_origin]
        assert np.linalg.norm(origin_centroid) < 1.0  # it is the blob at the origin

    def test_tie_breaks_to_lowest_label(self):
        centroids = np.array([[5.0, 5.0], [1.0, 0.0], [-5.0, 5.0], [0.0, 1.0]])
        model = ClusterModel.from_centroids(centroids)
        # (1, 1) normalizes onto the diagonal, equidistant from labels 1 and 3.
        assert model.predict(np.array([1.0, 1.0])) == 1

    def test_scale_invariance(self):
        points, _, _ = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        rng = np.random.default_rng(5)
        for _ in range(100):
            v = rng.normal(size=2)
            for c in (0.001, 0.5, 3.0, 1e4):
                assert model.predict(c * v) == model.predict(v)

    def test_purity_same_snapshot_same_label(self):
        points, _, _ = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        v = np.array([9.7, 10.2])
        assert model.predict(v) == model.predict(v)

    def test_dimension_mismatch(self):
        model = ClusterModel.empty(dim=2, n_clusters=2)
        with pytest.raises(ValueError, match="dimension"):
            model.predict(np.ones(3))


class TestModelQuality:
    def test_perfect_agreement(self):
        assert adjusted_rand_index([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)

    def test_label_permutation_invariance(self):
        truth = [0, 0, 1, 1, 2, 2]
        relabeled = [5, 5, 3, 3, 9, 9]
        assert adjusted_rand_index(relabeled, truth) == pytest.approx(1.0)

    def test_random_labels_score_near_zero(self):
        # Monte-Carlo: random 2-label predictions against balanced classes.
        truth = np.repeat([0, 1], 5000)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            preds = rng.integers(0, 2, size=truth.size)
            assert abs(adjusted_rand_index(preds, truth)) < 0.05

    def test_single_class_degenerate(self):
        model = ClusterModel.from_centroids(np.array([[1.0, 0.0], [0.0, 1.0]]))
        same = [(np.array([1.0, 0.1]), 0), (np.array([1.0, -0.1]), 0)]
        with pytest.warns(RuntimeWarning):
            assert model_quality(model, same) == 1.0
        split = [(np.array([1.0, 0.1]), 0), (np.array([0.1, 1.0]), 0)]
        with pytest.warns(RuntimeWarning):
            assert model_quality(model, split) == 0.0

    def test_well_separated_mixture_recovers_truth(self):
        spec = SyntheticSpec(n_clusters=6, dim=16, samples_per_cluster=100,
                             cluster_spread=1.0, centroid_scale=100.0, rng_seed=21)
        samples = generate_synthetic(spec)
        vectors = np.stack([l2_normalize(s.embedding) for s in samples])
        model = partial_fit(ClusterModel.empty(dim=16, n_clusters=6), vectors)
        labeled = [(s.embedding, int(s.domain_tag.split("-")[1])) for s in samples]
        assert model_quality(model, labeled) >= 0.8

    def test_requires_fitted_model_and_data(self):
        model = ClusterModel.empty(dim=2, n_clusters=2)
        with pytest.raises(ValueError):
            model_quality(model, [(np.ones(2), 0)])
        fitted = ClusterModel.from_centroids(np.eye(2))
        with pytest.raises(ValueError):
            model_quality(fitted, [])


class TestSerialization:
    def test_round_trip_preserves_predictions(self):
        points, _, _ = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        restored = ClusterModel.from_record(model.to_record())
        assert restored.version == model.version
        assert restored.threshold == model.threshold
        rng = np.random.default_rng(6)
        for _ in range(20):
            v = rng.normal(size=2) * 5
            assert restored.predict(v) == model.predict(v)

    def test_round_trip_preserves_leaves(self):
        points, _, _ = _two_blob_points()
        model = partial_fit(ClusterModel.empty(dim=2, n_clusters=2), points)
        restored = ClusterModel.from_record(model.to_record())
        assert restored.total_absorbed() == model.total_absorbed()
        follow_up = partial_fit(restored, points)
        assert follow_up.version == model.version + 1
