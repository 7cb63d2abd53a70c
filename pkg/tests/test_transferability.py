import numpy as np
import pytest

from hgprompt import (LabeledFeatures, SimplexWeights,
                      build_cross_covariance_cache, class_conditional_means,
                      covariance, fuse_features, h_score, h_score_gradient)
from hgprompt.transferability import InvalidLabelsError

from helpers import central_difference, random_simplex, random_sources


def hscore_on_features(features, labels, c, ridge):
    """Direct Eq.-style computation on explicit features (fuse-then-score)."""
    total = covariance(features)
    means, priors = class_conditional_means(
        LabeledFeatures(features, labels, c))
    grand = features.mean(axis=0)
    dev = means - grand
    between = (dev.T * priors) @ dev
    inv = np.linalg.inv(total + ridge * np.eye(total.shape[0]))
    return float(np.trace(inv @ between))


class TestClassConditionalMeans:
    def test_one_hot_embedding(self):
        labels = np.array([0, 1, 2, 0, 1, 2])
        features = np.eye(3)[labels]
        lf = LabeledFeatures(features, labels, 3)
        means, priors = class_conditional_means(lf)
        np.testing.assert_array_equal(means, np.eye(3))
        np.testing.assert_allclose(priors, np.full(3, 1 / 3))

    def test_identical_features(self):
        v = np.array([2.0, -1.0, 0.5])
        lf = LabeledFeatures(np.tile(v, (6, 1)), np.array([0, 0, 1, 1, 2, 2]), 3)
        means, _ = class_conditional_means(lf)
        np.testing.assert_allclose(means, np.tile(v, (3, 1)), atol=1e-15)

    def test_matches_filter_and_average_oracle(self, rng):
        labels = np.concatenate([np.arange(4), rng.integers(0, 4, 36)])
        features = rng.standard_normal((40, 3))
        lf = LabeledFeatures(features, labels, 4)
        means, priors = class_conditional_means(lf)
        for y in range(4):
            rows = [features[i] for i in range(40) if labels[i] == y]
            np.testing.assert_allclose(means[y], np.mean(rows, axis=0),
                                       atol=1e-12)
            assert priors[y] == pytest.approx(len(rows) / 40)
        assert priors.sum() == pytest.approx(1.0)

    def test_empty_class_rejected(self):
        with pytest.raises(InvalidLabelsError, match="empty"):
            LabeledFeatures(np.zeros((4, 2)), np.array([0, 0, 1, 1]), 3)

    def test_out_of_range_label_rejected(self):
        with pytest.raises(InvalidLabelsError):
            LabeledFeatures(np.zeros((4, 2)), np.array([0, 1, 2, 3]), 3)


class TestCrossCovarianceCache:
    def test_single_source_total_block_is_covariance(self, rng):
        sources, _ = random_sources(rng, m=1)
        cache = build_cross_covariance_cache(sources)
        np.testing.assert_allclose(cache.total_blocks[0, 0],
                                   covariance(sources[0].features), atol=1e-12)

    def test_identical_sources_share_blocks(self, rng):
        src, labels = random_sources(rng, m=1)
        twin = LabeledFeatures(src[0].features, labels, src[0].class_count)
        cache = build_cross_covariance_cache([src[0], twin])
        for i in range(2):
            for j in range(2):
                np.testing.assert_allclose(cache.total_blocks[i, j],
                                           cache.total_blocks[0, 0], atol=1e-12)
                np.testing.assert_allclose(cache.between_blocks[i, j],
                                           cache.between_blocks[0, 0], atol=1e-12)

    def test_block_transpose_symmetry(self, rng):
        cache = build_cross_covariance_cache(random_sources(rng, m=3)[0])
        for i in range(3):
            for j in range(3):
                np.testing.assert_allclose(cache.total_blocks[j, i],
                                           cache.total_blocks[i, j].T,
                                           atol=1e-12)
                np.testing.assert_allclose(cache.between_blocks[j, i],
                                           cache.between_blocks[i, j].T,
                                           atol=1e-12)

    def test_quadratic_form_matches_fused_covariance(self, rng):
        sources, _ = random_sources(rng, m=2)
        cache = build_cross_covariance_cache(sources)
        for _ in range(10):
            alpha = random_simplex(rng, 2)
            fused = fuse_features([s.features for s in sources], alpha)
            total, _ = cache.assemble(alpha)
            np.testing.assert_allclose(total, covariance(fused), atol=1e-10)

    def test_label_mismatch_rejected(self, rng):
        sources, labels = random_sources(rng, m=2)
        shuffled = labels.copy()
        shuffled[:2] = shuffled[:2][::-1]
        bad = LabeledFeatures(sources[1].features, shuffled,
                              sources[1].class_count)
        with pytest.raises(ValueError, match="labels"):
            build_cross_covariance_cache([sources[0], bad])


class TestHScore:
    def test_label_independent_features_score_zero(self, rng):
        # Every class has identical conditional mean: features depend on the
        # sample index pattern, labels assigned so class means coincide.
        block = rng.standard_normal((10, 4))
        features = np.vstack([block, block])
        labels = np.array([0] * 10 + [1] * 10)
        lf = LabeledFeatures(features, labels, 2)
        cache = build_cross_covariance_cache([lf])
        report = h_score(cache, SimplexWeights([1.0]), ridge=1e-8)
        assert abs(report.value) < 1e-10

    def test_scalar_hand_computation(self):
        lf = LabeledFeatures(np.array([[1.0], [1.0], [-1.0], [-1.0]]),
                             np.array([0, 0, 1, 1]), 2)
        cache = build_cross_covariance_cache([lf])
        report = h_score(cache, SimplexWeights([1.0]), ridge=0.0)
        assert report.value == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(report.total, [[1.0]], atol=1e-15)
        np.testing.assert_allclose(report.between, [[1.0]], atol=1e-15)

    def test_matches_fuse_then_score_oracle(self, rng):
        sources, labels = random_sources(rng, m=2, n=60, h=4, c=3)
        cache = build_cross_covariance_cache(sources)
        alpha = random_simplex(rng, 2)
        ridge = 1e-6
        via_cache = h_score(cache, alpha, ridge).value
        fused = fuse_features([s.features for s in sources], alpha)
        direct = hscore_on_features(fused, labels, 3, ridge)
        assert via_cache == pytest.approx(direct, abs=1e-9)

    def test_nonnegative_on_simplex(self, rng):
        sources, _ = random_sources(rng, m=3)
        cache = build_cross_covariance_cache(sources)
        for _ in range(20):
            alpha = random_simplex(rng, 3)
            assert h_score(cache, alpha, 1e-6).value >= -1e-10

    def test_linear_invariance(self, rng):
        sources, labels = random_sources(rng, m=2, n=80, h=4, c=3)
        cache = build_cross_covariance_cache(sources)
        alpha = random_simplex(rng, 2)
        base = h_score(cache, alpha, ridge=0.0).value
        a = rng.standard_normal((4, 4)) + 2 * np.eye(4)
        mapped = [LabeledFeatures(s.features @ a.T, labels, 3) for s in sources]
        mapped_cache = build_cross_covariance_cache(mapped)
        mapped_value = h_score(mapped_cache, alpha, ridge=0.0).value
        assert abs(mapped_value - base) / abs(base) < 1e-8


class TestHScoreGradient:
    def test_identical_sources_symmetric_gradient(self, rng):
        src, labels = random_sources(rng, m=1)
        twin = LabeledFeatures(src[0].features, labels, src[0].class_count)
        cache = build_cross_covariance_cache([src[0], twin])
        grad = h_score_gradient(cache, SimplexWeights([0.5, 0.5]), 1e-6)
        assert abs(grad[0] - grad[1]) < 1e-10

    def test_single_source_matches_finite_difference(self, rng):
        cache = build_cross_covariance_cache(random_sources(rng, m=1)[0])
        ridge = 1e-4
        grad = h_score_gradient(cache, SimplexWeights([1.0]), ridge)
        fd = central_difference(
            lambda v: h_score(cache, v, ridge).value, np.array([1.0]))
        assert grad[0] == pytest.approx(fd[0], rel=1e-5, abs=1e-10)

    def test_random_instance_matches_finite_difference(self, rng):
        cache = build_cross_covariance_cache(random_sources(rng, m=3)[0])
        alpha = random_simplex(rng, 3)
        ridge = 1e-4
        grad = h_score_gradient(cache, alpha, ridge)
        fd = central_difference(
            lambda v: h_score(cache, v, ridge).value, alpha.values)
        np.testing.assert_allclose(grad, fd, rtol=1e-5)
