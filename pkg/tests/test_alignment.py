import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgprompt import (DegenerateEnsembleError, NormalizedGradientSet,
                      PromptGradient, SimplexWeights, VanishingGradientError,
                      alignment_loss, alignment_loss_gradient,
                      compound_variance_trace, cosine_similarity_matrix,
                      ensemble_gradient, normalize_gradient)

from helpers import central_difference, random_simplex, random_unit_directions


def orthogonal_pair():
    g0 = np.zeros((2, 2))
    g0[0, 0] = 1.0
    g1 = np.zeros((2, 2))
    g1[1, 1] = 1.0
    return NormalizedGradientSet(np.stack([g0, g1]))


class TestNormalizeGradient:
    def test_single_entry(self):
        g = PromptGradient("s", np.array([[3.0]]))
        np.testing.assert_array_equal(normalize_gradient(g), [[1.0]])

    def test_idempotent_on_unit_norm(self, rng):
        raw = rng.standard_normal((3, 4))
        unit = raw / np.linalg.norm(raw)
        out = normalize_gradient(PromptGradient("s", unit))
        np.testing.assert_allclose(out, unit, atol=1e-15)

    def test_zero_tensor_strict_error_carries_source(self):
        g = PromptGradient("src-7", np.zeros((2, 3)))
        with pytest.raises(VanishingGradientError) as exc:
            normalize_gradient(g, floor=1e-8, strict=True)
        assert exc.value.source_id == "src-7"

    def test_guarded_mode_floors(self):
        g = PromptGradient("s", np.zeros((2, 2)))
        out = normalize_gradient(g, floor=1e-8, strict=False)
        np.testing.assert_array_equal(out, np.zeros((2, 2)))

    def test_cached_norm_matches(self, rng):
        t = rng.standard_normal((4, 5))
        g = PromptGradient("s", t)
        assert g.frobenius_norm == pytest.approx(np.linalg.norm(t), abs=1e-12)


class TestEnsembleGradient:
    def test_single_source(self, rng):
        gset = random_unit_directions(rng, m=1)
        out = ensemble_gradient(gset, SimplexWeights([1.0]))
        np.testing.assert_array_equal(out, gset.directions[0])

    def test_antipodal_cancellation(self, rng):
        g = rng.standard_normal((3, 3))
        g /= np.linalg.norm(g)
        gset = NormalizedGradientSet(np.stack([g, -g]))
        out = ensemble_gradient(gset, SimplexWeights([0.5, 0.5]))
        assert np.abs(out).max() < 1e-15

    def test_matches_weighted_sum_loop(self, rng):
        gset = random_unit_directions(rng, m=3)
        alpha = SimplexWeights([0.2, 0.3, 0.5])
        expected = np.zeros(gset.shape)
        for w, d in zip(alpha.values, gset.directions):
            expected += w * d
        np.testing.assert_allclose(ensemble_gradient(gset, alpha), expected,
                                   atol=1e-12)


class TestAlignmentLoss:
    def test_identical_directions_zero_loss(self, rng):
        g = rng.standard_normal((3, 4))
        g /= np.linalg.norm(g)
        gset = NormalizedGradientSet(np.stack([g, g, g]))
        report = alignment_loss(gset, SimplexWeights.uniform(3))
        assert abs(report.loss) < 1e-12
        np.testing.assert_allclose(report.cosines, 1.0, atol=1e-12)

    def test_orthogonal_pair_value(self):
        report = alignment_loss(orthogonal_pair(), SimplexWeights([0.5, 0.5]))
        assert report.loss == pytest.approx(1.0 - 1.0 / np.sqrt(2), abs=1e-12)

    def test_two_closed_forms_agree(self, rng):
        gset = random_unit_directions(rng, m=4)
        alpha = random_simplex(rng, 4)
        report = alignment_loss(gset, alpha)
        g_alpha = ensemble_gradient(gset, alpha)
        consensus = g_alpha / np.linalg.norm(g_alpha)
        squared_form = float(np.mean([
            np.sum((d - consensus) ** 2) for d in gset.directions
        ]) / 2.0)
        assert abs(report.loss - squared_form) < 1e-12

    def test_bounds(self, rng):
        for _ in range(20):
            gset = random_unit_directions(rng, m=3)
            report = alignment_loss(gset, random_simplex(rng, 3))
            assert -1e-12 <= report.loss <= 2.0 + 1e-12

    def test_positive_scale_invariance(self, rng):
        raw = [PromptGradient(str(i), rng.standard_normal((3, 4)))
               for i in range(3)]
        alpha = random_simplex(rng, 3)
        base = alignment_loss(NormalizedGradientSet.from_raw(raw), alpha).loss
        scales = rng.uniform(0.1, 10.0, 3)
        scaled = [PromptGradient(str(i), s * g.tensor)
                  for i, (s, g) in enumerate(zip(scales, raw))]
        rescored = alignment_loss(NormalizedGradientSet.from_raw(scaled),
                                  alpha).loss
        assert abs(base - rescored) < 1e-12

    def test_permutation_equivariance(self, rng):
        gset = random_unit_directions(rng, m=4)
        alpha = random_simplex(rng, 4)
        perm = np.array([2, 0, 3, 1])
        permuted = NormalizedGradientSet(gset.directions[perm])
        permuted_alpha = SimplexWeights(alpha.values[perm])
        assert alignment_loss(gset, alpha).loss == \
            alignment_loss(permuted, permuted_alpha).loss

    def test_degenerate_strict_raises(self, rng):
        g = rng.standard_normal((2, 2))
        g /= np.linalg.norm(g)
        gset = NormalizedGradientSet(np.stack([g, -g]))
        with pytest.raises(DegenerateEnsembleError):
            alignment_loss(gset, SimplexWeights([0.5, 0.5]), strict=True)

    def test_degenerate_guarded_flags(self, rng):
        g = rng.standard_normal((2, 2))
        g /= np.linalg.norm(g)
        gset = NormalizedGradientSet(np.stack([g, -g]))
        report = alignment_loss(gset, SimplexWeights([0.5, 0.5]), strict=False)
        assert report.degenerate


class TestAlignmentLossGradient:
    def test_identical_directions_zero_gradient(self, rng):
        g = rng.standard_normal((3, 4))
        g /= np.linalg.norm(g)
        gset = NormalizedGradientSet(np.stack([g, g, g]))
        grad = alignment_loss_gradient(gset, SimplexWeights.uniform(3))
        assert np.abs(grad).max() < 1e-12

    def test_orthogonal_pair_matches_finite_difference(self):
        gset = orthogonal_pair()
        alpha = SimplexWeights([0.5, 0.5])
        grad = alignment_loss_gradient(gset, alpha)
        assert grad[0] == pytest.approx(grad[1], abs=1e-12)
        fd = central_difference(
            lambda v: alignment_loss(gset, v).loss, alpha.values)
        np.testing.assert_allclose(grad, fd, atol=1e-6)

    def test_random_matches_finite_difference(self, rng):
        gset = random_unit_directions(rng, m=3)
        alpha = random_simplex(rng, 3)
        grad = alignment_loss_gradient(gset, alpha)
        fd = central_difference(
            lambda v: alignment_loss(gset, v).loss, alpha.values)
        np.testing.assert_allclose(grad, fd, rtol=1e-5)


class TestCosineSimilarityMatrix:
    def test_unit_diagonal(self, rng):
        sim = cosine_similarity_matrix(random_unit_directions(rng, m=4))
        np.testing.assert_allclose(np.diag(sim), 1.0, atol=1e-12)

    def test_orthogonal_pair_off_diagonal_zero(self):
        sim = cosine_similarity_matrix(orthogonal_pair())
        assert abs(sim[0, 1]) < 1e-12

    def test_symmetric_and_matches_pairwise_loop(self, rng):
        gset = random_unit_directions(rng, m=5)
        sim = cosine_similarity_matrix(gset)
        np.testing.assert_array_equal(sim, sim.T)
        for i in range(5):
            for j in range(5):
                expected = float(np.sum(gset.directions[i] * gset.directions[j]))
                assert sim[i, j] == pytest.approx(expected, abs=1e-12)
        assert sim.min() >= -1 - 1e-12 and sim.max() <= 1 + 1e-12


class TestCompoundVarianceTrace:
    def test_frozen_backbone_identity(self, rng):
        theta = rng.standard_normal((3, 3))
        pairs = [(theta, rng.standard_normal((2, 4))) for _ in range(5)]
        full, prompt = compound_variance_trace(pairs)
        assert abs(full - prompt) < 1e-12

    def test_all_identical_gives_zero(self, rng):
        theta = rng.standard_normal((3, 3))
        p = rng.standard_normal((2, 4))
        full, prompt = compound_variance_trace([(theta, p)] * 4)
        assert full == 0.0 and prompt == 0.0

    def test_matches_coordinatewise_oracle(self, rng):
        pairs = [(rng.standard_normal((2, 3)), rng.standard_normal((3, 2)))
                 for _ in range(6)]
        full, prompt = compound_variance_trace(pairs)
        stacked = np.array([
            np.concatenate([t.ravel(), p.ravel()]) for t, p in pairs
        ])
        oracle = 0.0
        for col in range(stacked.shape[1]):
            v = stacked[:, col]
            oracle += np.mean((v - v.mean()) ** 2)
        assert full == pytest.approx(oracle, abs=1e-10)

    def test_too_few_rejected(self, rng):
        with pytest.raises(ValueError):
            compound_variance_trace([(np.eye(2), np.eye(2))])


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.integers(min_value=2, max_value=6))
def test_two_form_equivalence_property(seed, m):
    rng = np.random.default_rng(seed)
    gset = random_unit_directions(rng, m=m, p=2, d=4)
    alpha = SimplexWeights(rng.dirichlet(np.ones(m)))
    g_alpha = ensemble_gradient(gset, alpha)
    if np.linalg.norm(g_alpha) < 1e-3:
        return
    report = alignment_loss(gset, alpha)
    consensus = g_alpha / np.linalg.norm(g_alpha)
    squared_form = float(np.mean([
        np.sum((d - consensus) ** 2) for d in gset.directions
    ]) / 2.0)
    assert abs(report.loss - squared_form) < 1e-12
