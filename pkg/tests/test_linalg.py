import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgprompt.linalg import (ConditioningError, InsufficientSamplesError,
                             covariance, ridge_cholesky_inverse,
                             trace_of_product)


def naive_covariance(samples):
    samples = np.asarray(samples, dtype=float)
    n, h = samples.shape
    mean = [sum(samples[i][j] for i in range(n)) / n for j in range(h)]
    out = np.zeros((h, h))
    for i in range(n):
        for a in range(h):
            for b in range(h):
                out[a, b] += (samples[i][a] - mean[a]) * (samples[i][b] - mean[b])
    return out / n


class TestCovariance:
    def test_duplicated_row_gives_zero(self):
        samples = np.array([[1.0, -2.0, 3.0], [1.0, -2.0, 3.0]])
        assert np.array_equal(covariance(samples), np.zeros((3, 3)))

    def test_plus_minus_one_scalar(self):
        np.testing.assert_allclose(covariance(np.array([[1.0], [-1.0]])), [[1.0]], atol=1e-15)

    def test_matches_double_loop_oracle(self, rng):
        samples = rng.standard_normal((50, 4))
        np.testing.assert_allclose(covariance(samples),
                                   naive_covariance(samples), atol=1e-12)

    def test_symmetric_and_psd(self, rng):
        cov = covariance(rng.standard_normal((30, 6)))
        assert np.array_equal(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() > -1e-12

    def test_linear_transform_congruence(self, rng):
        samples = rng.standard_normal((40, 4))
        a = rng.standard_normal((4, 4)) + 2 * np.eye(4)
        sigma = covariance(samples)
        transformed = covariance(samples @ a.T)
        expected = a @ sigma @ a.T
        np.testing.assert_allclose(transformed, expected,
                                   rtol=1e-10, atol=1e-12)

    def test_single_sample_rejected(self):
        with pytest.raises(InsufficientSamplesError):
            covariance(np.array([[1.0, 2.0]]))

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            covariance(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestRidgeCholeskyInverse:
    def test_identity(self):
        np.testing.assert_array_equal(ridge_cholesky_inverse(np.eye(4), 0.0),
                                      np.eye(4))

    def test_scalar_matrix(self):
        np.testing.assert_allclose(ridge_cholesky_inverse(2.0 * np.eye(3), 0.0),
                                   0.5 * np.eye(3), atol=1e-15)

    def test_multiply_back_to_identity(self, rng):
        a = rng.standard_normal((6, 6))
        spd = a @ a.T + 0.5 * np.eye(6)
        inv = ridge_cholesky_inverse(spd, 1e-4)
        product = inv @ (spd + 1e-4 * np.eye(6))
        assert np.linalg.norm(product - np.eye(6)) < 1e-9

    def test_result_symmetric(self, rng):
        a = rng.standard_normal((5, 5))
        inv = ridge_cholesky_inverse(a @ a.T + np.eye(5), 0.0)
        assert np.abs(inv - inv.T).max() < 1e-10

    def test_indefinite_matrix_names_leading_minor(self):
        m = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(ConditioningError) as exc:
            ridge_cholesky_inverse(m, 0.0)
        assert exc.value.leading_minor == 2

    def test_negative_ridge_rejected(self):
        with pytest.raises(ValueError, match="ridge"):
            ridge_cholesky_inverse(np.eye(2), -1e-3)


class TestTraceOfProduct:
    def test_identity_times_arbitrary(self, rng):
        b = rng.standard_normal((3, 3))
        assert trace_of_product(np.eye(3), b) == pytest.approx(np.trace(b))

    def test_identity_pair(self):
        assert trace_of_product(np.eye(4), np.eye(4)) == 4.0

    def test_matches_dense_product_oracle(self, rng):
        a = rng.standard_normal((5, 5))
        b = rng.standard_normal((5, 5))
        assert trace_of_product(a, b) == pytest.approx(np.trace(a @ b),
                                                       abs=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            trace_of_product(np.eye(3), np.eye(4))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_commutes_exactly(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))
        assert trace_of_product(a, b) == trace_of_product(b, a)
