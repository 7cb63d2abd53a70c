"""Dense linear-algebra primitives: covariance, ridge-regularized inversion, traces.

Everything here is pure, deterministic, and float64. Inputs are validated on
entry; all downstream modules rely on these checks.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class InsufficientSamplesError(ValueError):
    """Raised when a covariance is requested from fewer than two samples."""


class ConditioningError(ValueError):
    """Raised when a matrix that must be positive definite is not.

    ``leading_minor`` is the 1-based index of the first non-positive-definite
    leading minor reported by the factorization.
    """

    def __init__(self, message: str, leading_minor: int):
        super().__init__(message)
        self.leading_minor = leading_minor


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, two-dimensional float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def covariance(samples) -> np.ndarray:
    """Population covariance (divide by N) of row-stacked samples.

    Returns (1/N) * sum_n (x_n - mean)(x_n - mean)^T, explicitly symmetrized
    to cancel accumulation asymmetry.
    """
    x = as_matrix(samples, "samples")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / n
    return 0.5 * (cov + cov.T)


def ridge_cholesky_inverse(m, ridge: float = 0.0) -> np.ndarray:
    """Invert (m + ridge*I) through a Cholesky factorization.

    ``m`` must be symmetric and ``m + ridge*I`` positive definite; otherwise a
    ConditioningError naming the offending leading minor is raised.
    """
    mat = as_matrix(m, "m")
    h = mat.shape[0]
    if mat.shape[1] != h:
        raise ValueError(f"matrix must be square, got {mat.shape}")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    shifted = mat + ridge * np.eye(h)
    try:
        chol, lower = scipy.linalg.cho_factor(shifted, lower=True)
    except np.linalg.LinAlgError as exc:
        # scipy reports "%d-th leading minor ... not positive definite"
        minor = _leading_minor_from_error(exc)
        raise ConditioningError(
            f"matrix + {ridge}*I is not positive definite "
            f"(leading minor {minor})",
            leading_minor=minor,
        ) from exc
    inv = scipy.linalg.cho_solve((chol, lower), np.eye(h))
    return 0.5 * (inv + inv.T)


def _leading_minor_from_error(exc: Exception) -> int:
    msg = str(exc)
    for token in msg.replace("-", " ").split():
        if token.isdigit():
            return int(token)
    return 0


def trace_of_product(a, b) -> float:
    """tr(a @ b) = sum_ij a_ij * b_ji, without forming the full product.

    Computed through the symmetrized product matrix so that
    trace_of_product(a, b) == trace_of_product(b, a) bit-for-bit.
    """
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape != bm.shape or am.shape[0] != am.shape[1]:
        raise ValueError(f"need matching square matrices, got {am.shape} and {bm.shape}")
    p = am * bm.T
    return float(0.5 * np.sum(p + p.T))
