"""H-score of fused prompt-conditioned features against target labels.

The score is tr(cov(fused)^-1 cov(class-conditional means)). Because fusion is
linear in the weights, both covariance operands are quadratic forms in alpha;
the cross-covariance cache precomputes the block coefficients once per bundle
so that each evaluation costs O(M^2 h^2 + h^3) regardless of sample count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import SimplexWeights
from .linalg import as_matrix, ridge_cholesky_inverse, trace_of_product


class InvalidLabelsError(ValueError):
    """Raised for out-of-range labels or empty classes."""


def _coefficients(alpha) -> np.ndarray:
    if isinstance(alpha, SimplexWeights):
        return alpha.values
    return np.asarray(alpha, dtype=np.float64).ravel()


@dataclass(frozen=True)
class LabeledFeatures:
    """Feature matrix [N x h] with integer class labels in 0..C-1."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __init__(self, features, labels, class_count: int):
        f = as_matrix(features, "features")
        y = np.asarray(labels, dtype=np.int64).ravel()
        if f.shape[0] != y.size:
            raise ValueError(f"{f.shape[0]} feature rows but {y.size} labels")
        if f.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        if class_count < 2:
            raise ValueError("need at least 2 classes")
        if y.min() < 0 or y.max() >= class_count:
            raise InvalidLabelsError(
                f"labels must lie in 0..{class_count - 1}, got range "
                f"[{y.min()}, {y.max()}]"
            )
        counts = np.bincount(y, minlength=class_count)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise InvalidLabelsError(f"empty classes: {empty.tolist()}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_count", class_count)

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class CrossCovarianceCache:
    """Quadratic-in-alpha decomposition of the two covariance operands.

    total_blocks[i, j] is the cross-covariance of centered source-i and
    source-j features; between_blocks[i, j] the class-prior-weighted
    cross-covariance of their conditional means. For simplex alpha,
    sum_ij alpha_i alpha_j total_blocks[i, j] equals the covariance of the
    explicitly fused features.
    """

    total_blocks: np.ndarray  # (M, M, h, h)
    between_blocks: np.ndarray  # (M, M, h, h)
    source_count: int
    feature_dim: int

    def assemble(self, alpha):
        """Return (total, between) covariance matrices at the given weights.

        Accepts SimplexWeights or any raw coefficient vector; the quadratic
        forms are defined for arbitrary coefficients, which finite-difference
        checks rely on.
        """
        a = _coefficients(alpha)
        if a.size != self.source_count:
            raise ValueError(
                f"alpha has {a.size} entries for {self.source_count} sources"
            )
        total = np.einsum("i,j,ijab->ab", a, a, self.total_blocks)
        between = np.einsum("i,j,ijab->ab", a, a, self.between_blocks)
        return 0.5 * (total + total.T), 0.5 * (between + between.T)

    def directional_blocks(self, alpha, k: int):
        """d/d alpha_k of each operand: sum_j alpha_j (X_kj + X_jk)."""
        a = _coefficients(alpha)
        s_t = np.einsum("j,jab->ab", a,
                        self.total_blocks[k] + self.total_blocks[:, k])
        s_b = np.einsum("j,jab->ab", a,
                        self.between_blocks[k] + self.between_blocks[:, k])
        return s_t, s_b


@dataclass(frozen=True)
class HScoreReport:
    value: float
    total: np.ndarray
    between: np.ndarray
    ridge_applied: float


def class_conditional_means(lf: LabeledFeatures):
    """Per-class feature means and empirical class priors.

    Returns (means [C x h], priors [C]); priors sum to 1.
    """
    c = lf.class_count
    n, h = lf.features.shape
    means = np.zeros((c, h))
    priors = np.zeros(c)
    for y in range(c):
        mask = lf.labels == y
        means[y] = lf.features[mask].mean(axis=0)
        priors[y] = mask.sum() / n
    return means, priors


def build_cross_covariance_cache(sources) -> CrossCovarianceCache:
    """Precompute the quadratic block coefficients for a list of sources.

    All sources must share sample count, feature dimension, and the exact
    label vector.
    """
    if not sources:
        raise ValueError("need at least one source")
    ref = sources[0]
    for i, s in enumerate(sources):
        if s.features.shape != ref.features.shape:
            raise ValueError(
                f"source {i} features have shape {s.features.shape}, "
                f"expected {ref.features.shape}"
            )
        if not np.array_equal(s.labels, ref.labels):
            raise ValueError(f"source {i} labels differ from source 0")
    m = len(sources)
    n, h = ref.features.shape

    centered = np.stack([s.features - s.features.mean(axis=0) for s in sources])
    total = np.einsum("ina,jnb->ijab", centered, centered) / n

    _, priors = class_conditional_means(ref)
    grand = np.stack([s.features.mean(axis=0) for s in sources])
    cmeans = np.stack([class_conditional_means(s)[0] for s in sources])  # (M, C, h)
    dev = cmeans - grand[:, None, :]
    between = np.einsum("y,iya,jyb->ijab", priors, dev, dev)

    return CrossCovarianceCache(
        total_blocks=total,
        between_blocks=between,
        source_count=m,
        feature_dim=h,
    )


def h_score(cache: CrossCovarianceCache, alpha: SimplexWeights,
            ridge: float = 0.0) -> HScoreReport:
    """tr((total + ridge*I)^-1 between) at the given fusion weights."""
    total, between = cache.assemble(alpha)
    inv = ridge_cholesky_inverse(total, ridge)
    value = trace_of_product(inv, between)
    return HScoreReport(value=value, total=total, between=between,
                        ridge_applied=float(ridge))


def h_score_gradient(cache: CrossCovarianceCache, alpha: SimplexWeights,
                     ridge: float = 0.0) -> np.ndarray:
    """Analytic gradient of h_score with respect to the fusion weights.

    d/d alpha_k = tr(T^-1 S_b^k) - tr(T^-1 S_t^k T^-1 B) with T the ridged
    total covariance and S_x^k the directional blocks.
    """
    total, between = cache.assemble(alpha)
    inv = ridge_cholesky_inverse(total, ridge)
    inner = inv @ between @ inv
    grad = np.empty(cache.source_count)
    for k in range(cache.source_count):
        s_t, s_b = cache.directional_blocks(alpha, k)
        grad[k] = trace_of_product(inv, s_b) - trace_of_product(s_t, inner)
    return grad


def auto_ridge(cache: CrossCovarianceCache, alpha: SimplexWeights | None = None,
               scale: float = 1e-4) -> float:
    """Scale-adaptive ridge: scale * trace(total) / h at the given weights.

    Defaults to uniform weights so that one ridge value can be frozen for a
    whole optimization run.
    """
    if alpha is None:
        alpha = SimplexWeights.uniform(cache.source_count)
    total, _ = cache.assemble(alpha)
    return scale * float(np.trace(total)) / cache.feature_dim
