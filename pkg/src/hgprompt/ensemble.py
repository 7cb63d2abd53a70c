"""Simplex weights, feature fusion, target-prompt construction, simplex projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_NEG_CLAMP = 1e-12
_SUM_TOL = 1e-10

TARGET_MARKER = "target"


@dataclass(frozen=True)
class SimplexWeights:
    """A convex-combination weight vector: nonnegative, summing to one.

    Values within 1e-12 below zero are clamped to exactly 0 and the vector
    renormalized; anything further outside the simplex is rejected.
    """

    values: np.ndarray

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64).ravel().copy()
        if v.size == 0:
            raise ValueError("weight vector must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("weight vector contains non-finite entries")
        if np.any(v < -_NEG_CLAMP):
            raise ValueError(f"negative weight beyond clamp tolerance: {v.min()}")
        if abs(v.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {v.sum()!r}")
        if np.any(v < 0):
            v = np.clip(v, 0.0, None)
            v = v / v.sum()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def uniform(cls, m: int) -> "SimplexWeights":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def one_hot(cls, m: int, index: int) -> "SimplexWeights":
        v = np.zeros(m)
        v[index] = 1.0
        return cls(v)


@dataclass(frozen=True)
class PromptTensor:
    """A p x d matrix of prompt token embeddings, tagged with its origin."""

    tokens: np.ndarray
    source_id: str

    def __init__(self, tokens, source_id: str):
        t = np.asarray(tokens, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] < 1:
            raise ValueError(f"prompt must be a non-empty 2-d matrix, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("prompt contains non-finite entries")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "tokens", t)
        object.__setattr__(self, "source_id", source_id)

    @property
    def shape(self):
        return self.tokens.shape


def fuse_features(per_source_features, alpha: SimplexWeights) -> np.ndarray:
    """Rowwise convex combination of per-source feature matrices."""
    mats = [np.asarray(f, dtype=np.float64) for f in per_source_features]
    if len(mats) != len(alpha):
        raise ValueError(f"got {len(mats)} feature matrices for {len(alpha)} weights")
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"feature matrix {i} has shape {m.shape}, expected {shape}")
    fused = np.zeros(shape)
    for w, m in zip(alpha.values, mats):
        fused += w * m
    return fused


def build_target_prompt(prompts, alpha: SimplexWeights) -> PromptTensor:
    """Elementwise convex combination of source prompts.

    At a simplex vertex the corresponding source prompt is returned
    bit-for-bit.
    """
    if len(prompts) != len(alpha):
        raise ValueError(f"got {len(prompts)} prompts for {len(alpha)} weights")
    shape = prompts[0].shape
    for p in prompts:
        if p.shape != shape:
            raise ValueError(f"prompt shapes differ: {p.shape} vs {shape}")
    hot = np.flatnonzero(alpha.values == 1.0)
    if hot.size == 1 and np.count_nonzero(alpha.values) == 1:
        return PromptTensor(prompts[hot[0]].tokens, TARGET_MARKER)
    tokens = np.zeros(shape)
    for w, p in zip(alpha.values, prompts):
        tokens += w * p.tokens
    return PromptTensor(tokens, TARGET_MARKER)


def project_to_simplex(v) -> SimplexWeights:
    """Euclidean projection onto the probability simplex, by sort-and-threshold."""
    x = np.asarray(v, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project non-finite values")
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, x.size + 1)
    cond = u - (css - 1.0) / k > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = (css[rho] - 1.0) / (rho + 1)
    w = np.maximum(x - tau, 0.0)
    # Exact renormalization guards against cumulative-sum round-off.
    return SimplexWeights(w / w.sum())
