"""Normalized prompt-gradient handling: consensus direction, alignment loss,
its weight-gradient, cosine diagnostics, and the compound-variance trace
identity for frozen backbone parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import SimplexWeights
from .linalg import as_matrix

DEFAULT_DEGENERACY_FLOOR = 1e-8


class VanishingGradientError(ValueError):
    """A raw prompt gradient has (near-)zero norm; carries the source id."""

    def __init__(self, message: str, source_id: str):
        super().__init__(message)
        self.source_id = source_id


class DegenerateEnsembleError(ValueError):
    """The weighted consensus gradient has (near-)zero norm."""


@dataclass(frozen=True)
class PromptGradient:
    """Raw gradient of the target-task loss w.r.t. one source's prompt tokens."""

    source_id: str
    tensor: np.ndarray
    frobenius_norm: float

    def __init__(self, source_id: str, tensor):
        t = as_matrix(tensor, f"gradient for source {source_id!r}")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "source_id", source_id)
        object.__setattr__(self, "tensor", t)
        object.__setattr__(self, "frobenius_norm", float(np.linalg.norm(t)))


@dataclass(frozen=True)
class NormalizedGradientSet:
    """Stack of unit-Frobenius-norm gradient directions sharing one shape."""

    directions: np.ndarray  # (M, p, d)

    def __init__(self, directions):
        d = np.asarray(directions, dtype=np.float64)
        if d.ndim != 3 or d.shape[0] < 1:
            raise ValueError(f"expected (M, p, d) stack, got shape {d.shape}")
        norms = np.linalg.norm(d.reshape(d.shape[0], -1), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must have unit Frobenius norm")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "directions", d)

    def __len__(self) -> int:
        return self.directions.shape[0]

    @property
    def shape(self):
        return self.directions.shape[1:]

    @classmethod
    def from_raw(cls, gradients, floor: float = DEFAULT_DEGENERACY_FLOOR,
                 strict: bool = True) -> "NormalizedGradientSet":
        shape = gradients[0].tensor.shape
        for g in gradients:
            if g.tensor.shape != shape:
                raise ValueError(
                    f"gradient for source {g.source_id!r} has shape "
                    f"{g.tensor.shape}, expected {shape}"
                )
        return cls(np.stack([normalize_gradient(g, floor, strict=strict)
                             for g in gradients]))


@dataclass(frozen=True)
class AlignmentReport:
    loss: float
    cosines: np.ndarray  # per-source cosine to the normalized consensus
    ensemble_norm: float
    degenerate: bool = False


def normalize_gradient(g: PromptGradient, floor: float = DEFAULT_DEGENERACY_FLOOR,
                       strict: bool = True) -> np.ndarray:
    """g / max(||g||_F, floor); in strict mode a sub-floor norm is an error."""
    norm = g.frobenius_norm
    if norm < floor:
        if strict:
            raise VanishingGradientError(
                f"gradient norm {norm} below floor {floor} for source "
                f"{g.source_id!r}", source_id=g.source_id,
            )
        norm = floor
    return g.tensor / norm


def ensemble_gradient(gset: NormalizedGradientSet, alpha) -> np.ndarray:
    """Weighted sum of normalized directions (the collective direction).

    Accepts SimplexWeights or a raw coefficient vector (the latter for
    finite-difference checks).
    """
    a = alpha.values if isinstance(alpha, SimplexWeights) else \
        np.asarray(alpha, dtype=np.float64).ravel()
    if len(gset) != a.size:
        raise ValueError(f"{len(gset)} directions for {a.size} weights")
    # fsum makes the accumulation order-independent, so permuting sources
    # together with the weights leaves the result bit-identical.
    terms = a[:, None, None] * gset.directions
    flat = terms.reshape(a.size, -1)
    out = np.fromiter((math.fsum(flat[:, j]) for j in range(flat.shape[1])),
                      dtype=np.float64, count=flat.shape[1])
    return out.reshape(gset.shape)


def alignment_loss(gset: NormalizedGradientSet, alpha: SimplexWeights,
                   degeneracy_floor: float = DEFAULT_DEGENERACY_FLOOR,
                   strict: bool = True) -> AlignmentReport:
    """Mean deviation of each direction from the normalized consensus.

    loss = (1/M) sum_i (1 - <g_i, consensus>); in guarded (non-strict) mode a
    degenerate consensus norm is floored and flagged instead of raised.
    """
    g_alpha = ensemble_gradient(gset, alpha)
    norm = float(np.linalg.norm(g_alpha))
    degenerate = norm < degeneracy_floor
    if degenerate:
        if strict:
            raise DegenerateEnsembleError(
                f"consensus gradient norm {norm} below floor {degeneracy_floor}"
            )
        norm = degeneracy_floor
    consensus = g_alpha / norm
    cosines = np.einsum("ipd,pd->i", gset.directions, consensus)
    loss = math.fsum(1.0 - cosines) / len(gset)
    return AlignmentReport(loss=loss, cosines=cosines,
                           ensemble_norm=float(np.linalg.norm(g_alpha)),
                           degenerate=degenerate)


def alignment_loss_gradient(gset: NormalizedGradientSet, alpha: SimplexWeights,
                            degeneracy_floor: float = DEFAULT_DEGENERACY_FLOOR,
                            strict: bool = True) -> np.ndarray:
    """Analytic d(loss)/d(alpha), by the chain rule through the consensus
    normalization: with mbar the plain mean of directions,

        dL/d alpha_k = -(<mbar, g_k> - <mbar, consensus><consensus, g_k>) / ||g_alpha||
    """
    g_alpha = ensemble_gradient(gset, alpha)
    norm = float(np.linalg.norm(g_alpha))
    if norm < degeneracy_floor:
        if strict:
            raise DegenerateEnsembleError(
                f"consensus gradient norm {norm} below floor {degeneracy_floor}"
            )
        norm = degeneracy_floor
    consensus = g_alpha / norm
    mbar = gset.directions.mean(axis=0)
    m_dot_k = np.einsum("ipd,pd->i", gset.directions, mbar)
    m_dot_c = float(np.sum(mbar * consensus))
    c_dot_k = np.einsum("ipd,pd->i", gset.directions, consensus)
    return -(m_dot_k - m_dot_c * c_dot_k) / norm


def cosine_similarity_matrix(gset: NormalizedGradientSet) -> np.ndarray:
    """Pairwise Frobenius inner products of the normalized directions."""
    flat = gset.directions.reshape(len(gset), -1)
    sim = flat @ flat.T
    return 0.5 * (sim + sim.T)


def compound_variance_trace(compound_gradients):
    """Trace of the gradient variance over (backbone, prompt) blocks.

    Input: list of (theta_block, prompt_block) matrix pairs, one per source.
    Returns (full_trace, prompt_trace), the summed per-coordinate population
    variances over all coordinates and over prompt coordinates only. With the
    backbone frozen (identical theta blocks) the two are equal exactly.
    """
    if len(compound_gradients) < 2:
        raise ValueError("need at least 2 compound gradients")
    thetas = np.stack([as_matrix(t, "theta_block") for t, _ in compound_gradients])
    prompts = np.stack([as_matrix(p, "prompt_block") for _, p in compound_gradients])
    theta_var = np.var(thetas, axis=0)
    prompt_var = np.var(prompts, axis=0)
    prompt_trace = float(np.sum(prompt_var))
    full_trace = float(np.sum(theta_var)) + prompt_trace
    return full_trace, prompt_trace
