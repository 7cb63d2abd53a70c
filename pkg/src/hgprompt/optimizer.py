"""Full-batch optimization of the combined objective over the simplex.

The objective is L(alpha) = -H(alpha) + lambda * L_align(alpha), minimized by
projected gradient descent with backtracking step halving, multiple seeded
restarts, and per-epoch tracing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import (NormalizedGradientSet, PromptGradient, alignment_loss,
                        alignment_loss_gradient)
from .bundle import PromptBundle
from .ensemble import SimplexWeights, project_to_simplex
from .transferability import (CrossCovarianceCache, LabeledFeatures,
                              auto_ridge, build_cross_covariance_cache,
                              h_score, h_score_gradient)

MAX_STEP_HALVINGS = 20


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    lam: float = 1.0
    epochs: int = 200
    ridge: float | None = None  # None = scale-adaptive, frozen at uniform weights
    restarts: int = 5
    seed: int = 0
    degeneracy_floor: float = 1e-8
    convergence_tol: float = 1e-7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.epochs < 1 or self.restarts < 1:
            raise ValueError("epochs and restarts must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    alpha: np.ndarray
    h_value: float
    align_value: float
    loss: float


@dataclass(frozen=True)
class OptimizationTrace:
    records: tuple  # EpochRecord per accepted state, epoch 0 = initialization
    restart_index: int
    final_alpha: SimplexWeights
    termination: str  # "converged" | "max-epochs"
    ridge_applied: float
    lam: float

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss


def _problem_from_bundle(bundle: PromptBundle):
    sources = [
        LabeledFeatures(f, bundle.labels, bundle.class_count)
        for f in bundle.features
    ]
    cache = build_cross_covariance_cache(sources)
    raw = [PromptGradient(str(i), g) for i, g in enumerate(bundle.gradients)]
    gset = NormalizedGradientSet.from_raw(raw)
    return cache, gset


def total_loss(cache: CrossCovarianceCache, gset: NormalizedGradientSet,
               alpha: SimplexWeights, cfg: OptimizerConfig,
               ridge: float | None = None):
    """-H + lambda * L_align; returns (loss, h_value, align_value).

    The optimizer runs the alignment term in guarded mode so that a transient
    degenerate consensus cannot abort a run.
    """
    if ridge is None:
        ridge = cfg.ridge if cfg.ridge is not None else auto_ridge(cache)
    h = h_score(cache, alpha, ridge).value
    align = alignment_loss(gset, alpha, cfg.degeneracy_floor, strict=False).loss
    return -h + cfg.lam * align, h, align


def total_loss_gradient(cache: CrossCovarianceCache, gset: NormalizedGradientSet,
                        alpha: SimplexWeights, cfg: OptimizerConfig,
                        ridge: float | None = None) -> np.ndarray:
    """-grad H + lambda * grad L_align, both analytic."""
    if ridge is None:
        ridge = cfg.ridge if cfg.ridge is not None else auto_ridge(cache)
    grad = -h_score_gradient(cache, alpha, ridge)
    if cfg.lam != 0.0:
        grad = grad + cfg.lam * alignment_loss_gradient(
            gset, alpha, cfg.degeneracy_floor, strict=False)
    return grad


def _run_restart(cache, gset, alpha: SimplexWeights, cfg: OptimizerConfig,
                 ridge: float):
    loss, h, align = total_loss(cache, gset, alpha, cfg, ridge)
    records = [EpochRecord(0, alpha.values.copy(), h, align, loss)]
    termination = "max-epochs"
    for epoch in range(1, cfg.epochs + 1):
        grad = total_loss_gradient(cache, gset, alpha, cfg, ridge)
        step = cfg.learning_rate
        accepted = None
        for _ in range(MAX_STEP_HALVINGS + 1):
            candidate = project_to_simplex(alpha.values - step * grad)
            cand_loss, cand_h, cand_align = total_loss(
                cache, gset, candidate, cfg, ridge)
            if cand_loss <= loss:
                accepted = (candidate, cand_loss, cand_h, cand_align)
                break
            step *= 0.5
        if accepted is None:
            # No descent direction left at machine scale: treat as converged.
            termination = "converged"
            break
        candidate, cand_loss, cand_h, cand_align = accepted
        delta = float(np.max(np.abs(candidate.values - alpha.values)))
        alpha, loss, h, align = candidate, cand_loss, cand_h, cand_align
        records.append(EpochRecord(epoch, alpha.values.copy(), h, align, loss))
        if delta < cfg.convergence_tol:
            termination = "converged"
            break
    return records, alpha, termination


def optimize_weights(bundle: PromptBundle,
                     cfg: OptimizerConfig = OptimizerConfig()) -> OptimizationTrace:
    """Projected gradient descent over the simplex with seeded restarts.

    Restart 0 starts from uniform weights; restarts 1..R-1 from seeded
    Dirichlet(1) samples. The restart with the lowest final loss wins, ties
    broken by lowest restart index. Deterministic given (bundle, cfg).
    """
    cache, gset = _problem_from_bundle(bundle)
    ridge = cfg.ridge if cfg.ridge is not None else auto_ridge(cache)
    m = cache.source_count

    best = None
    for r in range(cfg.restarts):
        if r == 0:
            alpha0 = SimplexWeights.uniform(m)
        else:
            rng = np.random.default_rng([cfg.seed, r])
            alpha0 = project_to_simplex(rng.dirichlet(np.ones(m)))
        records, final_alpha, termination = _run_restart(
            cache, gset, alpha0, cfg, ridge)
        trace = OptimizationTrace(
            records=tuple(records),
            restart_index=r,
            final_alpha=final_alpha,
            termination=termination,
            ridge_applied=ridge,
            lam=cfg.lam,
        )
        # Require an improvement beyond rounding noise so that effectively
        # tied restarts resolve to the lowest restart index.
        if best is None or trace.final_loss < best.final_loss - 1e-12 * max(
                1.0, abs(best.final_loss)):
            best = trace
    return best


def sweep_lambda(bundle: PromptBundle, cfg: OptimizerConfig, lambdas):
    """One independent optimization per lambda, same seed discipline.

    Returns [(lambda, OptimizationTrace | None, error_message | None)] in the
    input order; failed entries carry their error and the sweep continues.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("lambda list must be non-empty")
    for lam in lambdas:
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
    out = []
    for lam in lambdas:
        try:
            trace = optimize_weights(bundle, replace(cfg, lam=float(lam)))
            out.append((float(lam), trace, None))
        except (np.linalg.LinAlgError, ValueError) as exc:
            out.append((float(lam), None, str(exc)))
    return out
