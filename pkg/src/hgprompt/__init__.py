"""Simplex-weighted multi-source prompt ensembling.

Learns convex-combination weights over source prompts by maximizing the
H-score of the fused prompt-conditioned features while penalizing
directional incoherence of the per-source prompt gradients.
"""

from .alignment import (AlignmentReport, DegenerateEnsembleError,
                        NormalizedGradientSet, PromptGradient,
                        VanishingGradientError, alignment_loss,
                        alignment_loss_gradient, compound_variance_trace,
                        cosine_similarity_matrix, ensemble_gradient,
                        normalize_gradient)
from .bundle import (BundleFormatError, BundleManifest, BundleValidationError,
                     PromptBundle, read_bundle, validate_bundle, write_bundle)
from .ensemble import (PromptTensor, SimplexWeights, build_target_prompt,
                       fuse_features, project_to_simplex)
from .linalg import (ConditioningError, InsufficientSamplesError, covariance,
                     ridge_cholesky_inverse, trace_of_product)
from .optimizer import (OptimizationTrace, OptimizerConfig, optimize_weights,
                        sweep_lambda, total_loss, total_loss_gradient)
from .synth import (SyntheticTask, ToyEncoder, evaluate_target_prompt,
                    make_bundle, make_encoder, make_task, preset_bundle,
                    sample_task, train_source_prompt)
from .transferability import (CrossCovarianceCache, HScoreReport,
                              LabeledFeatures, auto_ridge,
                              build_cross_covariance_cache,
                              class_conditional_means, h_score,
                              h_score_gradient)

__version__ = "0.1.0"
