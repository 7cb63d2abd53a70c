"""Walkthrough: from a synthetic bundle to optimized fusion weights.

Builds the `one-informative` scenario — one source prompt trained on the
target's class geometry, two sources contributing pure noise — and shows the
optimizer discovering the informative source, then compares the learned
combination against a dense grid over the two-dimensional face spanned by
the winning pair.
"""

import numpy as np

from hgprompt import (OptimizerConfig, PromptTensor, SimplexWeights,
                      build_target_prompt, evaluate_target_prompt,
                      optimize_weights, preset_bundle)


def main():
    print("=== Building the one-informative scenario (seed 0) ===")
    enc, target, bundle = preset_bundle("one-informative", seed=0)
    print(f"sources: {bundle.source_count}, samples: {bundle.sample_count}, "
          f"feature dim: {bundle.feature_dim}, classes: {bundle.class_count}")

    print("\n=== Optimizing fusion weights ===")
    cfg = OptimizerConfig(learning_rate=0.05, epochs=500)
    trace = optimize_weights(bundle, cfg)
    first, last = trace.records[0], trace.records[-1]
    print(f"start  alpha={np.round(first.alpha, 4)}  L={first.loss:+.6f}")
    print(f"final  alpha={np.round(last.alpha, 4)}  L={last.loss:+.6f}")
    print(f"termination: {trace.termination} after {len(trace.records) - 1} "
          f"epochs (restart {trace.restart_index}, ridge "
          f"{trace.ridge_applied:.3e})")
    print(f"H rose {first.h_value:.4f} -> {last.h_value:.4f}; "
          f"alignment loss {first.align_value:.4f} -> {last.align_value:.4f}")

    print("\n=== Does the learned prompt transfer? ===")
    prompts = [PromptTensor(p, str(i)) for i, p in enumerate(bundle.prompts)]
    tuned = build_target_prompt(prompts, trace.final_alpha)
    uniform = build_target_prompt(prompts, SimplexWeights.uniform(3))
    acc_tuned = evaluate_target_prompt(enc, tuned, target, n_eval=2000)
    acc_uniform = evaluate_target_prompt(enc, uniform, target, n_eval=2000)
    acc_best = evaluate_target_prompt(enc, prompts[0], target, n_eval=2000)
    print(f"uniform average of all prompts: {acc_uniform:.3f}")
    print(f"optimized combination:          {acc_tuned:.3f}")
    print(f"informative source alone:       {acc_best:.3f}")
    print("\nThe optimizer concentrates nearly all mass on the informative "
          "source,\nrescuing the transfer that naive averaging destroys.")


if __name__ == "__main__":
    main()
