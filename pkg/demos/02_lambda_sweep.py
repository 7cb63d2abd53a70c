"""Walkthrough: how the alignment penalty reshapes the learned weights.

Sweeps the regularization strength on two contrasting scenarios. With
related sources the gradients largely agree and the penalty barely moves
the solution; with unrelated sources it pulls the weights toward gradient
consensus at the expense of raw feature discriminability.
"""

import numpy as np

from hgprompt import OptimizerConfig, preset_bundle, sweep_lambda

LAMBDAS = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0]


def show(preset):
    print(f"\n=== preset: {preset} (seed 0) ===")
    _, _, bundle = preset_bundle(preset, seed=0)
    cfg = OptimizerConfig(learning_rate=0.05, epochs=300)
    print(f"{'lambda':>7} | {'alpha':^24} | {'H':>8} | {'L_align':>8}")
    print("-" * 58)
    for lam, trace, err in sweep_lambda(bundle, cfg, LAMBDAS):
        if trace is None:
            print(f"{lam:>7.2f} | failed: {err}")
            continue
        final = trace.records[-1]
        alpha = " ".join(f"{a:.3f}" for a in final.alpha)
        print(f"{lam:>7.2f} | {alpha:^24} | {final.h_value:8.4f} | "
              f"{final.align_value:8.4f}")


def main():
    show("related")
    show("one-informative")
    print("\nReading the tables: with trained source prompts the features are "
          "all\nhighly discriminative, H saturates, and growing penalties "
          "simply pull the\nweights toward uniform. In the one-informative "
          "scenario H strongly\nprefers source 0, so the useful source keeps "
          "its mass until the penalty\ndominates the objective.")


if __name__ == "__main__":
    main()
