"""Walkthrough: the full command-line pipeline on one bundle.

Generates a synthetic bundle, validates it, inspects gradient similarity,
optimizes weights, and exports the combined target prompt — all through the
same CLI entry points a shell user would call.
"""

import tempfile
from pathlib import Path

from hgprompt.cli import run


def step(title, argv):
    print(f"\n$ hgprompt {' '.join(argv)}")
    code = run(argv)
    print(f"[exit {code}]")
    assert code == 0, title


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        bundle = tmp / "bundle.hgpb"

        step("synth", ["synth", "--preset", "one-informative", "--seed", "1",
                       "--out", str(bundle)])
        step("validate", ["validate", "--bundle", str(bundle)])
        step("hscore uniform", ["hscore", "--bundle", str(bundle),
                                "--alpha", "0.3334,0.3333,0.3333"])
        step("gradsim", ["gradsim", "--bundle", str(bundle),
                         "--out", str(tmp / "cosines.csv")])
        print((tmp / "cosines.csv").read_text())
        step("optimize", ["optimize", "--bundle", str(bundle),
                          "--lr", "0.05", "--epochs", "500",
                          "--out-weights", str(tmp / "weights.csv")])
        alpha = (tmp / "weights.csv").read_text().strip().splitlines()[1]
        step("export-prompt", ["export-prompt", "--bundle", str(bundle),
                               "--alpha", alpha,
                               "--out", str(tmp / "target.hgpb")])
        step("validate target", ["validate", "--bundle", str(tmp / "target.hgpb")])
        print("\nPipeline complete: the exported single-source bundle holds "
              "the fused\nfeatures, the weighted gradient, and the combined "
              "target prompt.")


if __name__ == "__main__":
    main()
