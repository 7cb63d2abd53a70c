"""Command-line surface for the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure (conditioning or degeneracy in strict mode). Diagnostics go to
stderr; data goes to stdout or to --out files. Floats are printed with 17
significant digits so every output is round-trippable and byte-diffable.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import alignment, bundle as bundle_io, ensemble, synth
from .alignment import (DegenerateEnsembleError, NormalizedGradientSet,
                        PromptGradient, VanishingGradientError)
from .ensemble import PromptTensor, SimplexWeights
from .linalg import ConditioningError
from .optimizer import OptimizerConfig, optimize_weights, sweep_lambda
from .transferability import (LabeledFeatures, auto_ridge,
                              build_cross_covariance_cache, h_score)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_alpha(text: str, m: int) -> SimplexWeights:
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"cannot parse --alpha {text!r}: {exc}") from exc
    if len(values) != m:
        raise bundle_io.BundleFormatError(
            f"--alpha has {len(values)} entries, bundle has {m} sources")
    try:
        return SimplexWeights(values)
    except ValueError as exc:
        raise bundle_io.BundleFormatError(f"invalid --alpha: {exc}") from exc


def _parse_ridge(text: str):
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError as exc:
        raise UsageError(f"--ridge must be a number or 'auto', got {text!r}") from exc
    if value < 0:
        raise UsageError("--ridge must be nonnegative")
    return value


def _load(path: str) -> bundle_io.PromptBundle:
    try:
        return bundle_io.read_bundle(path)
    except FileNotFoundError as exc:
        raise bundle_io.BundleFormatError(f"cannot open {path}: {exc}") from exc


def _bundle_problem(b: bundle_io.PromptBundle):
    sources = [LabeledFeatures(f, b.labels, b.class_count) for f in b.features]
    return build_cross_covariance_cache(sources)


def _gradient_set(b: bundle_io.PromptBundle, strict: bool) -> NormalizedGradientSet:
    raw = [PromptGradient(str(i), g) for i, g in enumerate(b.gradients)]
    return NormalizedGradientSet.from_raw(raw, strict=strict)


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_validate(args) -> int:
    try:
        b = _load(args.bundle)
    except bundle_io.BundleValidationError as exc:
        for violation in exc.violations:
            print(violation)
        return EXIT_DATA
    violations = bundle_io.validate_bundle(b)
    if violations:
        for violation in violations:
            print(violation)
        return EXIT_DATA
    print("valid", file=sys.stderr)
    return EXIT_OK


def _cmd_hscore(args) -> int:
    b = _load(args.bundle)
    cache = _bundle_problem(b)
    alpha = _parse_alpha(args.alpha, b.source_count)
    ridge = _parse_ridge(args.ridge)
    if ridge is None:
        ridge = auto_ridge(cache, alpha)
    print(_fmt(h_score(cache, alpha, ridge).value))
    return EXIT_OK


def _cmd_align(args) -> int:
    b = _load(args.bundle)
    alpha = _parse_alpha(args.alpha, b.source_count)
    gset = _gradient_set(b, strict=args.strict)
    report = alignment.alignment_loss(gset, alpha, strict=args.strict)
    print(f"L_align={_fmt(report.loss)}")
    print(f"ensemble_norm={_fmt(report.ensemble_norm)}")
    for i, c in enumerate(report.cosines):
        print(f"cosine_{i}={_fmt(c)}")
    if report.degenerate:
        print("degenerate=1")
    return EXIT_OK


def _cmd_gradsim(args) -> int:
    b = _load(args.bundle)
    gset = _gradient_set(b, strict=True)
    sim = alignment.cosine_similarity_matrix(gset)
    header = [f"g{j}" for j in range(len(gset))]
    _write_csv(args.out, header, sim)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _optimizer_config(args) -> OptimizerConfig:
    try:
        return OptimizerConfig(
            learning_rate=args.lr,
            lam=getattr(args, "lambda_", 1.0),
            epochs=args.epochs,
            ridge=_parse_ridge(args.ridge),
            restarts=args.restarts,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _trace_rows(trace):
    for rec in trace.records:
        yield [rec.epoch, *rec.alpha, rec.h_value, rec.align_value, rec.loss]


def _cmd_optimize(args) -> int:
    b = _load(args.bundle)
    cfg = _optimizer_config(args)
    trace = optimize_weights(b, cfg)
    final = trace.records[-1]
    print(f"final_alpha={','.join(_fmt(a) for a in final.alpha)}")
    print(f"final_H={_fmt(final.h_value)}")
    print(f"final_L_align={_fmt(final.align_value)}")
    print(f"final_L={_fmt(final.loss)}")
    print(f"termination={trace.termination}")
    print(f"restart={trace.restart_index}")
    print(f"ridge={_fmt(trace.ridge_applied)}")
    m = b.source_count
    if args.trace:
        header = ["epoch", *(f"alpha_{i}" for i in range(m)),
                  "H", "L_align", "L"]
        rows = [[str(rec.epoch), *rec.alpha, rec.h_value, rec.align_value,
                 rec.loss] for rec in trace.records]
        _write_csv(args.trace, header, rows)
    if args.out_weights:
        _write_csv(args.out_weights, [f"alpha_{i}" for i in range(m)],
                   [list(final.alpha)])
    return EXIT_OK


def _cmd_sweep(args) -> int:
    b = _load(args.bundle)
    try:
        lambdas = [float(tok) for tok in args.lambdas.split(",")]
    except ValueError as exc:
        raise UsageError(f"cannot parse --lambdas: {exc}") from exc
    cfg = _optimizer_config(args)
    results = sweep_lambda(b, cfg, lambdas)
    m = b.source_count
    header = ["lambda", "status", *(f"alpha_{i}" for i in range(m)),
              "H", "L_align", "L", "termination"]
    rows = []
    for lam, trace, err in results:
        if trace is None:
            rows.append([lam, "failed", *([""] * (m + 3)), err or ""])
            continue
        final = trace.records[-1]
        rows.append([lam, "ok", *final.alpha, final.h_value,
                     final.align_value, final.loss, trace.termination])
    _write_csv(args.out, header, rows)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _weighted_gradient(b, alpha):
    acc = np.zeros_like(np.asarray(b.gradients[0], dtype=np.float64))
    for w, g in zip(alpha.values, b.gradients):
        acc += w * np.asarray(g, dtype=np.float64)
    return acc


def _cmd_fuse(args) -> int:
    b = _load(args.bundle)
    alpha = _parse_alpha(args.alpha, b.source_count)
    fused_features = ensemble.fuse_features(b.features, alpha)
    fused_grad = _weighted_gradient(b, alpha)
    prompts = None
    if b.prompts is not None:
        target = ensemble.build_target_prompt(
            [PromptTensor(p, str(i)) for i, p in enumerate(b.prompts)], alpha)
        prompts = [target.tokens]
    out = bundle_io.PromptBundle(
        features=[fused_features],
        gradients=[fused_grad],
        labels=b.labels,
        class_count=b.class_count,
        prompts=prompts,
        provenance=f"fused({args.alpha}) from {b.provenance}",
        seed=b.seed,
    )
    bundle_io.write_bundle(out, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_export_prompt(args) -> int:
    b = _load(args.bundle)
    alpha = _parse_alpha(args.alpha, b.source_count)
    if b.prompts is None:
        raise bundle_io.BundleFormatError(
            "bundle carries no prompt tensors; cannot export a target prompt")
    target = ensemble.build_target_prompt(
        [PromptTensor(p, str(i)) for i, p in enumerate(b.prompts)], alpha)
    out = bundle_io.PromptBundle(
        features=[ensemble.fuse_features(b.features, alpha)],
        gradients=[_weighted_gradient(b, alpha)],
        labels=b.labels,
        class_count=b.class_count,
        prompts=[target.tokens],
        provenance=f"target-prompt({args.alpha}) from {b.provenance}",
        seed=b.seed,
    )
    bundle_io.write_bundle(out, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_synth(args) -> int:
    _, _, b = synth.preset_bundle(args.preset, seed=args.seed,
                                  n_samples=args.samples)
    bundle_io.write_bundle(b, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hgprompt", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("validate", _cmd_validate, help="check a bundle's invariants")
    p.add_argument("--bundle", required=True)

    p = add("hscore", _cmd_hscore, help="fused-feature transferability score")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--ridge", default="auto")

    p = add("align", _cmd_align, help="gradient alignment loss and cosines")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--strict", action="store_true")

    p = add("gradsim", _cmd_gradsim, help="pairwise gradient cosine matrix")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)

    def optimizer_flags(p):
        p.add_argument("--lambda", dest="lambda_", type=float, default=1.0)
        p.add_argument("--lr", type=float, default=0.01)
        p.add_argument("--epochs", type=int, default=200)
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--ridge", default="auto")
        p.add_argument("--seed", type=int, default=0)

    p = add("optimize", _cmd_optimize, help="optimize fusion weights")
    p.add_argument("--bundle", required=True)
    optimizer_flags(p)
    p.add_argument("--trace", default=None)
    p.add_argument("--out-weights", default=None)

    p = add("sweep-lambda", _cmd_sweep, help="optimize across a lambda grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--lambdas", default="0.1,0.5,1,2,5,10")
    optimizer_flags(p)
    p.add_argument("--out", required=True)

    p = add("fuse", _cmd_fuse, help="write fused features as a single-source bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--out", required=True)

    p = add("export-prompt", _cmd_export_prompt,
            help="write the combined target prompt")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--out", required=True)

    p = add("synth", _cmd_synth, help="generate a synthetic bundle")
    p.add_argument("--preset", required=True, choices=synth.PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=synth.DEFAULT_BUNDLE_SAMPLES)
    p.add_argument("--out", required=True)

    return parser


def _thread_cap() -> int:
    """Worker-count cap from HGP_THREADS; default is all cores."""
    raw = os.environ.get("HGP_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        cap = int(raw)
    except ValueError as exc:
        raise UsageError(f"HGP_THREADS must be a positive integer, got {raw!r}") from exc
    if cap < 1:
        raise UsageError(f"HGP_THREADS must be >= 1, got {cap}")
    return cap


def run(argv) -> int:
    parser = build_parser()
    try:
        limits = threadpool_limits(limits=_thread_cap())
        try:
            args = parser.parse_args(argv)
            if not getattr(args, "fn", None):
                raise UsageError("a subcommand is required")
            return args.fn(args)
        finally:
            limits.unregister()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except bundle_io.BundleFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConditioningError, DegenerateEnsembleError,
            VanishingGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
