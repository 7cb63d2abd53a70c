"""Command line for the bundle exporter.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import sys

from .backbones import BackboneError
from .data import DatasetError
from .export import ExportJob, export

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_shape(text: str):
    try:
        p, d = (int(tok) for tok in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--prompt-shape must be 'p,d', got {text!r}") from exc
    if p < 1 or d < 1:
        raise UsageError(f"--prompt-shape entries must be positive, got {text}")
    return p, d


def build_parser() -> _Parser:
    parser = _Parser(prog="hgpb-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    p = sub.add_parser("export", help="write an HGPB bundle")
    p.add_argument("--backbone", required=True)
    p.add_argument("--prompts", required=True,
                   help="comma-separated raw f32 prompt files")
    p.add_argument("--data", required=True,
                   help="image folder, one subdirectory per class")
    p.add_argument("--cap", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-shape", default="50,768")
    p.add_argument("--pool", choices=("cls", "mean"), default="cls")
    p.add_argument("--device", default="cpu")
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command != "export":
            raise UsageError("the 'export' subcommand is required")
        job = ExportJob(
            backbone_id=args.backbone,
            prompt_paths=[tok for tok in args.prompts.split(",") if tok],
            data_dir=args.data,
            out_path=args.out,
            prompt_shape=_parse_shape(args.prompt_shape),
            cap=args.cap,
            seed=args.seed,
            pool=args.pool,
            device=args.device,
        )
        summary = export(job)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (BackboneError, DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {summary['out']}: {summary['sources']} sources, "
          f"{summary['samples']} samples, {summary['classes']} classes",
          file=sys.stderr)
    return EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
