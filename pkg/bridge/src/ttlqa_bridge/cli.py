"""Command-line exporter: --in dataset, --out interchange file,
--components subset of ner,dep,srl."""

from __future__ import annotations

import argparse
import sys

from .backends import ToolchainUnavailable
from .export import ALL_COMPONENTS, export_annotations


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttlqa-bridge",
        description="Export NER/dependency/SRL annotations into the "
                    "ttlqa interchange format",
    )
    parser.add_argument("--in", dest="input", required=True,
                        help="SQuAD-format JSON or plain-text paragraphs")
    parser.add_argument("--out", required=True)
    parser.add_argument("--components", default="ner,dep,srl",
                        help="comma-separated subset of ner,dep,srl")
    parser.add_argument("--backend", default="auto",
                        choices=("auto", "spacy", "builtin"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    components = tuple(
        c.strip() for c in args.components.split(",") if c.strip()
    )
    for c in components:
        if c not in ALL_COMPONENTS:
            print(f"error: unknown component {c!r}", file=sys.stderr)
            return 2
    try:
        result = export_annotations(args.input, args.out,
                                    components=components,
                                    backend=args.backend)
    except ToolchainUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {result.written} contexts "
          f"({result.skipped} skipped) -> {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
