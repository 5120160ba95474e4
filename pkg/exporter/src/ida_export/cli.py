"""Command line entry point: spec JSON in, bundle directory out.

Exit codes: 0 success, 2 spec/template/tokenization/filesystem problems,
3 model loading failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import IoError, ModelLoadError, SpecError, TokenizationError
from .export import export_bundle
from .spec import spec_from_json


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ida-export",
        description="Encode demonstrations and queries with a causal LM into a bundle",
    )
    parser.add_argument("spec", help="path to the export spec JSON file")
    parser.add_argument("-o", "--output", help="override the spec's output path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_json(args.spec)
        if args.output:
            spec = dataclasses.replace(spec, output=args.output)
        report = export_bundle(spec)
    except (SpecError, TokenizationError, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ModelLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    for flag in report.flags:
        print(f"warning: {flag}", file=sys.stderr)
    print(f"wrote bundle to {report.output}")
    print(f"demos: {report.n_demos}  queries: {report.n_queries}  candidates: {list(report.candidates)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
