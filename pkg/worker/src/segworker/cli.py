"""Entry points: `segworker serve` and `segworker export`.

Exit codes: 0 success, 1 usage error, 2 segmenter failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .export import export_directory
from .protocol import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segworker",
        description="Point-promptable segmentation worker and batch exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="speak the JSON protocol on stdio")
    p_serve.set_defaults(func=lambda args: serve())

    p_export = sub.add_parser("export", help="write a precomputed directory")
    p_export.add_argument("--image", required=True)
    p_export.add_argument("--grids", default="32,64",
                          help="comma-separated points-per-side list")
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=_cmd_export)
    return parser


def _cmd_export(args) -> int:
    try:
        grids = [int(g) for g in args.grids.split(",") if g.strip()]
        if not grids or any(g < 1 for g in grids):
            raise ValueError(args.grids)
    except ValueError:
        print(f"error: bad --grids value {args.grids!r}", file=sys.stderr)
        return 1
    try:
        out = export_directory(args.image, args.out, grids)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported grids {grids} to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
