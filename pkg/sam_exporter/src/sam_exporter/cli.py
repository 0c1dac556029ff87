"""Command line front end: `sam-exporter export`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from sam_exporter.exporter import ExporterConfig, export_masks, make_backend

EXIT_OK = 0
EXIT_ALL_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sam-exporter",
        description="Export automatic segmentation masks as canonical mask manifests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write one mask manifest per image in a directory")
    p.add_argument("--input", required=True, help="directory of images (png/jpg)")
    p.add_argument("--output", required=True, help="directory for mask manifests")
    p.add_argument(
        "--checkpoint",
        help="model checkpoint path; omit to use the deterministic stub backend",
    )
    p.add_argument("--min-area", type=int, default=0, help="generator minimum region area")
    p.add_argument("--device", default="cpu", help="model device selector")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = ExporterConfig(
            input_dir=Path(args.input),
            output_dir=Path(args.output),
            checkpoint=Path(args.checkpoint) if args.checkpoint else None,
            device=args.device,
            min_area=args.min_area,
        )
        backend = make_backend(cfg)
    except (ValueError, ImportError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    result = export_masks(cfg, backend)
    print(f"exported {len(result.written)} manifests, {len(result.failed)} failures")
    for rel, reason in result.failed:
        print(f"  failed {rel}: {reason}")
    if result.failed and not result.written:
        return EXIT_ALL_FAILED
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
