"""Command-line surface for reproducible batch runs.

Subcommands: tune, generate, split, augment, classify, segment-fallback,
masks-validate. Every setting can come from a TOML config (one table per
subcommand, underscored keys) with command-line flags taking precedence.
Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal error.
BERRYSMITH_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import blend
from .edges import dced
from .imgcore import load_gray, load_rgb, save_edge_png
from .masks import MaskFormatError, decode_maskset, encode_maskset, segment_fallback
from .pipeline import (
    GenerationConfig,
    augment_manifest,
    generate_dataset,
    load_manifest,
    save_manifest,
    save_records,
    split_folds,
)
from .tuner import ANOMALOUS, NORMAL, GridSpec, evaluate, load_tuned, save_tuned, score_grid, tune

log = logging.getLogger("berrysmith.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


class DataError(Exception):
    """Missing or malformed input data; maps to exit code 3."""


class Settings:
    """Effective settings: command-line flags win over the config table."""

    def __init__(self, args: argparse.Namespace, section: dict):
        self._args = vars(args)
        self._section = section

    def get(self, name: str, default=None):
        v = self._args.get(name.replace("-", "_"))
        if v is not None:
            return v
        for key in (name, name.replace("-", "_")):
            if key in self._section:
                return self._section[key]
        return default

    def require(self, name: str):
        v = self.get(name)
        if v is None:
            raise ConfigError(f"missing required setting {name!r} (--{name} or config key)")
        return v


def _load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        return tomllib.loads(payload.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc


def _float_tuple(value) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(float(v) for v in value)


def _int_tuple(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(int(v) for v in value)


def _existing_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {p}")
    return p


# --------------------------------------------------------------------------
# subcommands


def _grid_from_settings(s: Settings) -> GridSpec:
    thresholds = s.get("thresholds")
    kernels = s.get("kernels")
    try:
        return GridSpec(
            threshold_values=_float_tuple(thresholds) if thresholds is not None else GridSpec().threshold_values,
            kernel_sizes=_int_tuple(kernels) if kernels is not None else GridSpec().kernel_sizes,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid grid specification: {exc}") from exc


def cmd_tune(s: Settings) -> int:
    manifest_path = _existing_file(s.require("manifest"), "manifest")
    manifest = load_manifest(manifest_path)
    dataset_root = Path(s.get("dataset-root", manifest_path.parent))
    grid = _grid_from_settings(s)
    val_fold = s.get("val-fold")

    def patches_of(entries):
        return [(load_gray(dataset_root / e.path), e.label) for e in entries]

    if val_fold is None:
        train_entries = list(manifest.entries)
        val_entries = []
    else:
        val_fold = int(val_fold)
        train_entries = [e for e in manifest.entries if e.fold != val_fold]
        val_entries = [e for e in manifest.entries if e.fold == val_fold]
        if not val_entries:
            raise DataError(f"no entries carry fold {val_fold}")
    train = patches_of(train_entries)
    val = patches_of(val_entries) if val_entries else None

    try:
        ranked = score_grid(train, grid)
        model = tune(train, grid, val, ranked=ranked)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    out = Path(s.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_tuned(model, out)
    report_path = Path(s.get("report", out.with_suffix(".report.csv")))
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "kernel_size",
                "wth_min",
                "wth_max",
                "nth_min",
                "nth_max",
                "count_threshold",
                "train_balanced_accuracy",
            ]
        )
        for c in ranked:
            p = c.params
            writer.writerow(
                [
                    p.kernel_size,
                    p.wide.th_min,
                    p.wide.th_max,
                    p.narrow.th_min,
                    p.narrow.th_max,
                    c.count_threshold,
                    c.train_balanced_accuracy,
                ]
            )
    p = model.params
    print(
        f"tuned: K={p.kernel_size} wide=({p.wide.th_min},{p.wide.th_max}) "
        f"narrow=({p.narrow.th_min},{p.narrow.th_max}) "
        f"count_threshold={model.count_threshold} "
        f"train_ba={model.train_balanced_accuracy:.4f} "
        f"val_ba={model.val_balanced_accuracy:.4f}"
    )
    print(f"model: {out}")
    print(f"report: {report_path} ({len(ranked)} candidates)")
    return EXIT_OK


def cmd_generate(s: Settings) -> int:
    manifest_path = _existing_file(s.require("manifest"), "manifest")
    model_path = _existing_file(s.require("model"), "tuned model")
    manifest = load_manifest(manifest_path)
    tuned = load_tuned(model_path)
    dataset_root = Path(s.get("dataset-root", manifest_path.parent))
    mask_root = Path(s.get("mask-root", dataset_root / "masks"))
    out_root = Path(s.require("out-root"))
    try:
        cfg = GenerationConfig(
            n_syn=int(s.get("n-syn", 1)),
            min_overlap=float(s.get("min-overlap", 0.5)),
            seed=int(s.get("seed", 0)),
            gamma_mode=str(s.get("gamma-mode", "sqrt_area")),
            overlap_guard=bool(s.get("overlap-guard", True)),
            one_image_per_paste=bool(s.get("one-image-per-paste", False)),
        )
        workers = int(s.get("workers", 1))
        if workers < 1:
            raise ValueError("workers must be >= 1")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dump_dir = s.get("dump-blend-debug")
    if dump_dir is not None:
        blend.set_debug_dump_dir(dump_dir)
    try:
        report = generate_dataset(
            manifest,
            dataset_root,
            mask_root,
            out_root,
            tuned,
            cfg,
            workers=workers,
            allow_fallback=bool(s.get("fallback-masks", False)),
            fallback_min_area=int(s.get("fallback-min-area", 64)),
        )
    finally:
        blend.set_debug_dump_dir(None)

    out_root.mkdir(parents=True, exist_ok=True)
    save_manifest(report.manifest, out_root / "synthetic_manifest.json")
    save_records(report.records, out_root / "synthetic_records.jsonl")
    n_inputs = len(manifest.by_label(ANOMALOUS))
    print(
        f"generated {len(report.manifest.entries)} synthetic images "
        f"({len(report.records)} pastes) from {n_inputs} anomalous inputs; "
        f"rejected {len(report.rejections)}"
    )
    reason_counts: dict[str, int] = {}
    for r in report.rejections:
        for reason in r.reasons:
            reason_counts[reason] = reason_counts.get(reason, 0) + 1
    for reason in sorted(reason_counts):
        print(f"  rejection reason {reason}: {reason_counts[reason]}")
    if n_inputs > 0 and not report.manifest.entries:
        raise DataError("all anomalous inputs were rejected; no outputs produced")
    return EXIT_OK


def cmd_split(s: Settings) -> int:
    manifest_path = _existing_file(s.require("manifest"), "manifest")
    manifest = load_manifest(manifest_path)
    k = int(s.get("k", 3))
    seed = int(s.get("seed", 0))
    try:
        split = split_folds(manifest, k, seed)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(s.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(split, out)
    sizes = [sum(1 for e in split.entries if e.fold == f) for f in range(k)]
    print(f"assigned {len(split.entries)} entries to {k} folds: {sizes}")
    return EXIT_OK


def cmd_augment(s: Settings) -> int:
    real_path = _existing_file(s.require("real"), "real manifest")
    syn_path = _existing_file(s.require("synthetic"), "synthetic manifest")
    real = load_manifest(real_path)
    synthetic = load_manifest(syn_path)
    mode = str(s.require("mode"))
    if mode not in ("addition", "substitution"):
        raise ConfigError(f"mode must be 'addition' or 'substitution', got {mode!r}")
    try:
        pct = float(s.require("pct"))
    except ValueError as exc:
        raise ConfigError(f"pct must be a number: {exc}") from exc
    if not (0.0 < pct <= 100.0):
        raise ConfigError("pct must be in (0, 100]")
    seed = int(s.get("seed", 0))
    try:
        mixed = augment_manifest(real, synthetic, mode, pct, seed)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(s.require("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(mixed, out)
    n_anom = sum(1 for e in mixed.entries if e.label == ANOMALOUS)
    n_norm = len(mixed.entries) - n_anom
    print(
        f"{mode} {pct:g}%: {len(real.entries)} real + {len(synthetic.entries)} synthetic "
        f"-> {len(mixed.entries)} entries ({n_norm} normal, {n_anom} anomalous)"
    )
    return EXIT_OK


def cmd_classify(s: Settings) -> int:
    manifest_path = _existing_file(s.require("manifest"), "manifest")
    model_path = _existing_file(s.require("model"), "tuned model")
    manifest = load_manifest(manifest_path)
    model = load_tuned(model_path)
    dataset_root = Path(s.get("dataset-root", manifest_path.parent))
    dump_dir = s.get("dump-edges")
    rows = []
    predictions = []
    truths = []
    for i, entry in enumerate(manifest.entries):
        patch = load_gray(dataset_root / entry.path)
        result = dced(patch, model.params)
        pred = ANOMALOUS if result.diff_count > model.count_threshold else NORMAL
        predictions.append(pred)
        truths.append(entry.label)
        rows.append((entry.path, entry.label, pred, result.diff_count))
        if dump_dir is not None:
            stem = f"{i:04d}_{Path(entry.path).stem}"
            save_edge_png(result.wide.data, Path(dump_dir) / f"{stem}_wide.png")
            save_edge_png(result.narrow.data, Path(dump_dir) / f"{stem}_narrow.png")
            save_edge_png(result.diff.data, Path(dump_dir) / f"{stem}_diff.png")
    metrics = evaluate(predictions, truths)
    payload = {
        "balanced_accuracy": metrics.balanced_accuracy,
        "f1_score": metrics.f1,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "tp": metrics.tp,
        "tn": metrics.tn,
        "fp": metrics.fp,
        "fn": metrics.fn,
        "undefined": list(metrics.undefined),
    }
    print(json.dumps(payload, indent=2))
    out = s.get("out")
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "label", "prediction", "diff_count"])
            writer.writerows(rows)
    return EXIT_OK


def cmd_segment_fallback(s: Settings) -> int:
    input_dir = Path(s.require("input"))
    if not input_dir.is_dir():
        raise DataError(f"input directory not found: {input_dir}")
    out_root = Path(s.require("out-root"))
    min_area = int(s.get("min-area", 64))
    images = sorted(p for p in input_dir.rglob("*.png"))
    written = 0
    for img_path in images:
        rel = img_path.relative_to(input_dir)
        img = load_rgb(img_path)
        maskset = segment_fallback(img, min_area=min_area, source_image=rel.as_posix())
        dest = (out_root / rel).with_suffix(".masks.json")
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(encode_maskset(maskset))
        written += 1
    print(f"wrote {written} mask manifests under {out_root}")
    if not images:
        print(f"no PNG images found under {input_dir}")
    return EXIT_OK


def cmd_masks_validate(s: Settings, paths: list[str]) -> int:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.masks.json")))
        else:
            files.append(p)
    if not files:
        raise DataError("no mask manifests to validate")
    failures = 0
    for f in files:
        try:
            payload = f.read_bytes()
        except OSError as exc:
            print(f"FAIL {f}: {exc}")
            failures += 1
            continue
        try:
            maskset = decode_maskset(payload)
        except MaskFormatError as exc:
            print(f"FAIL {f}: {exc}")
            failures += 1
            continue
        if encode_maskset(maskset) != payload:
            print(f"FAIL {f}: not in canonical byte form")
            failures += 1
            continue
        print(f"OK {f}")
    print(f"validated {len(files)} files, {failures} failures")
    return EXIT_DATA if failures else EXIT_OK


# --------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="berrysmith",
        description="Synthetic anomalous-fruit data generation and dataset tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, help="TOML config file; flags override it")
        sp.add_argument("--seed", type=int, help="RNG seed for bit-reproducible output")
        return sp

    p = add("tune", "grid-search edge-filter parameters on a labeled manifest")
    p.add_argument("--manifest", help="training manifest JSON")
    p.add_argument("--dataset-root", help="root the manifest paths are relative to")
    p.add_argument("--out", help="output path of the tuned model JSON")
    p.add_argument("--report", help="per-candidate score table CSV (default: <out>.report.csv)")
    p.add_argument("--val-fold", type=int, help="hold out this fold as the validation set")
    p.add_argument("--thresholds", help="comma-separated threshold grid values")
    p.add_argument("--kernels", help="comma-separated odd kernel sizes")

    p = add("generate", "generate synthetic anomalous images")
    p.add_argument("--manifest", help="training manifest JSON")
    p.add_argument("--model", help="tuned model JSON from 'tune'")
    p.add_argument("--dataset-root", help="root the manifest paths are relative to")
    p.add_argument("--mask-root", help="root of per-image mask manifests")
    p.add_argument("--out-root", help="output tree root")
    p.add_argument("--n-syn", type=int, help="segments pasted per synthetic sample")
    p.add_argument("--min-overlap", type=float, help="minimum paste overlap ratio")
    p.add_argument("--workers", type=int, help="parallel work items")
    p.add_argument("--gamma-mode", choices=["sqrt_area", "literal"], help="area-ratio scaling mode")
    p.add_argument(
        "--overlap-guard",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="reject pastes below --min-overlap (--no-overlap-guard disables)",
    )
    p.add_argument(
        "--one-image-per-paste",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="write each paste as its own output image",
    )
    p.add_argument(
        "--fallback-masks",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="segment images without mask manifests instead of failing",
    )
    p.add_argument("--fallback-min-area", type=int, help="fallback segmentation min area")
    p.add_argument("--dump-blend-debug", help="dump guidance/residual planes under this directory")

    p = add("split", "assign cross-validation folds to a manifest")
    p.add_argument("--manifest", help="manifest JSON to split")
    p.add_argument("--k", type=int, help="number of folds (default 3)")
    p.add_argument("--out", help="output manifest path")

    p = add("augment", "mix synthetic entries into a real manifest")
    p.add_argument("--real", help="real manifest JSON")
    p.add_argument("--synthetic", help="synthetic manifest JSON")
    p.add_argument("--mode", choices=["addition", "substitution"], help="experiment mode")
    p.add_argument("--pct", type=float, help="percentage in (0, 100]")
    p.add_argument("--out", help="output manifest path")

    p = add("classify", "run the baseline edge-count classifier over a manifest")
    p.add_argument("--manifest", help="labeled manifest JSON")
    p.add_argument("--model", help="tuned model JSON")
    p.add_argument("--dataset-root", help="root the manifest paths are relative to")
    p.add_argument("--out", help="per-patch prediction CSV")
    p.add_argument("--dump-edges", help="dump wide/narrow/diff edge maps (1-bit PNG) here")

    p = add("segment-fallback", "threshold-based segmentation for images without masks")
    p.add_argument("--input", help="directory of PNG images")
    p.add_argument("--out-root", help="where mask manifests are written")
    p.add_argument("--min-area", type=int, help="drop components smaller than this")

    p = add("masks-validate", "check mask manifests for canonical format conformance")
    p.add_argument("paths", nargs="*", help="manifest files or directories to scan")

    return parser


_COMMANDS = {
    "tune": cmd_tune,
    "generate": cmd_generate,
    "split": cmd_split,
    "augment": cmd_augment,
    "classify": cmd_classify,
    "segment-fallback": cmd_segment_fallback,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("BERRYSMITH_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        config = _load_config(args.config)
        section = config.get(args.command.replace("-", "_"), {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section for {args.command} must be a table")
        settings = Settings(args, section)
        if args.command == "masks-validate":
            return cmd_masks_validate(settings, args.paths)
        return _COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
