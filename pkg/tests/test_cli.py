"""End-to-end subcommand runs: artifacts, stdout, and exit codes."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from berrysmith.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from berrysmith.imgcore import ImageRgb, save_png
from berrysmith.masks import decode_maskset
from berrysmith.pipeline import (
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    save_manifest,
)
from berrysmith.toydata import flat_patch, speckle_patch
from berrysmith.tuner import ANOMALOUS, NORMAL, load_tuned, save_tuned

GRID_FLAGS = ["--thresholds", "25,75,150,200", "--kernels", "3"]


@pytest.fixture(scope="module")
def patch_workspace(tmp_path_factory):
    """Labeled grayscale patches on disk plus manifests with and without folds."""
    root = tmp_path_factory.mktemp("cli_patches")
    rng = np.random.default_rng(19)
    entries = []
    for i in range(8):
        for label, patch in (
            (NORMAL, flat_patch(32, 40.0 + 20.0 * i)),
            (ANOMALOUS, speckle_patch(32, rng)),
        ):
            rel = f"patches/{label}_{i}.png"
            save_png(patch, root / rel)
            entries.append(
                ManifestEntry(path=rel, label=label, source_image_group=f"{label}_g{i}")
            )
    manifest = DatasetManifest(entries=tuple(entries))
    save_manifest(manifest, root / "manifest.json")
    # fold per (normal, anomalous) pair so every fold holds both classes
    folded = DatasetManifest(
        entries=tuple(
            ManifestEntry(e.path, e.label, e.source_image_group, fold=(i // 2) % 2)
            for i, e in enumerate(entries)
        )
    )
    save_manifest(folded, root / "manifest_folds.json")
    return root


@pytest.fixture(scope="module")
def tuned_model_path(tmp_path_factory, toy_model):
    path = tmp_path_factory.mktemp("cli_model") / "model.json"
    save_tuned(toy_model, path)
    return path


# --------------------------------------------------------------------------
# tune


def test_tune_writes_model_and_report(patch_workspace, tmp_path, capsys):
    model = tmp_path / "tuned.json"
    rc = main(
        ["tune", "--manifest", str(patch_workspace / "manifest.json"), "--out", str(model)]
        + GRID_FLAGS
    )
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "tuned: K=" in out and f"model: {model}" in out and "report:" in out
    tuned = load_tuned(model)
    assert tuned.train_balanced_accuracy == 1.0
    report = model.with_suffix(".report.csv")
    with open(report, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "kernel_size",
        "wth_min",
        "wth_max",
        "nth_min",
        "nth_max",
        "count_threshold",
        "train_balanced_accuracy",
    ]
    assert len(rows) == 1 + 10  # valid quadruples over 4 values, 1 kernel
    assert f"({len(rows) - 1} candidates)" in out


def test_tune_reruns_are_byte_identical(patch_workspace, tmp_path):
    args = ["tune", "--manifest", str(patch_workspace / "manifest.json")] + GRID_FLAGS
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".report.csv").read_bytes() == b.with_suffix(".report.csv").read_bytes()


def test_tune_with_validation_fold(patch_workspace, tmp_path):
    model = tmp_path / "tuned.json"
    rc = main(
        [
            "tune",
            "--manifest",
            str(patch_workspace / "manifest_folds.json"),
            "--out",
            str(model),
            "--val-fold",
            "1",
        ]
        + GRID_FLAGS
    )
    assert rc == EXIT_OK
    tuned = load_tuned(model)
    assert tuned.val_balanced_accuracy == 1.0


def test_tune_missing_fold_is_data_error(patch_workspace, tmp_path, capsys):
    rc = main(
        [
            "tune",
            "--manifest",
            str(patch_workspace / "manifest_folds.json"),
            "--out",
            str(tmp_path / "m.json"),
            "--val-fold",
            "7",
        ]
        + GRID_FLAGS
    )
    assert rc == EXIT_DATA
    assert "fold 7" in capsys.readouterr().err


def test_tune_invalid_grid_is_config_error(patch_workspace, tmp_path, capsys):
    rc = main(
        [
            "tune",
            "--manifest",
            str(patch_workspace / "manifest.json"),
            "--out",
            str(tmp_path / "m.json"),
            "--thresholds",
            "50",
        ]
    )
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_manifest_is_data_error(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    rc = main(["tune", "--manifest", str(missing), "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_DATA
    assert str(missing) in capsys.readouterr().err


def test_unknown_flag_exits_with_usage_error(capsys):
    assert main(["tune", "--bogus"]) == 2
    capsys.readouterr()


def test_config_file_supplies_settings_and_flags_win(patch_workspace, tmp_path):
    model = tmp_path / "from_config.json"
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "[tune]\n"
        f'manifest = "{patch_workspace / "manifest.json"}"\n'
        f'out = "{model}"\n'
        "thresholds = [25.0, 75.0, 150.0, 200.0]\n"
        "kernels = [3, 5]\n"
    )
    rc = main(["tune", "--config", str(cfg), "--kernels", "3"])
    assert rc == EXIT_OK
    with open(model.with_suffix(".report.csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    assert {row[0] for row in rows} == {"3"}  # flag overrode the config's [3, 5]


# --------------------------------------------------------------------------
# generate


def test_generate_end_to_end(gen_corpus, tuned_model_path, tmp_path, capsys):
    manifest_path, dataset_root, mask_root = gen_corpus
    out_root = tmp_path / "syn"
    debug_dir = tmp_path / "debug"
    rc = main(
        [
            "generate",
            "--manifest",
            str(manifest_path),
            "--model",
            str(tuned_model_path),
            "--dataset-root",
            str(dataset_root),
            "--mask-root",
            str(mask_root),
            "--out-root",
            str(out_root),
            "--seed",
            "5",
            "--min-overlap",
            "0.2",
            "--dump-blend-debug",
            str(debug_dir),
        ]
    )
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    syn_manifest = load_manifest(out_root / "synthetic_manifest.json")
    n = len(syn_manifest.entries)
    assert n > 0
    assert f"generated {n} synthetic images" in out
    assert "from 10 anomalous inputs" in out
    for entry in syn_manifest.entries:
        assert (out_root / entry.path).is_file()
    records = (out_root / "synthetic_records.jsonl").read_text().strip().splitlines()
    assert len(records) >= n
    assert len(list(debug_dir.glob("blend_*_guidance.png"))) == len(records)


def test_generate_all_rejected_is_data_error(gen_corpus, tuned_model_path, tmp_path, capsys):
    manifest_path, dataset_root, mask_root = gen_corpus
    rc = main(
        [
            "generate",
            "--manifest",
            str(manifest_path),
            "--model",
            str(tuned_model_path),
            "--dataset-root",
            str(dataset_root),
            "--mask-root",
            str(mask_root),
            "--out-root",
            str(tmp_path / "syn"),
            "--min-overlap",
            "1.0",
        ]
    )
    assert rc == EXIT_DATA
    captured = capsys.readouterr()
    assert "rejected 10" in captured.out
    assert "rejection reason overlap" in captured.out


def test_generate_invalid_workers_is_config_error(gen_corpus, tuned_model_path, tmp_path, capsys):
    manifest_path, dataset_root, mask_root = gen_corpus
    rc = main(
        [
            "generate",
            "--manifest",
            str(manifest_path),
            "--model",
            str(tuned_model_path),
            "--out-root",
            str(tmp_path / "syn"),
            "--workers",
            "0",
        ]
    )
    assert rc == EXIT_CONFIG
    capsys.readouterr()


# --------------------------------------------------------------------------
# split and augment


def test_split_assigns_folds(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    out = tmp_path / "folds.json"
    rc = main(["split", "--manifest", str(manifest_path), "--out", str(out), "--seed", "3"])
    assert rc == EXIT_OK
    assert "assigned 30 entries to 3 folds" in capsys.readouterr().out
    split = load_manifest(out)
    assert all(e.fold in (0, 1, 2) for e in split.entries)


def test_split_too_few_groups_is_data_error(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    rc = main(
        ["split", "--manifest", str(manifest_path), "--out", str(tmp_path / "f.json"), "--k", "20"]
    )
    assert rc == EXIT_DATA
    capsys.readouterr()


def _write_syn_manifest(path, n):
    entries = tuple(
        ManifestEntry(path=f"syn/{i:03d}.png", label=ANOMALOUS, source_image_group=f"sg{i}")
        for i in range(n)
    )
    save_manifest(DatasetManifest(entries=entries), path)


def test_augment_addition_cli(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    syn_path = tmp_path / "syn.json"
    _write_syn_manifest(syn_path, 8)
    out = tmp_path / "mixed.json"
    rc = main(
        [
            "augment",
            "--real",
            str(manifest_path),
            "--synthetic",
            str(syn_path),
            "--mode",
            "addition",
            "--pct",
            "25",
            "--out",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    assert "addition 25%" in capsys.readouterr().out
    assert len(load_manifest(out).entries) == 30 + 2  # floor(0.25 * 8)


def test_augment_bad_mode_in_config_is_config_error(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    syn_path = tmp_path / "syn.json"
    _write_syn_manifest(syn_path, 8)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        f'[augment]\nreal = "{manifest_path}"\nsynthetic = "{syn_path}"\n'
        f'mode = "blend"\npct = 25.0\nout = "{tmp_path / "m.json"}"\n'
    )
    assert main(["augment", "--config", str(cfg)]) == EXIT_CONFIG
    capsys.readouterr()


def test_augment_pct_out_of_range_is_config_error(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    syn_path = tmp_path / "syn.json"
    _write_syn_manifest(syn_path, 8)
    rc = main(
        [
            "augment",
            "--real",
            str(manifest_path),
            "--synthetic",
            str(syn_path),
            "--mode",
            "addition",
            "--pct",
            "0",
            "--out",
            str(tmp_path / "m.json"),
        ]
    )
    assert rc == EXIT_CONFIG
    capsys.readouterr()


def test_augment_short_pool_is_data_error(gen_corpus, tmp_path, capsys):
    manifest_path, _, _ = gen_corpus
    syn_path = tmp_path / "syn.json"
    _write_syn_manifest(syn_path, 1)
    rc = main(
        [
            "augment",
            "--real",
            str(manifest_path),
            "--synthetic",
            str(syn_path),
            "--mode",
            "substitution",
            "--pct",
            "100",
            "--out",
            str(tmp_path / "m.json"),
        ]
    )
    assert rc == EXIT_DATA
    capsys.readouterr()


# --------------------------------------------------------------------------
# classify


def test_classify_reports_metrics_and_artifacts(
    patch_workspace, tuned_model_path, tmp_path, capsys
):
    out_csv = tmp_path / "preds.csv"
    edges_dir = tmp_path / "edges"
    rc = main(
        [
            "classify",
            "--manifest",
            str(patch_workspace / "manifest.json"),
            "--model",
            str(tuned_model_path),
            "--out",
            str(out_csv),
            "--dump-edges",
            str(edges_dir),
        ]
    )
    assert rc == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["balanced_accuracy"] == 1.0
    assert payload["f1_score"] == 1.0
    assert payload["precision"] == 1.0
    assert payload["recall"] == 1.0
    assert (payload["tp"], payload["tn"], payload["fp"], payload["fn"]) == (8, 8, 0, 0)
    assert payload["undefined"] == []
    with open(out_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "label", "prediction", "diff_count"]
    assert len(rows) == 1 + 16
    for row in rows[1:]:
        assert row[1] == row[2]
    assert len(list(edges_dir.glob("*_wide.png"))) == 16
    assert len(list(edges_dir.glob("*_narrow.png"))) == 16
    assert len(list(edges_dir.glob("*_diff.png"))) == 16


# --------------------------------------------------------------------------
# segment-fallback and masks-validate


def test_segment_fallback_writes_canonical_manifests(tmp_path, capsys):
    input_dir = tmp_path / "imgs"
    for i in range(2):
        data = np.full((48, 48, 3), 25, dtype=np.uint8)
        data[10 + i : 30, 12 : 30 + i] = 230
        save_png(ImageRgb(data), input_dir / f"field_{i}.png")
    out_root = tmp_path / "masks"
    rc = main(
        ["segment-fallback", "--input", str(input_dir), "--out-root", str(out_root), "--min-area", "16"]
    )
    assert rc == EXIT_OK
    assert "wrote 2 mask manifests" in capsys.readouterr().out
    files = sorted(out_root.rglob("*.masks.json"))
    assert len(files) == 2
    for f in files:
        ms = decode_maskset(f.read_bytes())
        assert ms.generator == "fallback"
        assert len(ms.masks) >= 1
    rc = main(["masks-validate", str(out_root)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("OK ") == 2
    assert "validated 2 files, 0 failures" in out


def test_segment_fallback_missing_input_is_data_error(tmp_path, capsys):
    rc = main(
        ["segment-fallback", "--input", str(tmp_path / "gone"), "--out-root", str(tmp_path / "o")]
    )
    assert rc == EXIT_DATA
    capsys.readouterr()


def test_masks_validate_accepts_fixture_corpus(gen_corpus, capsys):
    _, _, mask_root = gen_corpus
    rc = main(["masks-validate", str(mask_root)])
    assert rc == EXIT_OK
    assert "validated 30 files, 0 failures" in capsys.readouterr().out


def test_masks_validate_flags_bad_files(gen_corpus, tmp_path, capsys):
    _, _, mask_root = gen_corpus
    good = sorted(mask_root.rglob("*.masks.json"))[0]
    bad_dir = tmp_path / "bad"
    bad_dir.mkdir()
    (bad_dir / "junk.masks.json").write_bytes(b"{not json")
    doc = json.loads(good.read_bytes())
    (bad_dir / "pretty.masks.json").write_bytes(json.dumps(doc, indent=4).encode())
    (bad_dir / "fine.masks.json").write_bytes(good.read_bytes())
    rc = main(["masks-validate", str(bad_dir)])
    assert rc == EXIT_DATA
    out = capsys.readouterr().out
    assert "validated 3 files, 2 failures" in out
    assert "not in canonical byte form" in out
    assert out.count("FAIL ") == 2
    assert out.count("OK ") == 1


def test_masks_validate_missing_path_fails(tmp_path, capsys):
    rc = main(["masks-validate", str(tmp_path / "ghost.masks.json")])
    assert rc == EXIT_DATA
    assert "FAIL" in capsys.readouterr().out


def test_masks_validate_nothing_to_scan_is_data_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = main(["masks-validate", str(empty)])
    assert rc == EXIT_DATA
    assert "no mask manifests" in capsys.readouterr().err
