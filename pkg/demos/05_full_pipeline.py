"""End to end: corpus on disk -> synthetic anomalies -> folds -> augmentation.

Every stage after fixture writing is deterministic in (seed, paths): each
anomalous input gets its own RNG stream derived from the master seed and
its manifest path, so regenerating with more workers, or a subset of
inputs, reproduces the same bytes. The generation report carries one
provenance record per paste (alignment numbers, overlap, solver residual),
the fold splitter keeps source-image groups intact while stratifying by
label, and the augmentation step mixes the synthetic pool into the real
manifest by exact counts.
"""

import collections
from pathlib import Path

from berrysmith.pipeline import (
    GenerationConfig,
    augment_manifest,
    generate_dataset,
    load_manifest,
    split_folds,
)
from berrysmith.toydata import KNOWN_GOOD_PARAMS, write_generation_corpus
from berrysmith.tuner import ANOMALOUS, TunedDced

OUT = Path(__file__).parent / "out" / "05_full_pipeline"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    manifest_path, dataset_root, mask_root = write_generation_corpus(
        OUT / "corpus", n_anomalous=6, n_normal=12, size=128, seed=11
    )
    manifest = load_manifest(manifest_path)
    by_label = collections.Counter(e.label for e in manifest.entries)
    print(f"fixture corpus: {dict(by_label)} under {dataset_root}")

    model = TunedDced(
        params=KNOWN_GOOD_PARAMS,
        count_threshold=0.5,
        train_balanced_accuracy=1.0,
        val_balanced_accuracy=1.0,
    )
    cfg = GenerationConfig(n_syn=2, min_overlap=0.2, seed=5)
    report = generate_dataset(
        manifest, dataset_root, mask_root, OUT / "synthetic", model, cfg, workers=2
    )
    print(
        f"generated {len(report.manifest.entries)} synthetic images"
        f" ({len(report.records)} pastes), {len(report.rejections)} inputs rejected"
    )
    rec = report.records[0]
    print(
        f"first paste: {rec.source_anomalous_image}#{rec.source_mask_id}"
        f" -> {rec.output_path}#{rec.destination_mask_id},"
        f" gamma={rec.gamma:.2f}, overlap={rec.overlap_ratio:.2f},"
        f" stream={rec.seed_stream}"
    )

    folded = split_folds(manifest, k=3, seed=2)
    for fold in sorted({e.fold for e in folded.entries}):
        members = [e for e in folded.entries if e.fold == fold]
        n_anom = sum(1 for e in members if e.label == ANOMALOUS)
        print(f"fold {fold}: {len(members)} entries, {n_anom} anomalous")

    # grow the training set by 50% of the synthetic pool
    augmented = augment_manifest(manifest, report.manifest, "addition", 50.0, seed=3)
    print(
        f"augmented manifest: {len(manifest.entries)} real + "
        f"{len(augmented.entries) - len(manifest.entries)} synthetic"
        f" = {len(augmented.entries)} entries"
    )


if __name__ == "__main__":
    main()
