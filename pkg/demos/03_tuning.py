"""Grid-searching the edge filter on a labeled patch corpus.

The tuner walks every valid (kernel, wide, narrow) tuple on a value grid,
scores each by how well a single scalar threshold on the texture-pixel
count separates normal from anomalous patches (balanced accuracy), and
keeps the best. A held-out set can re-rank the leaders so the pick does
not overfit the training patches. The result, including the fitted count
threshold, round-trips through a small JSON model file.
"""

from pathlib import Path

from berrysmith.toydata import make_tuner_corpus
from berrysmith.tuner import (
    GridSpec,
    classify_baseline,
    evaluate,
    load_tuned,
    save_tuned,
    score_grid,
    tune,
)

OUT = Path(__file__).parent / "out" / "03_tuning"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    corpus = make_tuner_corpus()  # 40 flat "normal" + 40 speckled "anomalous"
    train, val = corpus[:56], corpus[56:]
    print(f"corpus: {len(train)} train / {len(val)} val patches")

    # a reduced grid keeps the demo quick; GridSpec() is the full default
    spec = GridSpec(threshold_values=(0.0, 25.0, 75.0, 150.0, 200.0), kernel_sizes=(3, 5))
    ranked = score_grid(train, spec)
    print(f"grid: {len(ranked)} valid tuples, top 3 by train balanced accuracy:")
    for cand in ranked[:3]:
        p = cand.params
        print(
            f"  K={p.kernel_size} wide=({p.wide.th_min},{p.wide.th_max})"
            f" narrow=({p.narrow.th_min},{p.narrow.th_max})"
            f" thr={cand.count_threshold:g} train_ba={cand.train_balanced_accuracy:.3f}"
        )

    model = tune(train, spec, val_patches=val, ranked=ranked)
    print(
        f"tuned: K={model.params.kernel_size}, count threshold {model.count_threshold:g},"
        f" train={model.train_balanced_accuracy:.3f} val={model.val_balanced_accuracy:.3f}"
    )

    path = OUT / "model.json"
    save_tuned(model, path)
    model = load_tuned(path)
    print(f"model file round-tripped: {path}")

    predictions = [classify_baseline(patch, model) for patch, _ in val]
    metrics = evaluate(predictions, [label for _, label in val])
    print(
        f"val metrics: ba={metrics.balanced_accuracy:.3f} f1={metrics.f1:.3f}"
        f" precision={metrics.precision:.3f} recall={metrics.recall:.3f}"
        f" tp/tn/fp/fn={metrics.tp}/{metrics.tn}/{metrics.fp}/{metrics.fn}"
    )


if __name__ == "__main__":
    main()
