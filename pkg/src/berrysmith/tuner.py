"""Grid search over the dual-filter parameters and the count-threshold classifier.

The search enumerates every (K, wth_min, wth_max, nth_min, nth_max) tuple from
the grid that satisfies the nesting constraints, scores each by the balanced
accuracy of the best scalar separator on patch-level surviving-edge counts,
and optionally re-ranks the top candidates on a validation split. Because the
narrow edge map is always a subset of the wide one, each tuple's count is a
difference of two per-threshold-pair counts, which are cached per patch and
kernel size; the gradient/suppression stage is computed once per (patch, K).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .edges import CannyThresholds, DcedParams, dced, hysteresis, suppressed_magnitude
from .imgcore import ImageGray

Label = Literal["normal", "anomalous"]
NORMAL: Label = "normal"
ANOMALOUS: Label = "anomalous"

TUNED_SCHEMA_VERSION = 1

DEFAULT_THRESHOLDS = tuple(float(v) for v in range(0, 251, 25))
DEFAULT_KERNELS = (3, 5, 7, 9)


@dataclass(frozen=True)
class GridSpec:
    """Search space: threshold values shared by all four thresholds, plus kernel sizes."""

    threshold_values: tuple[float, ...] = DEFAULT_THRESHOLDS
    kernel_sizes: tuple[int, ...] = DEFAULT_KERNELS

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.threshold_values)
        if len(vals) < 2:
            raise ValueError("need at least two threshold values")
        if any(v < 0 for v in vals):
            raise ValueError("threshold values must be non-negative")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("threshold values must be strictly increasing")
        ks = tuple(int(k) for k in self.kernel_sizes)
        if not ks or any(k < 1 or k % 2 == 0 for k in ks):
            raise ValueError("kernel sizes must be odd and >= 1")
        object.__setattr__(self, "threshold_values", vals)
        object.__setattr__(self, "kernel_sizes", ks)


@dataclass(frozen=True)
class TunedDced:
    """A parameter tuple plus its learned patch-count separator and scores."""

    params: DcedParams
    count_threshold: float
    train_balanced_accuracy: float
    val_balanced_accuracy: float

    def __post_init__(self) -> None:
        for name in ("train_balanced_accuracy", "val_balanced_accuracy"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class Metrics:
    """Binary classification metrics with the anomalous class as positive.

    Ratios whose denominator is zero are reported as 0.0 and named in
    ``undefined``.
    """

    balanced_accuracy: float
    f1: float
    precision: float
    recall: float
    tp: int
    tn: int
    fp: int
    fn: int
    undefined: tuple[str, ...] = ()


def enumerate_grid(spec: GridSpec) -> Iterator[DcedParams]:
    """All grid tuples satisfying wmax > wmin, nmin >= wmin, nmax > nmin, nmax > wmax.

    Yielded in lexicographic (K, wth_min, wth_max, nth_min, nth_max) order.
    """
    vals = spec.threshold_values
    for k in spec.kernel_sizes:
        for wmin in vals:
            for wmax in vals:
                if wmax <= wmin:
                    continue
                for nmin in vals:
                    if nmin < wmin:
                        continue
                    for nmax in vals:
                        if nmax <= nmin or nmax <= wmax:
                            continue
                        yield DcedParams(
                            kernel_size=k,
                            wide=CannyThresholds(wmin, wmax),
                            narrow=CannyThresholds(nmin, nmax),
                        )


def _params_key(p: DcedParams) -> tuple:
    return (p.kernel_size, p.wide.th_min, p.wide.th_max, p.narrow.th_min, p.narrow.th_max)


def separator_candidates(values: Sequence[float]) -> np.ndarray:
    """Midpoints between consecutive distinct values, plus one below and one above."""
    u = np.unique(np.asarray(values, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate(([u[0] - 1.0], mids, [u[-1] + 1.0]))


def _balanced_accuracies(
    candidates: np.ndarray, normal: np.ndarray, anomalous: np.ndarray
) -> np.ndarray:
    # rule: count > threshold => anomalous
    recall = (anomalous[None, :] > candidates[:, None]).mean(axis=1)
    specificity = (normal[None, :] <= candidates[:, None]).mean(axis=1)
    return (recall + specificity) / 2.0


def best_separator(
    counts_normal: Sequence[float], counts_anomalous: Sequence[float]
) -> tuple[float, float]:
    """Scalar threshold maximizing balanced accuracy of "count > threshold => anomalous".

    Ties go to the smallest candidate threshold.
    """
    normal = np.asarray(counts_normal, dtype=np.float64)
    anomalous = np.asarray(counts_anomalous, dtype=np.float64)
    if normal.size == 0 or anomalous.size == 0:
        raise ValueError("both classes must be non-empty")
    cands = separator_candidates(np.concatenate([normal, anomalous]))
    scores = _balanced_accuracies(cands, normal, anomalous)
    best = int(np.argmax(scores))  # first max = smallest threshold
    return float(cands[best]), float(scores[best])


class _CountCache:
    """Per-patch hysteresis counts keyed by (kernel_size, th_min, th_max)."""

    def __init__(self, patches: Sequence[ImageGray]):
        self.patches = patches
        self._suppressed: dict[int, list[np.ndarray]] = {}
        self._counts: dict[tuple, np.ndarray] = {}

    def counts(self, kernel_size: int, th: CannyThresholds) -> np.ndarray:
        key = (kernel_size, th.th_min, th.th_max)
        got = self._counts.get(key)
        if got is None:
            if kernel_size not in self._suppressed:
                self._suppressed[kernel_size] = [
                    suppressed_magnitude(p, kernel_size) for p in self.patches
                ]
            got = np.array(
                [int(hysteresis(s, th).sum()) for s in self._suppressed[kernel_size]],
                dtype=np.float64,
            )
            self._counts[key] = got
        return got

    def diff_counts(self, params: DcedParams) -> np.ndarray:
        # narrow edges are nested inside wide ones, so the difference map's
        # population is the difference of the two populations
        return self.counts(params.kernel_size, params.wide) - self.counts(
            params.kernel_size, params.narrow
        )


@dataclass(frozen=True)
class CandidateScore:
    """One grid tuple with its train-fitted separator and training score."""

    params: DcedParams
    count_threshold: float
    train_balanced_accuracy: float


def score_grid(
    train_patches: Sequence[tuple[ImageGray, Label]], spec: GridSpec = GridSpec()
) -> list[CandidateScore]:
    """Score every valid grid tuple on the training patches.

    Returns candidates sorted by training balanced accuracy descending,
    ties broken by lexicographically smallest (K, wmin, wmax, nmin, nmax).
    """
    labels = [label for _, label in train_patches]
    if NORMAL not in labels or ANOMALOUS not in labels:
        raise ValueError("training set must contain both classes")
    patches = [p for p, _ in train_patches]
    normal_idx = np.array([i for i, l in enumerate(labels) if l == NORMAL])
    anom_idx = np.array([i for i, l in enumerate(labels) if l == ANOMALOUS])
    cache = _CountCache(patches)

    scored: list[tuple[float, tuple, DcedParams, float]] = []
    for params in enumerate_grid(spec):
        diffs = cache.diff_counts(params)
        thr, ba = best_separator(diffs[normal_idx], diffs[anom_idx])
        scored.append((ba, _params_key(params), params, thr))
    if not scored:
        raise ValueError("grid produced no valid parameter tuples")
    # highest training score first; lexicographic tuple order breaks ties
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [CandidateScore(params, thr, ba) for ba, _, params, thr in scored]


def tune(
    train_patches: Sequence[tuple[ImageGray, Label]],
    spec: GridSpec = GridSpec(),
    val_patches: Sequence[tuple[ImageGray, Label]] | None = None,
    top_m: int = 25,
    ranked: Sequence[CandidateScore] | None = None,
) -> TunedDced:
    """Exhaustive constrained grid search for the best separating parameter tuple.

    Candidates are ranked by training balanced accuracy (ties: lexicographically
    smallest tuple). When ``val_patches`` is given, the ``top_m`` training
    candidates are re-ranked by validation balanced accuracy using their
    train-fitted separators, and the winner's validation score is recorded;
    otherwise the validation score mirrors the training score. ``ranked``
    accepts a precomputed score_grid result for the same patches and spec.
    """
    if ranked is None:
        ranked = score_grid(train_patches, spec)
    scored = [
        (c.train_balanced_accuracy, _params_key(c.params), c.params, c.count_threshold)
        for c in ranked
    ]

    if val_patches is None:
        train_ba, _, params, thr = scored[0]
        return TunedDced(params, thr, train_ba, train_ba)

    vlabels = [label for _, label in val_patches]
    if NORMAL not in vlabels or ANOMALOUS not in vlabels:
        raise ValueError("validation set must contain both classes")
    vcache = _CountCache([p for p, _ in val_patches])
    v_normal = np.array([i for i, l in enumerate(vlabels) if l == NORMAL])
    v_anom = np.array([i for i, l in enumerate(vlabels) if l == ANOMALOUS])

    best = None
    for train_ba, key, params, thr in scored[:top_m]:
        diffs = vcache.diff_counts(params)
        recall = float((diffs[v_anom] > thr).mean())
        specificity = float((diffs[v_normal] <= thr).mean())
        val_ba = (recall + specificity) / 2.0
        cand = (-val_ba, -train_ba, key, params, thr)
        if best is None or cand < best:
            best = cand
    assert best is not None
    neg_val, neg_train, _, params, thr = best
    return TunedDced(params, thr, -neg_train, -neg_val)


def classify_baseline(patch: ImageGray, model: TunedDced) -> Label:
    """Anomalous iff the patch's surviving-edge count exceeds the learned threshold."""
    count = dced(patch, model.params).diff_count
    return ANOMALOUS if count > model.count_threshold else NORMAL


def evaluate(predictions: Sequence[Label], truths: Sequence[Label]) -> Metrics:
    """Confusion counts and derived metrics, anomalous as the positive class."""
    if len(predictions) != len(truths):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise ValueError("cannot evaluate an empty label list")
    tp = sum(1 for p, t in zip(predictions, truths) if p == ANOMALOUS and t == ANOMALOUS)
    tn = sum(1 for p, t in zip(predictions, truths) if p == NORMAL and t == NORMAL)
    fp = sum(1 for p, t in zip(predictions, truths) if p == ANOMALOUS and t == NORMAL)
    fn = sum(1 for p, t in zip(predictions, truths) if p == NORMAL and t == ANOMALOUS)
    undefined = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    specificity = ratio(tn, tn + fp, "specificity")
    if precision + recall == 0.0:
        undefined.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    if "recall" in undefined or "specificity" in undefined:
        undefined.append("balanced_accuracy")
        balanced = 0.0
    else:
        balanced = (recall + specificity) / 2.0
    return Metrics(
        balanced_accuracy=balanced,
        f1=f1,
        precision=precision,
        recall=recall,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        undefined=tuple(undefined),
    )


def save_tuned(model: TunedDced, path: str | Path) -> None:
    doc = {
        "schema_version": TUNED_SCHEMA_VERSION,
        "kernel_size": model.params.kernel_size,
        "wth_min": model.params.wide.th_min,
        "wth_max": model.params.wide.th_max,
        "nth_min": model.params.narrow.th_min,
        "nth_max": model.params.narrow.th_max,
        "count_threshold": model.count_threshold,
        "train_ba": model.train_balanced_accuracy,
        "val_ba": model.val_balanced_accuracy,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_tuned(path: str | Path) -> TunedDced:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != TUNED_SCHEMA_VERSION:
        raise ValueError(f"unsupported tuned-model schema_version {doc.get('schema_version')!r}")
    params = DcedParams(
        kernel_size=int(doc["kernel_size"]),
        wide=CannyThresholds(float(doc["wth_min"]), float(doc["wth_max"])),
        narrow=CannyThresholds(float(doc["nth_min"]), float(doc["nth_max"])),
    )
    return TunedDced(
        params=params,
        count_threshold=float(doc["count_threshold"]),
        train_balanced_accuracy=float(doc["train_ba"]),
        val_balanced_accuracy=float(doc["val_ba"]),
    )
