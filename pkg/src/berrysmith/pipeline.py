"""Dataset orchestration: manifests, synthetic-sample generation, folds.

A dataset manifest lists labeled image patches grouped by the field image
they were cropped from. Generation walks the anomalous entries, pairs each
with a randomly chosen normal entry, moves its edgiest segments onto the
normal image's segments, and records full provenance per paste. Fold
splitting and the addition/substitution experiments operate purely on
manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blend import compute_alignment, paste_region, poisson_blend, warp
from .edges import DcedParams, masked_edge_stats
from .imgcore import ImageRgb, load_rgb, save_png, to_grayscale
from .masks import MaskSet, SegMask, decode_maskset, filter_masks, segment_fallback
from .tuner import ANOMALOUS, NORMAL, TunedDced

log = logging.getLogger("berrysmith.pipeline")

MANIFEST_SCHEMA_VERSION = 1
LABELS = (NORMAL, ANOMALOUS)

# one initial destination draw plus five resamples per pasted segment
MAX_DEST_TRIES = 6


@dataclass(frozen=True)
class ManifestEntry:
    """One labeled patch; ``source_image_group`` names the field image it came from."""

    path: str
    label: str
    source_image_group: str
    fold: int | None = None

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.fold is not None and self.fold < 0:
            raise ValueError("fold must be non-negative when assigned")


@dataclass(frozen=True)
class DatasetManifest:
    """Labeled corpus description; entry paths are unique and root-relative."""

    entries: tuple[ManifestEntry, ...]
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for e in self.entries:
            if e.path in seen:
                raise ValueError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)

    def by_label(self, label: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == label]


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for synthetic-sample generation.

    ``n_syn`` segments are pasted per anomalous input, accumulated into one
    output image; ``one_image_per_paste`` switches to the literal reading
    where every paste yields its own output. ``overlap_guard`` off disables
    the ``min_overlap`` rejection (empty intersections still reject).
    """

    n_syn: int = 1
    min_overlap: float = 0.5
    seed: int = 0
    gamma_mode: str = "sqrt_area"
    overlap_guard: bool = True
    one_image_per_paste: bool = False

    def __post_init__(self) -> None:
        if self.n_syn < 1:
            raise ValueError("n_syn must be >= 1")
        if not (0.0 <= self.min_overlap <= 1.0):
            raise ValueError("min_overlap must be in [0, 1]")
        if self.gamma_mode not in ("sqrt_area", "literal"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")


@dataclass(frozen=True)
class SyntheticRecord:
    """Provenance of one paste: where the segment came from, where it landed, how."""

    output_path: str
    source_anomalous_image: str
    source_mask_id: str
    destination_image: str
    destination_mask_id: str
    gamma: float
    phi: float
    signed_rotation: float
    overlap_ratio: float
    seed_stream: str
    dced_params_used: dict

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticRecord":
        return cls(**obj)


class SampleRejected(Exception):
    """Every segment of a sample was skipped; carries the per-attempt reasons."""

    def __init__(self, reasons: tuple[str, ...]):
        self.reasons = reasons
        super().__init__(f"sample rejected: {', '.join(reasons) or 'no usable masks'}")


@dataclass(frozen=True)
class Rejection:
    path: str
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class GenerationReport:
    manifest: DatasetManifest
    records: tuple[SyntheticRecord, ...]
    rejections: tuple[Rejection, ...]


# --------------------------------------------------------------------------
# manifest and record files


def manifest_to_json(manifest: DatasetManifest) -> dict:
    return {
        "schema_version": manifest.schema_version,
        "entries": [
            {
                "path": e.path,
                "label": e.label,
                "source_image_group": e.source_image_group,
                "fold": e.fold,
            }
            for e in manifest.entries
        ],
    }


def manifest_from_json(obj: dict) -> DatasetManifest:
    if not isinstance(obj, dict) or "entries" not in obj:
        raise ValueError("manifest must be an object with an 'entries' list")
    entries = []
    for raw in obj["entries"]:
        entries.append(
            ManifestEntry(
                path=raw["path"],
                label=raw["label"],
                source_image_group=raw["source_image_group"],
                fold=raw.get("fold"),
            )
        )
    return DatasetManifest(
        entries=tuple(entries),
        schema_version=obj.get("schema_version", MANIFEST_SCHEMA_VERSION),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_json(manifest), indent=2) + "\n", encoding="utf-8"
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    return manifest_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_records(records: list[SyntheticRecord] | tuple[SyntheticRecord, ...], path: str | Path) -> None:
    lines = [json.dumps(r.to_json(), separators=(",", ":")) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_records(path: str | Path) -> list[SyntheticRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(SyntheticRecord.from_json(json.loads(line)))
    return out


# --------------------------------------------------------------------------
# RNG streams


def stream_id(master_seed: int, path: str) -> str:
    """Stable identifier of a per-sample RNG stream, recorded in provenance."""
    return f"{master_seed}:{path}"


def derive_stream(master_seed: int, path: str) -> np.random.Generator:
    """Per-sample generator independent of scheduling order."""
    digest = hashlib.sha256(stream_id(master_seed, path).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


# --------------------------------------------------------------------------
# sample generation


def select_edgiest(
    masks: MaskSet, img: ImageRgb, params: DcedParams, n: int
) -> list[SegMask]:
    """Top ``n`` masks by texture-edge ratio, descending; mask_id breaks ties."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not masks.masks:
        raise ValueError("cannot rank an empty MaskSet")
    gray = to_grayscale(img)
    scored = [
        (masked_edge_stats(gray, m, params).edge_ratio, m) for m in masks.masks
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].mask_id))
    return [m for _, m in scored[:n]]


def _clip_interior(region: SegMask) -> SegMask | None:
    """Drop region pixels on the outer raster border (blend precondition)."""
    dense = region.to_dense()
    dense[0, :] = False
    dense[-1, :] = False
    dense[:, 0] = False
    dense[:, -1] = False
    return SegMask.from_dense(
        dense, mask_id=region.mask_id, source_image=region.source_image
    )


def _paste_one(
    base: ImageRgb,
    bad_img: ImageRgb,
    src_mask: SegMask,
    dst_pool: list[SegMask],
    draw,
    cfg: GenerationConfig,
    reasons: list[str],
):
    """Blend one source segment onto ``base``, retrying destinations.

    Returns (blended image, partial record) or None after MAX_DEST_TRIES.
    """
    min_overlap = cfg.min_overlap if cfg.overlap_guard else 0.0
    for _ in range(MAX_DEST_TRIES):
        dst = dst_pool[draw()]
        try:
            t = compute_alignment(src_mask, dst, scale_mode=cfg.gamma_mode)
        except ValueError:
            reasons.append("degenerate_mask")
            continue
        warped_img, warped_mask = warp(bad_img, src_mask, t, base.width, base.height)
        if warped_mask is None:
            reasons.append("off_canvas")
            continue
        pr = paste_region(warped_mask, dst, min_overlap)
        if pr is None:
            reasons.append("overlap")
            continue
        region = _clip_interior(pr.region)
        if region is None:
            reasons.append("border")
            continue
        blended = poisson_blend(base, warped_img, region)
        record = SyntheticRecord(
            output_path="",
            source_anomalous_image=src_mask.source_image,
            source_mask_id=src_mask.mask_id,
            destination_image=dst.source_image,
            destination_mask_id=dst.mask_id,
            gamma=t.gamma,
            phi=t.phi,
            signed_rotation=t.signed_rotation,
            overlap_ratio=pr.overlap_ratio,
            seed_stream="",
            dced_params_used={},
        )
        return blended, record
    return None


def _destination_drawer(n_pool: int, n_needed: int, rng: np.random.Generator):
    """Uniform draws: without replacement while the shuffled pool lasts."""
    order: deque[int] = deque()
    if n_pool >= n_needed:
        order.extend(int(i) for i in rng.permutation(n_pool))

    def draw() -> int:
        if order:
            return order.popleft()
        return int(rng.integers(0, n_pool))

    return draw


def generate_sample(
    bad_img: ImageRgb,
    bad_masks: MaskSet,
    good_img: ImageRgb,
    good_masks: MaskSet,
    cfg: GenerationConfig,
    params: DcedParams,
    rng: np.random.Generator,
) -> tuple[ImageRgb, list[SyntheticRecord]]:
    """Paste the n_syn edgiest bad segments into the good image, accumulating.

    Raises SampleRejected when every segment is skipped.
    """
    sources = select_edgiest(bad_masks, bad_img, params, cfg.n_syn)
    dst_pool = sorted(good_masks.masks, key=lambda m: m.mask_id)
    draw = _destination_drawer(len(dst_pool), cfg.n_syn, rng)
    current = good_img
    records: list[SyntheticRecord] = []
    reasons: list[str] = []
    for src in sources:
        out = _paste_one(current, bad_img, src, dst_pool, draw, cfg, reasons)
        if out is None:
            continue
        current, record = out
        records.append(record)
    if not records:
        raise SampleRejected(tuple(reasons))
    return current, records


def generate_sample_per_paste(
    bad_img: ImageRgb,
    bad_masks: MaskSet,
    good_img: ImageRgb,
    good_masks: MaskSet,
    cfg: GenerationConfig,
    params: DcedParams,
    rng: np.random.Generator,
) -> list[tuple[ImageRgb, SyntheticRecord]]:
    """Literal variant: each paste lands on a fresh copy of the good image."""
    sources = select_edgiest(bad_masks, bad_img, params, cfg.n_syn)
    dst_pool = sorted(good_masks.masks, key=lambda m: m.mask_id)
    draw = _destination_drawer(len(dst_pool), cfg.n_syn, rng)
    outputs: list[tuple[ImageRgb, SyntheticRecord]] = []
    reasons: list[str] = []
    for src in sources:
        out = _paste_one(good_img, bad_img, src, dst_pool, draw, cfg, reasons)
        if out is None:
            continue
        outputs.append(out)
    if not outputs:
        raise SampleRejected(tuple(reasons))
    return outputs


# --------------------------------------------------------------------------
# dataset-level generation


def mask_manifest_path(mask_root: str | Path, image_rel_path: str) -> Path:
    """Mask manifest location for an image: same relative path, .masks.json."""
    rel = Path(image_rel_path)
    return Path(mask_root) / rel.with_suffix(".masks.json")


def load_masks_for(
    mask_root: str | Path,
    image_rel_path: str,
    img: ImageRgb,
    allow_fallback: bool,
    fallback_min_area: int,
) -> MaskSet:
    """Read an image's mask manifest, or segment it directly when allowed."""
    path = mask_manifest_path(mask_root, image_rel_path)
    if path.is_file():
        return decode_maskset(path.read_bytes())
    if allow_fallback:
        return segment_fallback(img, min_area=fallback_min_area, source_image=image_rel_path)
    raise FileNotFoundError(f"mask manifest not found: {path}")


def _synthetic_rel_path(entry_path: str, index: int | None) -> str:
    rel = Path(entry_path)
    suffix = "_syn" if index is None else f"_syn{index}"
    return str(rel.with_name(rel.stem + suffix + ".png")).replace("\\", "/")


def generate_dataset(
    train_manifest: DatasetManifest,
    dataset_root: str | Path,
    mask_root: str | Path,
    out_root: str | Path,
    tuned: TunedDced,
    cfg: GenerationConfig,
    workers: int = 1,
    allow_fallback: bool = False,
    fallback_min_area: int = 64,
) -> GenerationReport:
    """Emit one synthetic image per anomalous training entry.

    Work items are independent per anomalous entry, each with its own RNG
    stream derived from (seed, entry path), so outputs are byte-identical
    for any worker count. Images are written under ``out_root`` mirroring
    the input layout; the returned manifest and records are sorted by
    output path.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    dataset_root = Path(dataset_root)
    out_root = Path(out_root)
    anomalies = train_manifest.by_label(ANOMALOUS)
    normals = train_manifest.by_label(NORMAL)
    if not anomalies:
        return GenerationReport(DatasetManifest(entries=()), (), ())
    if not normals:
        raise ValueError("no normal entries available as destinations")

    def process(entry: ManifestEntry):
        rng = derive_stream(cfg.seed, entry.path)
        good = normals[int(rng.integers(0, len(normals)))]
        bad_img = load_rgb(dataset_root / entry.path)
        good_img = load_rgb(dataset_root / good.path)
        bad_set = filter_masks(
            load_masks_for(mask_root, entry.path, bad_img, allow_fallback, fallback_min_area)
        )
        good_set = filter_masks(
            load_masks_for(mask_root, good.path, good_img, allow_fallback, fallback_min_area)
        )
        if not bad_set.masks:
            return entry.path, None, Rejection(entry.path, ("no_source_masks",))
        if not good_set.masks:
            return entry.path, None, Rejection(entry.path, ("no_destination_masks",))
        sid = stream_id(cfg.seed, entry.path)
        try:
            if cfg.one_image_per_paste:
                pastes = generate_sample_per_paste(
                    bad_img, bad_set, good_img, good_set, cfg, tuned.params, rng
                )
                outputs = [
                    (_synthetic_rel_path(entry.path, i), img, [rec])
                    for i, (img, rec) in enumerate(pastes)
                ]
            else:
                img, recs = generate_sample(
                    bad_img, bad_set, good_img, good_set, cfg, tuned.params, rng
                )
                outputs = [(_synthetic_rel_path(entry.path, None), img, recs)]
        except SampleRejected as exc:
            return entry.path, None, Rejection(entry.path, exc.reasons)
        results = []
        for rel_out, img, recs in outputs:
            dest = out_root / rel_out
            dest.parent.mkdir(parents=True, exist_ok=True)
            save_png(img, dest)
            stamped = [
                dataclasses.replace(
                    r,
                    output_path=rel_out,
                    seed_stream=sid,
                    dced_params_used=tuned.params.to_provenance(),
                )
                for r in recs
            ]
            results.append(
                (
                    rel_out,
                    ManifestEntry(
                        path=rel_out,
                        label=ANOMALOUS,
                        source_image_group=entry.source_image_group,
                    ),
                    stamped,
                )
            )
        return entry.path, results, None

    if workers == 1:
        raw = [process(e) for e in anomalies]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(process, anomalies))

    produced = []
    rejections = []
    for _, results, rejection in raw:
        if rejection is not None:
            log.warning("rejected %s: %s", rejection.path, ", ".join(rejection.reasons))
            rejections.append(rejection)
        else:
            produced.extend(results)
    produced.sort(key=lambda item: item[0])
    rejections.sort(key=lambda r: r.path)
    entries = tuple(item[1] for item in produced)
    records = tuple(r for item in produced for r in item[2])
    return GenerationReport(
        manifest=DatasetManifest(entries=entries),
        records=records,
        rejections=tuple(rejections),
    )


# --------------------------------------------------------------------------
# fold splitting and augmentation experiments


def split_folds(manifest: DatasetManifest, k: int, seed: int) -> DatasetManifest:
    """Assign folds to whole source_image_groups, stratified by label.

    All patches of one field image land in the same fold (leakage guard).
    A group counts as anomalous when any of its patches is. Groups are
    shuffled within each label and dealt round-robin, so per-class and
    total fold sizes stay within one group of balance.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    group_labels: dict[str, str] = {}
    for e in manifest.entries:
        if e.label == ANOMALOUS:
            group_labels[e.source_image_group] = ANOMALOUS
        else:
            group_labels.setdefault(e.source_image_group, NORMAL)
    strata = {
        label: sorted(g for g, lab in group_labels.items() if lab == label)
        for label in (ANOMALOUS, NORMAL)
    }
    for label, groups in strata.items():
        if groups and len(groups) < k:
            raise ValueError(
                f"need at least {k} groups with label {label!r}, found {len(groups)}"
            )
    rng = np.random.default_rng(seed)
    fold_of: dict[str, int] = {}
    cursor = 0
    for label in (ANOMALOUS, NORMAL):
        groups = list(strata[label])
        rng.shuffle(groups)
        for g in groups:
            fold_of[g] = cursor % k
            cursor += 1
    entries = tuple(
        dataclasses.replace(e, fold=fold_of[e.source_image_group])
        for e in manifest.entries
    )
    return DatasetManifest(entries=entries, schema_version=manifest.schema_version)


def augment_manifest(
    real: DatasetManifest,
    synthetic: DatasetManifest,
    mode: str,
    pct: float,
    seed: int,
) -> DatasetManifest:
    """Mix synthetic entries into a real manifest.

    addition: append floor(pct/100 * |synthetic|) sampled synthetic entries.
    substitution: swap floor(pct/100 * |real anomalous|) real anomalous
    entries for the same number of synthetic ones. Normal entries are never
    touched.
    """
    if mode not in ("addition", "substitution"):
        raise ValueError(f"mode must be 'addition' or 'substitution', got {mode!r}")
    if not (0.0 < pct <= 100.0):
        raise ValueError("pct must be in (0, 100]")
    rng = np.random.default_rng(seed)
    syn_sorted = sorted(synthetic.entries, key=lambda e: e.path)

    def sample(pool: list[ManifestEntry], n: int) -> list[ManifestEntry]:
        idx = rng.choice(len(pool), size=n, replace=False) if n else np.empty(0, int)
        return [pool[i] for i in sorted(int(i) for i in idx)]

    if mode == "addition":
        n_add = math.floor(pct / 100.0 * len(syn_sorted))
        return DatasetManifest(
            entries=real.entries + tuple(sample(syn_sorted, n_add)),
            schema_version=real.schema_version,
        )

    anomalous = [e for e in real.entries if e.label == ANOMALOUS]
    n_swap = math.floor(pct / 100.0 * len(anomalous))
    if len(syn_sorted) < n_swap:
        raise ValueError(
            f"substitution needs {n_swap} synthetic entries, pool has {len(syn_sorted)}"
        )
    drop = {e.path for e in sample(anomalous, n_swap)}
    kept = tuple(e for e in real.entries if e.path not in drop)
    return DatasetManifest(
        entries=kept + tuple(sample(syn_sorted, n_swap)),
        schema_version=real.schema_version,
    )
