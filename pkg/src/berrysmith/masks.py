"""Binary segment masks: run-length representation, codec, filtering and geometry.

Masks are stored as (start, length) runs over row-major pixel offsets. The
JSON manifest format (one file per image) is canonical: masks sorted by id,
runs sorted by start, fixed key order, compact separators, trailing newline —
so equal mask sets always encode to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .imgcore import ImageRgb, to_grayscale

SCHEMA_VERSION = 1

GENERATORS = ("external_model", "fallback", "fixture")


class MaskFormatError(ValueError):
    """Raised for malformed mask manifests; carries a byte offset when known."""

    def __init__(self, reason: str, offset: int | None = None):
        self.reason = reason
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{reason}{where}")


def _as_runs(runs) -> np.ndarray:
    arr = np.asarray(runs, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"runs must be an (n, 2) array of (start, length), got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SegMask:
    """One binary segment tied to a source image, RLE over row-major offsets."""

    width: int
    height: int
    runs: np.ndarray
    mask_id: str
    source_image: str = ""

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("mask raster must be at least 1x1")
        arr = _as_runs(self.runs)
        if arr.shape[0] == 0:
            raise ValueError("mask must contain at least one run (area >= 1)")
        starts, lengths = arr[:, 0], arr[:, 1]
        if np.any(lengths < 1):
            raise ValueError("run lengths must be >= 1")
        if np.any(starts < 0) or np.any(starts + lengths > self.width * self.height):
            raise ValueError("runs must lie within the raster")
        ends = starts + lengths
        if np.any(starts[1:] < ends[:-1]):
            raise ValueError("runs must be sorted by start and non-overlapping")
        # merge touching runs so equal pixel content always has identical runs
        touching = starts[1:] == ends[:-1]
        if np.any(touching):
            merged: list[list[int]] = [[int(starts[0]), int(lengths[0])]]
            for s, l in zip(starts[1:], lengths[1:]):
                if int(s) == merged[-1][0] + merged[-1][1]:
                    merged[-1][1] += int(l)
                else:
                    merged.append([int(s), int(l)])
            arr = np.array(merged, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "runs", arr)

    @property
    def area(self) -> int:
        return int(self.runs[:, 1].sum())

    def to_dense(self) -> np.ndarray:
        flat = np.zeros(self.width * self.height, dtype=bool)
        for start, length in self.runs:
            flat[start : start + length] = True
        return flat.reshape(self.height, self.width)

    @classmethod
    def from_dense(
        cls, dense: np.ndarray, mask_id: str, source_image: str = ""
    ) -> "SegMask | None":
        """Build a mask from a boolean (h, w) plane; None when empty."""
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 2:
            raise ValueError("dense mask must be 2-D")
        runs = dense_to_runs(dense)
        if runs.shape[0] == 0:
            return None
        h, w = dense.shape
        return cls(width=w, height=h, runs=runs, mask_id=mask_id, source_image=source_image)

    def bbox(self) -> tuple[int, int, int, int]:
        """Foreground bounding box as (row0, col0, row1, col1), exclusive stop."""
        starts = self.runs[:, 0]
        ends = starts + self.runs[:, 1] - 1
        rows0 = starts // self.width
        rows1 = ends // self.width
        dense_cols_needed = np.any(rows0 != rows1)
        if dense_cols_needed:
            # a run wrapping rows spans the full width on the wrapped rows
            c0, c1 = 0, self.width
        else:
            c0 = int((starts % self.width).min())
            c1 = int((ends % self.width).max()) + 1
        return int(rows0.min()), c0, int(rows1.max()) + 1, c1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.mask_id == other.mask_id
            and self.source_image == other.source_image
            and np.array_equal(self.runs, other.runs)
        )


def dense_to_runs(dense: np.ndarray) -> np.ndarray:
    """Row-major (start, length) runs of a boolean plane."""
    flat = np.asarray(dense, dtype=bool).ravel()
    if not flat.any():
        return np.zeros((0, 2), dtype=np.int64)
    padded = np.concatenate(([False], flat, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    return np.stack([starts, ends - starts], axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class MaskSet:
    """All segments extracted from one image."""

    source_image: str
    masks: tuple[SegMask, ...]
    generator: str
    width: int | None = None
    height: int | None = None

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        masks = tuple(self.masks)
        object.__setattr__(self, "masks", masks)
        if masks:
            w, h = masks[0].width, masks[0].height
            for m in masks:
                if (m.width, m.height) != (w, h):
                    raise ValueError("all masks in a set must share raster dimensions")
            ids = [m.mask_id for m in masks]
            if len(set(ids)) != len(ids):
                raise ValueError("mask ids must be unique within a set")
            object.__setattr__(self, "width", w)
            object.__setattr__(self, "height", h)
        elif self.width is None or self.height is None:
            raise ValueError("an empty MaskSet must carry explicit width/height")

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MaskSet):
            return NotImplemented
        return (
            self.source_image == other.source_image
            and self.generator == other.generator
            and (self.width, self.height) == (other.width, other.height)
            and sorted(self.masks, key=lambda m: m.mask_id)
            == sorted(other.masks, key=lambda m: m.mask_id)
        )


def area(mask: SegMask) -> int:
    return mask.area


def filter_masks(mask_set: MaskSet) -> MaskSet:
    """Keep the larger half of the set, then only masks above the original mean area.

    Sorts by area descending (stable), keeps the first ceil(n/2), and from
    those keeps masks whose area strictly exceeds the mean area of the
    ORIGINAL set. The result may be empty.
    """
    masks = list(mask_set.masks)
    if not masks:
        return mask_set
    mean_area = sum(m.area for m in masks) / len(masks)
    by_area = sorted(masks, key=lambda m: -m.area)
    top_half = by_area[: (len(masks) + 1) // 2]
    kept = tuple(m for m in top_half if m.area > mean_area)
    return MaskSet(
        source_image=mask_set.source_image,
        masks=kept,
        generator=mask_set.generator,
        width=mask_set.width,
        height=mask_set.height,
    )


def intersect(a: SegMask, b: SegMask) -> SegMask | None:
    """Run-length intersection; None when the overlap is empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    out: list[tuple[int, int]] = []
    i = j = 0
    ra, rb = a.runs, b.runs
    while i < len(ra) and j < len(rb):
        a0, a1 = int(ra[i, 0]), int(ra[i, 0] + ra[i, 1])
        b0, b1 = int(rb[j, 0]), int(rb[j, 0] + rb[j, 1])
        lo, hi = max(a0, b0), min(a1, b1)
        if lo < hi:
            out.append((lo, hi - lo))
        if a1 <= b1:
            i += 1
        else:
            j += 1
    if not out:
        return None
    return SegMask(
        width=a.width,
        height=a.height,
        runs=np.array(out, dtype=np.int64),
        mask_id=f"{a.mask_id}&{b.mask_id}",
        source_image=b.source_image or a.source_image,
    )


def erode(mask: SegMask, radius: int) -> SegMask | None:
    """Morphological erosion with a (2r+1)-square element; None when emptied."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    eroded = ndimage.binary_erosion(mask.to_dense(), structure=structure, border_value=0)
    return SegMask.from_dense(eroded, mask.mask_id, mask.source_image)


def otsu_threshold(gray: np.ndarray) -> int:
    """Otsu's threshold over a 256-bin histogram of rounded intensities."""
    vals = np.clip(np.rint(np.asarray(gray, dtype=np.float64)), 0, 255).astype(np.int64)
    hist = np.bincount(vals.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    w1 = total - w0
    cum = np.cumsum(hist * np.arange(256))
    mean_total = cum[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = cum / w0
        mu1 = (mean_total - cum) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.nan_to_num(between, nan=0.0, posinf=0.0, neginf=0.0)
    return int(np.argmax(between))


_EIGHT = np.ones((3, 3), dtype=bool)


def segment_fallback(img: ImageRgb, min_area: int, source_image: str = "") -> MaskSet:
    """Crude self-contained segmenter: Otsu on luminance, 8-connected components.

    Meant for fixtures and demos, not production segmentation quality.
    """
    lum = to_grayscale(img).data
    binary = lum > otsu_threshold(lum)
    labels, n = ndimage.label(binary, structure=_EIGHT)
    masks = []
    for lab in range(1, n + 1):
        component = labels == lab
        if int(component.sum()) < min_area:
            continue
        m = SegMask.from_dense(component, mask_id=f"cc_{len(masks):03d}", source_image=source_image)
        if m is not None:
            masks.append(m)
    return MaskSet(
        source_image=source_image,
        masks=tuple(masks),
        generator="fallback",
        width=img.width,
        height=img.height,
    )


def encode_maskset(mask_set: MaskSet) -> bytes:
    """Canonical JSON manifest bytes for a mask set."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "source_image": mask_set.source_image,
        "width": mask_set.width,
        "height": mask_set.height,
        "generator": mask_set.generator,
        "masks": [
            {
                "mask_id": m.mask_id,
                "area": m.area,
                "runs": [[int(s), int(l)] for s, l in m.runs],
            }
            for m in sorted(mask_set.masks, key=lambda m: m.mask_id)
        ],
    }
    return (json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


def _require(cond: bool, reason: str) -> None:
    if not cond:
        raise MaskFormatError(reason)


def decode_maskset(payload: bytes) -> MaskSet:
    """Parse and validate manifest bytes; raises MaskFormatError with offset/reason."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise MaskFormatError(f"not valid UTF-8: {e.reason}", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise MaskFormatError(f"invalid JSON: {e.msg}", offset=e.pos) from e
    _require(isinstance(doc, dict), "top-level value must be an object")
    _require(doc.get("schema_version") == SCHEMA_VERSION,
             f"unsupported schema_version {doc.get('schema_version')!r}")
    for key in ("source_image", "width", "height", "generator", "masks"):
        _require(key in doc, f"missing field {key!r}")
    width, height = doc["width"], doc["height"]
    _require(isinstance(width, int) and isinstance(height, int) and width >= 1 and height >= 1,
             "width/height must be positive integers")
    _require(doc["generator"] in GENERATORS, f"unknown generator {doc['generator']!r}")
    _require(isinstance(doc["masks"], list), "masks must be a list")
    masks = []
    for idx, entry in enumerate(doc["masks"]):
        _require(isinstance(entry, dict), f"masks[{idx}] must be an object")
        for key in ("mask_id", "area", "runs"):
            _require(key in entry, f"masks[{idx}] missing field {key!r}")
        _require(isinstance(entry["mask_id"], str), f"masks[{idx}].mask_id must be a string")
        runs = entry["runs"]
        _require(isinstance(runs, list) and all(
            isinstance(r, list) and len(r) == 2 and all(isinstance(v, int) for v in r)
            for r in runs
        ), f"masks[{idx}].runs must be a list of [start, length] integer pairs")
        try:
            mask = SegMask(
                width=width,
                height=height,
                runs=np.array(runs, dtype=np.int64).reshape(-1, 2),
                mask_id=entry["mask_id"],
                source_image=doc["source_image"],
            )
        except ValueError as e:
            raise MaskFormatError(f"masks[{idx}] ({entry['mask_id']!r}): {e}") from e
        _require(entry["area"] == mask.area,
                 f"masks[{idx}] declared area {entry['area']} != run total {mask.area}")
        masks.append(mask)
    try:
        return MaskSet(
            source_image=doc["source_image"],
            masks=tuple(masks),
            generator=doc["generator"],
            width=width,
            height=height,
        )
    except ValueError as e:
        raise MaskFormatError(str(e)) from e
