"""Writer for the canonical mask-manifest byte format.

The contract (pinned in the berrysmith README): UTF-8 JSON with keys in the
order schema_version, source_image, width, height, generator, masks; each
mask has mask_id, area, runs in that order; masks sorted by mask_id; runs
are [start, length] pairs over the row-major flattened raster, sorted,
non-overlapping, touching runs merged; compact separators, ensure_ascii
False, one trailing newline. A validator must be able to decode a file,
re-encode it, and get the same bytes back.
"""

from __future__ import annotations

import json

import numpy as np

SCHEMA_VERSION = 1
GENERATOR = "external_model"


def dense_to_runs(dense: np.ndarray) -> list[list[int]]:
    """Row-major [start, length] runs of a boolean plane.

    Runs come out sorted by start with touching runs merged, which is what
    the canonical form requires.
    """
    flat = np.asarray(dense, dtype=bool).ravel()
    if not flat.any():
        return []
    padded = np.concatenate(([False], flat, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    return [[int(s), int(e - s)] for s, e in zip(starts, ends)]


def manifest_bytes(
    source_image: str,
    width: int,
    height: int,
    masks: list[tuple[str, list[list[int]]]],
    generator: str = GENERATOR,
) -> bytes:
    """Canonical manifest bytes for (mask_id, runs) pairs on one image."""
    if width < 1 or height < 1:
        raise ValueError("raster must be at least 1x1")
    ids = [mask_id for mask_id, _ in masks]
    if len(set(ids)) != len(ids):
        raise ValueError("mask ids must be unique within a manifest")
    body = []
    for mask_id, runs in sorted(masks, key=lambda pair: pair[0]):
        if not runs:
            raise ValueError(f"mask {mask_id!r} has no pixels")
        for (s, l), nxt in zip(runs, runs[1:] + [None]):
            if l < 1 or s < 0 or s + l > width * height:
                raise ValueError(f"mask {mask_id!r} run [{s},{l}] outside the raster")
            if nxt is not None and nxt[0] <= s + l:
                raise ValueError(f"mask {mask_id!r} runs must be sorted, disjoint, merged")
        body.append(
            {
                "mask_id": mask_id,
                "area": sum(l for _, l in runs),
                "runs": [[int(s), int(l)] for s, l in runs],
            }
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "source_image": source_image,
        "width": width,
        "height": height,
        "generator": generator,
        "masks": body,
    }
    return (json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")
