"""Run-length masks: geometry queries, set operations, and the canonical file.

Segments are stored as sorted [start, end) runs over the flattened raster,
so area, bounding box, centroid, and the principal axis come straight from
run arithmetic without materializing pixels. Mask sets serialize to a
canonical JSON byte form (sorted keys and ids, compact separators, one
trailing newline) that `masks-validate` enforces bit-for-bit, which is what
lets external tools produce interchangeable manifests.
"""

import math
from pathlib import Path

import numpy as np

from berrysmith.imgcore import principal_axis
from berrysmith.masks import (
    MaskSet,
    SegMask,
    decode_maskset,
    encode_maskset,
    erode,
    filter_masks,
    intersect,
)

OUT = Path(__file__).parent / "out" / "02_mask_toolkit"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(11)

    # an elongated diagonal band plus a random blob, both on a 24x24 raster
    yy, xx = np.mgrid[:24, :24]
    band = SegMask.from_dense(np.abs(yy - xx) <= 2, mask_id="band")
    blob = SegMask.from_dense(rng.random((24, 24)) < 0.2, mask_id="blob")

    for mask in (band, blob):
        pa = principal_axis(mask)
        r0, c0, r1, c1 = mask.bbox()
        print(
            f"{mask.mask_id}: area={mask.area}, bbox=({r0},{c0})-({r1},{c1}),"
            f" centroid=({pa.centroid[0]:.2f}, {pa.centroid[1]:.2f}),"
            f" axis angle={math.degrees(math.atan2(pa.axis[1], pa.axis[0])):.1f} deg,"
            f" elongation={pa.elongation:.2f}"
        )

    both = intersect(band, blob)
    overlap = 0 if both is None else both.area
    print(f"band & blob: {overlap} px (id {both.mask_id if both else '-'})")
    shrunk = erode(band, 1)
    print(f"band eroded by 1: {band.area} -> {shrunk.area} px")

    # round trip through the canonical byte form
    mask_set = MaskSet(source_image="images/demo.png", masks=(band, blob), generator="fixture")
    payload = encode_maskset(mask_set)
    path = OUT / "demo.masks.json"
    path.write_bytes(payload)
    again = decode_maskset(path.read_bytes())
    assert encode_maskset(again) == payload, "canonical bytes must be stable"
    print(f"manifest: {len(payload)} canonical bytes, round trip stable -> {path}")

    # area filtering keeps the larger half, then only masks strictly above
    # the original mean area
    kept = filter_masks(mask_set)
    print(f"filter_masks kept {[m.mask_id for m in kept.masks]} (top-half + mean-area rule)")


if __name__ == "__main__":
    main()
