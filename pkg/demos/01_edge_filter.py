"""Texture edges versus contour edges with the dual-pass filter.

A wide-threshold pass keeps every edge the detector can find; a narrow
(stricter, nested) pass keeps only the strongest ones. The narrow map is
therefore a subset of the wide map, and their set difference drops shared
strong structure, which for a high-contrast object is its outline. The
difference map is the anomaly signal everything downstream is built on.
"""

from pathlib import Path

import numpy as np

from berrysmith.edges import CannyThresholds, DcedParams, dced, masked_edge_stats
from berrysmith.imgcore import ImageGray, save_edge_png, save_png, to_grayscale
from berrysmith.toydata import KNOWN_GOOD_PARAMS, make_berry_scene

OUT = Path(__file__).parent / "out" / "01_edge_filter"


def _square_patch() -> tuple[ImageGray, np.ndarray, np.ndarray]:
    """A bright speckled square on a dark field, plus outline/interior zones."""
    rng = np.random.default_rng(2)
    data = np.full((64, 64), 20.0)
    data[16:48, 16:48] = 235.0
    interior = np.zeros((64, 64), dtype=bool)
    interior[19:45, 19:45] = True
    data[interior] = np.clip(120.0 + rng.uniform(-115.0, 115.0, size=interior.sum()), 0, 255)
    outline = np.zeros((64, 64), dtype=bool)
    outline[14:50, 14:50] = True
    outline[20:44, 20:44] = False
    return ImageGray(data), outline, interior


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    # hand-built patch: the narrow pass keeps the square's outline and
    # nothing else, so the difference is almost pure interior texture
    patch, outline, interior = _square_patch()
    params = DcedParams(
        kernel_size=3,
        wide=CannyThresholds(25.0, 75.0),
        narrow=CannyThresholds(75.0, 140.0),
    )
    result = dced(patch, params)
    print(f"square patch, wide=(25,75) narrow=(75,140):")
    print(f"  wide:   {result.wide_count} px (outline + texture)")
    print(
        f"  narrow: {result.narrow_count} px,"
        f" {int((result.narrow.data & outline).sum())} on the outline,"
        f" {int((result.narrow.data & interior).sum())} in the interior"
    )
    print(
        f"  diff:   {result.diff_count} px,"
        f" {int((result.diff.data & interior).sum())} in the interior"
    )
    assert result.diff_count == result.wide_count - result.narrow_count
    save_png(patch, OUT / "square.png")
    save_edge_png(result.wide.data, OUT / "square_wide.png")
    save_edge_png(result.narrow.data, OUT / "square_narrow.png")
    save_edge_png(result.diff.data, OUT / "square_diff.png")

    # fixture berry scene under the pipeline's known-good parameters; here
    # the narrow pass is empty by design (gentle contours), so per-segment
    # scoring relies on the eroded counting region to exclude outlines
    scene, masks = make_berry_scene(160, 3, textured=True, rng=np.random.default_rng(7))
    gray = to_grayscale(scene)
    save_png(scene, OUT / "scene.png")
    result = dced(gray, KNOWN_GOOD_PARAMS)
    print(
        f"\nberry scene under known-good params: wide={result.wide_count},"
        f" narrow={result.narrow_count}, diff={result.diff_count}"
    )
    save_edge_png(result.diff.data, OUT / "scene_diff.png")

    print("per-berry texture ratios (counted inside the eroded mask):")
    for mask in masks.masks:
        stats = masked_edge_stats(gray, mask, KNOWN_GOOD_PARAMS)
        print(
            f"  {mask.mask_id}: diff={stats.diff_count:4d}"
            f"  area={stats.mask_count:5d}  ratio={stats.edge_ratio:.4f}"
        )

    smooth, smooth_masks = make_berry_scene(160, 3, textured=False, rng=np.random.default_rng(7))
    smooth_gray = to_grayscale(smooth)
    worst = max(
        masked_edge_stats(smooth_gray, m, KNOWN_GOOD_PARAMS).diff_count
        for m in smooth_masks.masks
    )
    print(f"smooth-scene worst per-berry diff count: {worst}")

    # nesting is not optional: thresholds that are not nested are rejected
    try:
        DcedParams(
            kernel_size=3,
            wide=CannyThresholds(25.0, 75.0),
            narrow=CannyThresholds(10.0, 60.0),
        )
    except ValueError as err:
        print(f"non-nested params rejected: {err}")

    print(f"\nwrote patches and edge maps to {OUT}")


if __name__ == "__main__":
    main()
