"""Canny edge detection and the dual-threshold texture filter built on it.

The detector runs blur -> Sobel -> non-maximum suppression -> hysteresis.
Thresholds compare against gradient magnitude scaled by MAGNITUDE_SCALE
(dividing out the 3x3 stencil gain), so the usual [0, 250] threshold grid
spans the useful range of 8-bit input.

The dual filter runs the detector twice over one shared gradient pass with
nested threshold sets and subtracts the narrow (stricter) edge map from the
wide one; contour edges survive both passes and cancel, texture edges remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import ImageGray, gaussian_blur, sigma_for_kernel, sobel_gradients
from .masks import SegMask, erode as erode_mask

# Undoes the gain of the 3x3 derivative stencil before thresholding.
MAGNITUDE_SCALE = 0.25


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Binary edge plane."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data)
        if d.ndim != 2 or d.dtype != bool:
            raise ValueError("EdgeMap wants a 2-D boolean plane")
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class CannyThresholds:
    """Hysteresis pair: candidates must exceed th_min, seeds must exceed th_max."""

    th_min: float
    th_max: float

    def __post_init__(self) -> None:
        if not (0 <= self.th_min < self.th_max):
            raise ValueError(f"need 0 <= th_min < th_max, got ({self.th_min}, {self.th_max})")


@dataclass(frozen=True)
class DcedParams:
    """Blur kernel size plus the wide and narrow hysteresis threshold sets."""

    kernel_size: int
    wide: CannyThresholds
    narrow: CannyThresholds

    def __post_init__(self) -> None:
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 1, got {self.kernel_size}")
        if self.narrow.th_min < self.wide.th_min:
            raise ValueError("narrow th_min must be >= wide th_min")
        if self.narrow.th_max <= self.wide.th_max:
            raise ValueError("narrow th_max must be > wide th_max")

    def to_provenance(self) -> dict:
        return {
            "kernel_size": self.kernel_size,
            "sigma": sigma_for_kernel(self.kernel_size),
            "wth_min": self.wide.th_min,
            "wth_max": self.wide.th_max,
            "nth_min": self.narrow.th_min,
            "nth_max": self.narrow.th_max,
            "magnitude_scale": MAGNITUDE_SCALE,
        }


@dataclass(frozen=True, eq=False)
class DcedResult:
    wide: EdgeMap
    narrow: EdgeMap
    diff: EdgeMap
    wide_count: int
    narrow_count: int
    diff_count: int


@dataclass(frozen=True)
class MaskedEdgeStats:
    """Per-segment texture statistic: surviving edge pixels over segment area."""

    diff_count: int
    mask_count: int
    edge_ratio: float
    eroded_empty: bool = False


def suppressed_magnitude(img: ImageGray, kernel_size: int) -> np.ndarray:
    """Scaled gradient magnitude after blur and non-maximum suppression.

    NMS quantizes the gradient direction into 4 bins and keeps a pixel only
    if its magnitude beats the neighbor behind it and at least ties the one
    ahead (strict/non-strict split so plateau ties thin to one pixel).
    Off-raster neighbors read as 0.
    """
    blurred = gaussian_blur(img, kernel_size)
    grad = sobel_gradients(blurred)
    mag = grad.magnitude * MAGNITUDE_SCALE

    deg = np.degrees(grad.direction) % 180.0
    bin0 = (deg < 22.5) | (deg >= 157.5)
    bin45 = (deg >= 22.5) & (deg < 67.5)
    bin90 = (deg >= 67.5) & (deg < 112.5)
    bin135 = (deg >= 112.5) & (deg < 157.5)

    def shifted(dr: int, dc: int) -> np.ndarray:
        out = np.zeros_like(mag)
        h, w = mag.shape
        rs = slice(max(0, dr), min(h, h + dr))
        cs = slice(max(0, dc), min(w, w + dc))
        rd = slice(max(0, -dr), min(h, h - dr))
        cd = slice(max(0, -dc), min(w, w - dc))
        out[rd, cd] = mag[rs, cs]
        return out

    keep = np.zeros(mag.shape, dtype=bool)
    for bin_mask, (pr, pc) in (
        (bin0, (0, -1)),
        (bin45, (-1, -1)),
        (bin90, (-1, 0)),
        (bin135, (-1, 1)),
    ):
        prev = shifted(pr, pc)
        nxt = shifted(-pr, -pc)
        keep |= bin_mask & (mag > prev) & (mag >= nxt)
    return np.where(keep, mag, 0.0)


_EIGHT = np.ones((3, 3), dtype=bool)


def hysteresis(suppressed: np.ndarray, thresholds: CannyThresholds) -> np.ndarray:
    """Double threshold plus edge tracking over 8-connected components.

    A pixel is an edge iff its suppressed magnitude exceeds th_min and its
    weak component contains a pixel exceeding th_max.
    """
    weak = suppressed > thresholds.th_min
    strong = suppressed > thresholds.th_max
    if not strong.any():
        return np.zeros_like(weak)
    labels, _ = ndimage.label(weak, structure=_EIGHT)
    strong_ids = np.unique(labels[strong])
    strong_ids = strong_ids[strong_ids > 0]
    return np.isin(labels, strong_ids)


def canny(img: ImageGray, thresholds: CannyThresholds, kernel_size: int) -> EdgeMap:
    """Full edge detector; see module docstring for the stage order."""
    return EdgeMap(hysteresis(suppressed_magnitude(img, kernel_size), thresholds))


def dced(img: ImageGray, params: DcedParams) -> DcedResult:
    """Wide and narrow detector passes over one shared gradient computation."""
    suppressed = suppressed_magnitude(img, params.kernel_size)
    wide = hysteresis(suppressed, params.wide)
    narrow = hysteresis(suppressed, params.narrow)
    diff = wide & ~narrow
    return DcedResult(
        wide=EdgeMap(wide),
        narrow=EdgeMap(narrow),
        diff=EdgeMap(diff),
        wide_count=int(wide.sum()),
        narrow_count=int(narrow.sum()),
        diff_count=int(diff.sum()),
    )


def masked_edge_stats(
    img: ImageGray,
    mask: SegMask,
    params: DcedParams,
    erode_guard: bool = True,
) -> MaskedEdgeStats:
    """Texture edge ratio of one segment.

    The image is cropped to the mask's bounding box padded by the blur
    half-width, the dual filter runs on the crop, and surviving edge pixels
    are counted inside the mask eroded by (K-1)/2 + 1 so the segment's own
    contour (and its blur halo) cannot inflate the ratio. ``erode_guard``
    False counts inside the uneroded mask instead. The ratio denominator is
    always the full mask area. An erosion that empties the mask yields
    ratio 0 with ``eroded_empty`` set.
    """
    if (mask.width, mask.height) != (img.width, img.height):
        raise ValueError("mask dimensions must match the image")
    mask_count = mask.area
    half = (params.kernel_size - 1) // 2

    if erode_guard:
        counting = erode_mask(mask, half + 1)
        if counting is None:
            return MaskedEdgeStats(0, mask_count, 0.0, eroded_empty=True)
    else:
        counting = mask

    r0, c0, r1, c1 = mask.bbox()
    r0 = max(0, r0 - half)
    c0 = max(0, c0 - half)
    r1 = min(img.height, r1 + half)
    c1 = min(img.width, c1 + half)
    # the gradient stage needs at least 3x3; widen tiny crops within bounds
    while r1 - r0 < 3 and (r0 > 0 or r1 < img.height):
        r0, r1 = max(0, r0 - 1), min(img.height, r1 + 1)
    while c1 - c0 < 3 and (c0 > 0 or c1 < img.width):
        c0, c1 = max(0, c0 - 1), min(img.width, c1 + 1)
    crop = ImageGray(img.data[r0:r1, c0:c1])
    counting_crop = counting.to_dense()[r0:r1, c0:c1]

    result = dced(crop, params)
    diff_count = int((result.diff.data & counting_crop).sum())
    return MaskedEdgeStats(diff_count, mask_count, diff_count / mask_count)
