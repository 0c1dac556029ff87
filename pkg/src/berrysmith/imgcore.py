"""Raster types and the low-level numeric kernels the rest of the package builds on.

Conventions used throughout: arrays are row-major with ``(row, col)`` indexing,
point-like quantities (centroids, axes, translations) are ``(x, y)`` with x along
columns and y along rows, and every border is handled by edge-value replication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from PIL import Image
from scipy import ndimage

if TYPE_CHECKING:
    from .masks import SegMask

# Rec. 601 luma weights.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# Ratio tolerance below which the two covariance eigenvalues count as equal.
DEGENERATE_RATIO_TOL = 1e-6


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ImageRgb:
    """8-bit RGB raster stored as (height, width, 3) uint8."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"ImageRgb wants (h, w, 3) data, got shape {d.shape}")
        if d.dtype != np.uint8:
            raise ValueError(f"ImageRgb wants uint8 data, got {d.dtype}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class ImageGray:
    """Single-channel raster, float64 intensities in [0, 255]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"ImageGray wants 2-D data, got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.all(np.isfinite(d)):
            raise ValueError("intensities must be finite")
        if d.min() < 0.0 or d.max() > 255.0:
            raise ValueError("intensities must lie in [0, 255]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-pixel image derivatives plus their polar form."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray

    @property
    def width(self) -> int:
        return self.gx.shape[1]

    @property
    def height(self) -> int:
        return self.gx.shape[0]


@dataclass(frozen=True)
class PrincipalAxis:
    """Dominant elongation direction of a binary shape.

    ``axis`` is a unit (x, y) vector canonicalized into the half plane
    x > 0 (ties: y > 0). ``degenerate`` marks shapes whose two covariance
    eigenvalues are equal to within tolerance (discs, squares); those get
    the conventional axis (1, 0).
    """

    centroid: tuple[float, float]
    axis: tuple[float, float]
    elongation: float
    degenerate: bool


def to_grayscale(img: ImageRgb) -> ImageGray:
    """Rec. 601 luminance: 0.299 R + 0.587 G + 0.114 B."""
    wr, wg, wb = GRAY_WEIGHTS
    rgb = img.data.astype(np.float64)
    lum = wr * rgb[:, :, 0] + wg * rgb[:, :, 1] + wb * rgb[:, :, 2]
    # weights sum to 1 so lum is within [0, 255] up to rounding noise
    return ImageGray(np.clip(lum, 0.0, 255.0))


def sigma_for_kernel(kernel_size: int) -> float:
    """Blur width used when only the kernel size is given: 0.3*((K-1)/2 - 1) + 0.8."""
    return 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8


def gaussian_taps(kernel_size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps of odd length ``kernel_size``."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {kernel_size}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = (kernel_size - 1) / 2.0
    x = np.arange(kernel_size, dtype=np.float64) - c
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(img: ImageGray, kernel_size: int, sigma: float | None = None) -> ImageGray:
    """Separable Gaussian smoothing with replicated borders.

    ``sigma`` defaults to :func:`sigma_for_kernel`. ``kernel_size`` 1 is the
    identity and returns the input unchanged.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {kernel_size}")
    if kernel_size == 1:
        return img
    if sigma is None:
        sigma = sigma_for_kernel(kernel_size)
    taps = gaussian_taps(kernel_size, sigma)
    out = ndimage.convolve1d(img.data, taps, axis=1, mode="nearest")
    out = ndimage.convolve1d(out, taps, axis=0, mode="nearest")
    # normalized kernel cannot leave [min, max], but guard float residue
    return ImageGray(np.clip(out, 0.0, 255.0))


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T.copy()


def sobel_gradients(img: ImageGray) -> GradientField:
    """3x3 Sobel derivatives with replicated borders.

    gx responds to intensity increasing to the right, gy to intensity
    increasing downward; ``direction`` is atan2(gy, gx).
    """
    if img.height < 3 or img.width < 3:
        raise ValueError(f"need at least a 3x3 image, got {img.height}x{img.width}")
    gx = ndimage.correlate(img.data, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(img.data, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    direction = np.arctan2(gy, gx)
    return GradientField(_freeze(gx), _freeze(gy), _freeze(mag), _freeze(direction))


def principal_axis(mask: "SegMask") -> PrincipalAxis:
    """PCA of a mask's foreground pixel coordinates.

    Returns the unit eigenvector of the 2x2 coordinate covariance that
    belongs to the larger eigenvalue, canonicalized so axis.x > 0
    (axis.y > 0 when axis.x == 0). Needs at least 3 foreground pixels.
    """
    dense = mask.to_dense()
    rows, cols = np.nonzero(dense)
    n = rows.size
    if n < 3:
        raise ValueError(f"principal_axis needs >= 3 foreground pixels, got {n}")
    x = cols.astype(np.float64)
    y = rows.astype(np.float64)
    cx = float(x.mean())
    cy = float(y.mean())
    dx = x - cx
    dy = y - cy
    cov = np.array(
        [
            [float(dx @ dx), float(dx @ dy)],
            [float(dx @ dy), float(dy @ dy)],
        ]
    ) / n
    evals, evecs = np.linalg.eigh(cov)  # ascending eigenvalues
    lo, hi = float(evals[0]), float(evals[1])
    elongation = math.inf if lo <= hi * 1e-15 else hi / lo
    degenerate = elongation < 1.0 + DEGENERATE_RATIO_TOL
    if degenerate:
        ax, ay = 1.0, 0.0
    else:
        v = evecs[:, 1]
        ax, ay = float(v[0]), float(v[1])
        if ax < 0.0 or (ax == 0.0 and ay < 0.0):
            ax, ay = -ax, -ay
    return PrincipalAxis(centroid=(cx, cy), axis=(ax, ay), elongation=elongation, degenerate=degenerate)


def load_rgb(path: str | Path) -> ImageRgb:
    with Image.open(path) as im:
        return ImageRgb(np.asarray(im.convert("RGB"), dtype=np.uint8))


def load_gray(path: str | Path) -> ImageGray:
    with Image.open(path) as im:
        return ImageGray(np.asarray(im.convert("L"), dtype=np.float64))


def save_png(img: ImageRgb | ImageGray | np.ndarray, path: str | Path) -> None:
    """Write an image (or a bool/uint8 plane) as an 8-bit PNG."""
    if isinstance(img, ImageRgb):
        arr = img.data
        mode = "RGB"
    elif isinstance(img, ImageGray):
        arr = np.clip(np.rint(img.data), 0, 255).astype(np.uint8)
        mode = "L"
    else:
        arr = np.asarray(img)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8) * 255
        arr = np.clip(arr, 0, 255).astype(np.uint8)
        mode = "L" if arr.ndim == 2 else "RGB"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def save_edge_png(plane: np.ndarray, path: str | Path) -> None:
    """Write a boolean edge plane as a 1-bit PNG."""
    arr = np.asarray(plane, dtype=bool).astype(np.uint8) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").convert("1").save(path, format="PNG")
