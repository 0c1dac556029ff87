"""Geometric alignment of one segment onto another, and Poisson compositing.

Alignment scales the source so its area matches the destination (area ratio
gamma; linear scale sqrt(gamma) by default), rotates its principal axis line
onto the destination's by the minimal-magnitude rotation, and moves centroid
onto centroid. Compositing solves the discrete Poisson equation over the paste
region with the source's gradients as guidance and the destination as
Dirichlet boundary, by plain row-major Gauss-Seidel sweeps with successive
over-relaxation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgcore import ImageRgb, principal_axis, save_png
from .masks import SegMask, intersect

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

SOR_OMEGA = 1.9
SOR_TOL = 1e-6
SOR_MAX_SWEEPS = 10_000

SCALE_MODES = ("sqrt_area", "literal")


class ConvergenceError(RuntimeError):
    """Poisson solve did not reach the residual tolerance."""

    def __init__(self, residual: float, sweeps: int):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(f"no convergence after {sweeps} sweeps (relative residual {residual:.3e})")


@dataclass(frozen=True)
class AlignmentTransform:
    """Similarity transform mapping a source mask onto a destination mask.

    ``gamma`` is the destination/source area ratio; ``phi`` the unsigned angle
    between the principal axes; ``signed_rotation`` the minimal rotation taking
    the source axis line onto the destination axis line (0 when either axis is
    degenerate); ``translation`` moves the source centroid onto the
    destination centroid.
    """

    gamma: float
    linear_scale: float
    phi: float
    signed_rotation: float
    translation: tuple[float, float]
    scale_mode: str = "sqrt_area"

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.linear_scale <= 0:
            raise ValueError("gamma and linear_scale must be positive")
        if not (0.0 <= self.phi <= math.pi + 1e-12):
            raise ValueError(f"phi must be in [0, pi], got {self.phi}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}")


@dataclass(frozen=True)
class PasteRegion:
    """Intersection of the warped source mask with the destination mask."""

    region: SegMask
    overlap_ratio: float


def mask_centroid(mask: SegMask) -> tuple[float, float]:
    """Foreground centroid in (x, y) sub-pixel coordinates, straight from the runs."""
    total = 0
    sx = 0.0
    sy = 0.0
    w = mask.width
    # runs may wrap rows; expand per-row segments
    for start, length in mask.runs:
        start, length = int(start), int(length)
        end = start + length
        while start < end:
            r, c = divmod(start, w)
            seg = min(end - start, w - c)
            total += seg
            sy += r * seg
            sx += seg * (c + (seg - 1) / 2.0)
            start += seg
    return sx / total, sy / total


def compute_alignment(
    src: SegMask, dst: SegMask, scale_mode: str = "sqrt_area"
) -> AlignmentTransform:
    """Area-matching scale, axis-line rotation, and centroid translation."""
    pa_src = principal_axis(src)
    pa_dst = principal_axis(dst)
    gamma = dst.area / src.area
    if scale_mode == "sqrt_area":
        linear_scale = math.sqrt(gamma)
    elif scale_mode == "literal":
        linear_scale = gamma
    else:
        raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
    zsx, zsy = pa_src.axis
    zdx, zdy = pa_dst.axis
    dot = max(-1.0, min(1.0, zsx * zdx + zsy * zdy))
    phi = math.acos(dot)
    if pa_src.degenerate or pa_dst.degenerate:
        signed = 0.0
    else:
        cross = zsx * zdy - zsy * zdx
        signed = math.atan2(cross, dot)
        # axes are orientationless lines: fold onto the shorter rotation
        if signed > math.pi / 2:
            signed -= math.pi
        elif signed < -math.pi / 2:
            signed += math.pi
    translation = (
        pa_dst.centroid[0] - pa_src.centroid[0],
        pa_dst.centroid[1] - pa_src.centroid[1],
    )
    return AlignmentTransform(
        gamma=gamma,
        linear_scale=linear_scale,
        phi=phi,
        signed_rotation=signed,
        translation=translation,
        scale_mode=scale_mode,
    )


def warp(
    src_img: ImageRgb,
    src_mask: SegMask,
    transform: AlignmentTransform,
    canvas_w: int,
    canvas_h: int,
) -> tuple[ImageRgb, SegMask | None]:
    """Apply the similarity transform by inverse mapping onto a new canvas.

    Image pixels are sampled bilinearly with replicate clamping; the mask is
    sampled nearest-neighbor, and coordinates mapping outside the source
    raster are background. A mask warped entirely off-canvas yields None.
    """
    if canvas_w < 1 or canvas_h < 1:
        raise ValueError("canvas must be at least 1x1")
    cx, cy = mask_centroid(src_mask)
    ox = cx + transform.translation[0]
    oy = cy + transform.translation[1]
    inv = 1.0 / transform.linear_scale
    cos_t = math.cos(transform.signed_rotation)
    sin_t = math.sin(transform.signed_rotation)

    qx, qy = np.meshgrid(
        np.arange(canvas_w, dtype=np.float64), np.arange(canvas_h, dtype=np.float64)
    )
    dx = qx - ox
    dy = qy - oy
    px = cx + inv * (cos_t * dx + sin_t * dy)
    py = cy + inv * (-sin_t * dx + cos_t * dy)

    h, w = src_img.height, src_img.width
    pxc = np.clip(px, 0.0, w - 1.0)
    pyc = np.clip(py, 0.0, h - 1.0)
    x0 = np.floor(pxc).astype(np.intp)
    y0 = np.floor(pyc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (pxc - x0)[..., None]
    fy = (pyc - y0)[..., None]
    src = src_img.data.astype(np.float64)
    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
    bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    warped = (1.0 - fy) * top + fy * bot
    warped_img = ImageRgb(np.clip(np.rint(warped), 0, 255).astype(np.uint8))

    xn = np.rint(px).astype(np.intp)
    yn = np.rint(py).astype(np.intp)
    inside = (xn >= 0) & (xn < w) & (yn >= 0) & (yn < h)
    src_dense = src_mask.to_dense()
    warped_dense = np.zeros((canvas_h, canvas_w), dtype=bool)
    warped_dense[inside] = src_dense[yn[inside], xn[inside]]
    warped_mask = SegMask.from_dense(
        warped_dense, mask_id=f"{src_mask.mask_id}@warp", source_image=src_mask.source_image
    )
    return warped_img, warped_mask


def paste_region(
    warped_mask: SegMask, dst_mask: SegMask, min_overlap: float
) -> PasteRegion | None:
    """Clip the warped mask to the destination mask; None below the overlap bar."""
    region = intersect(warped_mask, dst_mask)
    if region is None:
        return None
    ratio = region.area / dst_mask.area
    if ratio < min_overlap:
        return None
    return PasteRegion(region=region, overlap_ratio=ratio)


def _sor_solve(f, lap_g, region, omega, threshold, max_sweeps):
    """Row-major Gauss-Seidel/SOR; residual is checked before each sweep.

    ``f`` holds Dirichlet values at non-region pixels and is updated in place
    at region pixels. Region pixels never touch the array border.
    """
    h, w = f.shape
    sweeps = 0
    while True:
        acc = 0.0
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                if region[r, c]:
                    res = lap_g[r, c] - (
                        4.0 * f[r, c] - f[r - 1, c] - f[r + 1, c] - f[r, c - 1] - f[r, c + 1]
                    )
                    acc += res * res
        residual = math.sqrt(acc)
        if residual <= threshold or sweeps >= max_sweeps:
            return residual, sweeps
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                if region[r, c]:
                    gs = 0.25 * (
                        f[r - 1, c] + f[r + 1, c] + f[r, c - 1] + f[r, c + 1] + lap_g[r, c]
                    )
                    f[r, c] = (1.0 - omega) * f[r, c] + omega * gs
        sweeps += 1


sor_solve_python = _sor_solve
if _njit is not None:
    _sor_solve = _njit(cache=True, nogil=True)(_sor_solve)


def _laplacian(plane: np.ndarray) -> np.ndarray:
    """4 p - sum of N4 neighbors, with replicate borders (interior use only)."""
    padded = np.pad(plane, 1, mode="edge")
    return (
        4.0 * plane
        - padded[:-2, 1:-1]
        - padded[2:, 1:-1]
        - padded[1:-1, :-2]
        - padded[1:-1, 2:]
    )


def solve_poisson_plane(
    dst_plane: np.ndarray,
    src_plane: np.ndarray,
    region: np.ndarray,
    omega: float = SOR_OMEGA,
    tol: float = SOR_TOL,
    max_sweeps: int = SOR_MAX_SWEEPS,
) -> tuple[np.ndarray, float, int]:
    """Solve one channel's Poisson system over ``region``.

    Returns (full plane with the solved region, relative residual, sweeps).
    The iteration starts from the destination values, so the result depends
    on the source only through its gradients.
    """
    region = np.asarray(region, dtype=bool)
    dst_plane = np.asarray(dst_plane, dtype=np.float64)
    src_plane = np.asarray(src_plane, dtype=np.float64)
    if not region.any():
        return dst_plane.copy(), 0.0, 0
    rows, cols = np.nonzero(region)
    h, w = region.shape
    if rows.min() < 1 or cols.min() < 1 or rows.max() >= h - 1 or cols.max() >= w - 1:
        raise ValueError("region must be strictly inside the raster")

    r0, r1 = rows.min() - 1, rows.max() + 2
    c0, c1 = cols.min() - 1, cols.max() + 2
    reg = region[r0:r1, c0:c1]
    dst = dst_plane[r0:r1, c0:c1]
    src = src_plane[r0:r1, c0:c1]

    lap_g = _laplacian(src)
    # right-hand-side norm of the reduced system (boundary terms folded in)
    boundary = np.where(reg, 0.0, dst)
    padded = np.pad(boundary, 1, mode="constant")
    nbr_sum = padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
    b = lap_g + nbr_sum
    denom = float(np.sqrt((b[reg] ** 2).sum()))
    threshold = tol * denom if denom > 0 else 1e-9

    f = dst.copy()
    residual, sweeps = _sor_solve(f, lap_g, reg, omega, threshold, max_sweeps)
    rel = residual / denom if denom > 0 else residual
    out = dst_plane.copy()
    out[r0:r1, c0:c1] = np.where(reg, f, out[r0:r1, c0:c1])
    return out, rel, sweeps


_DEBUG_DIR: Path | None = None
_debug_counter = itertools.count()


def set_debug_dump_dir(path: str | Path | None) -> None:
    """Dump per-blend guidance and residual planes as PNGs under ``path``."""
    global _DEBUG_DIR
    _DEBUG_DIR = Path(path) if path is not None else None


def _normalized_plane(plane: np.ndarray) -> np.ndarray:
    peak = float(np.abs(plane).max())
    if peak == 0.0:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.clip(np.rint(np.abs(plane) / peak * 255.0), 0, 255).astype(np.uint8)


def _dump_blend_debug(src: np.ndarray, out: np.ndarray, dense: np.ndarray) -> None:
    n = next(_debug_counter)
    guidance = np.zeros(dense.shape, dtype=np.float64)
    residual = np.zeros(dense.shape, dtype=np.float64)
    for ch in range(3):
        lap_g = _laplacian(src[:, :, ch].astype(np.float64))
        lap_f = _laplacian(out[:, :, ch])
        guidance += np.abs(lap_g) / 3.0
        residual += np.abs(lap_g - lap_f) / 3.0
    guidance[~dense] = 0.0
    residual[~dense] = 0.0
    save_png(_normalized_plane(guidance), _DEBUG_DIR / f"blend_{n:05d}_guidance.png")
    save_png(_normalized_plane(residual), _DEBUG_DIR / f"blend_{n:05d}_residual.png")


def poisson_blend(
    dst_img: ImageRgb,
    src_img: ImageRgb,
    region: SegMask,
    tol: float = SOR_TOL,
    max_sweeps: int = SOR_MAX_SWEEPS,
) -> ImageRgb:
    """Seamlessly merge the source into the destination over ``region``.

    Pixels outside the region are copied from the destination unchanged;
    values are clamped to [0, 255] only at the final uint8 write-out.
    Raises ConvergenceError when any channel misses the tolerance, and
    ValueError when the region touches the outer image border.
    """
    if (src_img.width, src_img.height) != (dst_img.width, dst_img.height):
        raise ValueError("source and destination must share dimensions")
    if (region.width, region.height) != (dst_img.width, dst_img.height):
        raise ValueError("region dimensions must match the images")
    dense = region.to_dense()
    out = dst_img.data.astype(np.float64).copy()
    for ch in range(3):
        solved, rel, sweeps = solve_poisson_plane(
            dst_img.data[:, :, ch].astype(np.float64),
            src_img.data[:, :, ch].astype(np.float64),
            dense,
            tol=tol,
            max_sweeps=max_sweeps,
        )
        if rel > tol:
            raise ConvergenceError(rel, sweeps)
        out[:, :, ch] = solved
    if _DEBUG_DIR is not None:
        _dump_blend_debug(src_img.data, out, dense)
    return ImageRgb(np.clip(np.rint(out), 0, 255).astype(np.uint8))
