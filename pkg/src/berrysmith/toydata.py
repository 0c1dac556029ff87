"""Deterministic fixture corpora for tests and demos.

Two families: grayscale tuner patches (flat = normal, speckled = anomalous,
built so a known parameter tuple separates them perfectly) and RGB berry
scenes (discs on a background, smooth or speckle-textured) with exact disc
masks, written to disk as a ready-to-run dataset.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .edges import CannyThresholds, DcedParams, dced
from .imgcore import ImageGray, ImageRgb, save_png
from .masks import MaskSet, SegMask, encode_maskset
from .pipeline import DatasetManifest, ManifestEntry, save_manifest
from .tuner import ANOMALOUS, NORMAL

# A tuple inside the default grid that separates the tuner corpus perfectly:
# speckle survives the wide pass but rarely the narrow one; flat patches have
# zero gradient everywhere.
KNOWN_GOOD_PARAMS = DcedParams(
    kernel_size=3,
    wide=CannyThresholds(25.0, 75.0),
    narrow=CannyThresholds(150.0, 200.0),
)


def flat_patch(size: int, value: float) -> ImageGray:
    return ImageGray(np.full((size, size), float(value)))


def speckle_patch(size: int, rng: np.random.Generator) -> ImageGray:
    return ImageGray(rng.integers(0, 256, size=(size, size)).astype(np.float64))


def make_tuner_corpus(
    n_per_class: int = 40, size: int = 64, seed: int = 7
) -> list[tuple[ImageGray, str]]:
    """Interleaved (patch, label) pairs; even indices normal, odd anomalous.

    Construction is verified: every flat patch scores diff_count 0 and every
    speckle patch scores > 0 under KNOWN_GOOD_PARAMS, so a separator exists.
    """
    rng = np.random.default_rng(seed)
    patches: list[tuple[ImageGray, str]] = []
    for i in range(n_per_class):
        flat = flat_patch(size, 40.0 + (175.0 * i) / max(1, n_per_class - 1))
        speckle = speckle_patch(size, rng)
        patches.append((flat, NORMAL))
        patches.append((speckle, ANOMALOUS))
    for patch, label in patches:
        diff = dced(patch, KNOWN_GOOD_PARAMS).diff_count
        if label == NORMAL and diff != 0:
            raise AssertionError(f"flat fixture produced {diff} texture edges")
        if label == ANOMALOUS and diff <= 0:
            raise AssertionError("speckle fixture produced no texture edges")
    return patches


# --------------------------------------------------------------------------
# mask shapes


def disc_mask(
    width: int, height: int, cx: float, cy: float, r: float, mask_id: str, source_image: str = ""
) -> SegMask:
    yy, xx = np.ogrid[:height, :width]
    dense = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    mask = SegMask.from_dense(dense, mask_id=mask_id, source_image=source_image)
    if mask is None:
        raise ValueError("disc lies entirely off-raster")
    return mask


def rect_mask(
    width: int,
    height: int,
    c0: int,
    r0: int,
    rect_w: int,
    rect_h: int,
    mask_id: str,
    source_image: str = "",
) -> SegMask:
    dense = np.zeros((height, width), dtype=bool)
    dense[r0 : r0 + rect_h, c0 : c0 + rect_w] = True
    mask = SegMask.from_dense(dense, mask_id=mask_id, source_image=source_image)
    if mask is None:
        raise ValueError("rectangle lies entirely off-raster")
    return mask


def ellipse_mask(
    width: int,
    height: int,
    cx: float,
    cy: float,
    a: float,
    b: float,
    theta: float,
    mask_id: str,
    source_image: str = "",
) -> SegMask:
    """Filled ellipse with semi-axes a, b, major axis rotated by theta."""
    yy, xx = np.ogrid[:height, :width]
    dx = xx - cx
    dy = yy - cy
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    dense = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    mask = SegMask.from_dense(dense, mask_id=mask_id, source_image=source_image)
    if mask is None:
        raise ValueError("ellipse lies entirely off-raster")
    return mask


# --------------------------------------------------------------------------
# berry scenes


def make_berry_scene(
    size: int,
    grid: int,
    textured: bool,
    rng: np.random.Generator,
    source_image: str = "",
) -> tuple[ImageRgb, MaskSet]:
    """A grid of disc "berries" on a leafy background with exact masks.

    Smooth scenes get radially shaded discs; textured scenes additionally
    speckle each disc interior, which the texture-edge filter picks up.
    """
    h = w = size
    rows = np.linspace(60.0, 90.0, h)[:, None]
    img = np.zeros((h, w, 3), dtype=np.float64)
    img[:, :, 0] = rows * 0.6
    img[:, :, 1] = rows
    img[:, :, 2] = rows * 0.4

    cell = size // grid
    masks = []
    yy, xx = np.ogrid[:h, :w]
    base = (95.0, 70.0, 60.0) if textured else (45.0, 50.0, 115.0)
    for gy in range(grid):
        for gx in range(grid):
            i = gy * grid + gx
            r = cell * 0.30 * (0.85 + 0.3 * rng.random())
            jitter = cell * 0.08
            cx = (gx + 0.5) * cell + rng.uniform(-jitter, jitter)
            cy = (gy + 0.5) * cell + rng.uniform(-jitter, jitter)
            dense = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
            dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
            shade = np.clip(1.15 - 0.5 * dist / max(r, 1.0), 0.0, 1.2)
            for ch in range(3):
                plane = img[:, :, ch]
                plane[dense] = base[ch] * shade[dense]
            if textured:
                # amplitude keeps post-blur gradients above the wide strong
                # threshold of KNOWN_GOOD_PARAMS inside every disc
                noise = rng.uniform(-160.0, 160.0, size=(h, w))
                for ch in range(3):
                    plane = img[:, :, ch]
                    plane[dense] = plane[dense] + noise[dense]
            mask = SegMask.from_dense(
                dense, mask_id=f"berry_{i:02d}", source_image=source_image
            )
            if mask is not None:
                masks.append(mask)
    rgb = ImageRgb(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    maskset = MaskSet(
        source_image=source_image,
        masks=tuple(masks),
        generator="fixture",
        width=w,
        height=h,
    )
    return rgb, maskset


def write_generation_corpus(
    root: str | Path,
    n_anomalous: int = 10,
    n_normal: int = 20,
    size: int = 128,
    grid: int = 3,
    seed: int = 11,
    groups_per_class: int = 6,
) -> tuple[Path, Path, Path]:
    """Write images, fixture mask manifests, and a train manifest under root.

    Returns (train manifest path, dataset root, mask root). Layout:
    root/images/*.png, root/masks/images/*.masks.json, root/train_manifest.json.
    """
    root = Path(root)
    dataset_root = root
    mask_root = root / "masks"
    rng = np.random.default_rng(seed)
    entries = []
    specs = [(ANOMALOUS, i, True) for i in range(n_anomalous)]
    specs += [(NORMAL, i, False) for i in range(n_normal)]
    for label, i, textured in specs:
        rel = f"images/{label}_{i:03d}.png"
        scene, maskset = make_berry_scene(size, grid, textured, rng, source_image=rel)
        save_png(scene, dataset_root / rel)
        manifest_path = mask_root / Path(rel).with_suffix(".masks.json")
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_bytes(encode_maskset(maskset))
        entries.append(
            ManifestEntry(
                path=rel,
                label=label,
                source_image_group=f"{label}_g{i % groups_per_class}",
            )
        )
    manifest = DatasetManifest(entries=tuple(entries))
    manifest_path = root / "train_manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path, dataset_root, mask_root
