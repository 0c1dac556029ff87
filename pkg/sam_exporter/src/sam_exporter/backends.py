"""Mask-generation backends: the real model, lazily imported, and a stub.

A backend turns one RGB image into a list of boolean masks plus a settings
dict that the exporter records in a sidecar next to each manifest. min_area
is a model-runtime knob (the generator's minimum region area), not exporter
post-filtering: the exporter writes every mask its backend returns.
"""

from __future__ import annotations

from collections import deque
from typing import Protocol

import numpy as np


class MaskBackend(Protocol):
    def generate(self, image: np.ndarray) -> list[np.ndarray]:
        """Boolean (H, W) masks for an (H, W, 3) uint8 image."""
        ...

    def settings(self) -> dict:
        """The model settings to record alongside the manifests."""
        ...


class StubBackend:
    """Deterministic checkpoint-free stand-in for the automatic generator.

    Thresholds mean channel intensity at its median and emits the 4-connected
    components of the bright side, dropping regions below the minimum area
    exactly like the real generator's min_mask_region_area setting. Output
    depends only on pixel values, so re-exports are byte-identical.
    """

    def __init__(self, min_mask_region_area: int = 0):
        self.min_mask_region_area = int(min_mask_region_area)

    def generate(self, image: np.ndarray) -> list[np.ndarray]:
        plane = np.asarray(image, dtype=np.float64).mean(axis=2)
        bright = plane > np.median(plane)
        h, w = bright.shape
        seen = np.zeros_like(bright)
        masks = []
        for sy, sx in zip(*np.nonzero(bright)):
            if seen[sy, sx]:
                continue
            component = np.zeros_like(bright)
            queue = deque([(int(sy), int(sx))])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                component[y, x] = True
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and bright[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            if int(component.sum()) >= max(1, self.min_mask_region_area):
                masks.append(component)
        return masks

    def settings(self) -> dict:
        return {
            "backend": "stub",
            "min_mask_region_area": self.min_mask_region_area,
        }


class SamBackend:
    """Segment Anything in automatic mask generation mode.

    The heavyweight imports happen here, at construction, so the package
    works without torch installed as long as a checkpoint is never given.
    Generator settings are library defaults except min_mask_region_area.
    """

    def __init__(
        self,
        checkpoint: str,
        device: str = "cpu",
        model_type: str = "vit_h",
        min_mask_region_area: int = 0,
    ):
        try:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
        except ImportError as err:
            raise ImportError(
                "segment-anything (and torch) are required for checkpoint-backed "
                "export; install the 'sam' extra"
            ) from err
        self.checkpoint = checkpoint
        self.device = device
        self.model_type = model_type
        self.min_mask_region_area = int(min_mask_region_area)
        model = sam_model_registry[model_type](checkpoint=checkpoint)
        model.to(device)
        self._generator = SamAutomaticMaskGenerator(
            model, min_mask_region_area=self.min_mask_region_area
        )

    def generate(self, image: np.ndarray) -> list[np.ndarray]:
        records = self._generator.generate(np.asarray(image, dtype=np.uint8))
        return [np.asarray(rec["segmentation"], dtype=bool) for rec in records]

    def settings(self) -> dict:
        gen = self._generator
        return {
            "backend": "segment_anything",
            "model_type": self.model_type,
            "device": self.device,
            "points_per_side": getattr(gen, "points_per_side", None),
            "pred_iou_thresh": getattr(gen, "pred_iou_thresh", None),
            "stability_score_thresh": getattr(gen, "stability_score_thresh", None),
            "min_mask_region_area": self.min_mask_region_area,
        }
