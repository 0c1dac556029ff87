"""Directory walk: one canonical mask manifest (plus settings sidecar) per image.

Per-image failures are logged and collected; the run as a whole fails only
when no image could be exported. The exporter applies no semantic filtering
to the backend's masks (segment selection belongs to the consuming
pipeline): every generated mask is written, in a deterministic id order.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from sam_exporter.backends import MaskBackend, SamBackend, StubBackend
from sam_exporter.manifest import dense_to_runs, manifest_bytes

log = logging.getLogger("sam_exporter")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ExporterConfig:
    input_dir: Path
    output_dir: Path
    checkpoint: Path | None = None
    device: str = "cpu"
    min_area: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_dir", Path(self.input_dir))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.checkpoint is not None:
            object.__setattr__(self, "checkpoint", Path(self.checkpoint))
            if not self.checkpoint.is_file():
                raise ValueError(f"checkpoint not found: {self.checkpoint}")
        if not self.input_dir.is_dir():
            raise ValueError(f"input directory not found: {self.input_dir}")
        if self.min_area < 0:
            raise ValueError("min_area must be >= 0")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.output_dir, os.W_OK):
            raise ValueError(f"output directory not writable: {self.output_dir}")


@dataclass(frozen=True)
class ExportResult:
    written: tuple[Path, ...]
    failed: tuple[tuple[str, str], ...]  # (relative image path, reason)


def make_backend(cfg: ExporterConfig) -> MaskBackend:
    if cfg.checkpoint is None:
        return StubBackend(min_mask_region_area=cfg.min_area)
    return SamBackend(
        checkpoint=str(cfg.checkpoint),
        device=cfg.device,
        min_mask_region_area=cfg.min_area,
    )


def _mask_order_key(dense: np.ndarray) -> tuple[int, int]:
    # largest first; first set pixel breaks ties, so ids are reproducible
    flat = np.flatnonzero(dense.ravel())
    return (-int(flat.size), int(flat[0]))


def export_masks(cfg: ExporterConfig, backend: MaskBackend | None = None) -> ExportResult:
    """Write one manifest per image under output_dir, mirroring input_dir."""
    if backend is None:
        backend = make_backend(cfg)
    images = sorted(
        p for p in cfg.input_dir.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES
    )
    written: list[Path] = []
    failed: list[tuple[str, str]] = []
    sidecar_doc = {"generator": "external_model", "model_settings": backend.settings()}
    for img_path in images:
        rel = img_path.relative_to(cfg.input_dir)
        try:
            with Image.open(img_path) as handle:
                image = np.asarray(handle.convert("RGB"), dtype=np.uint8)
            masks = [m for m in backend.generate(image) if m.any()]
            masks.sort(key=_mask_order_key)
            pairs = [
                (f"sam_{i:03d}", dense_to_runs(dense)) for i, dense in enumerate(masks)
            ]
            payload = manifest_bytes(
                source_image=rel.as_posix(),
                width=image.shape[1],
                height=image.shape[0],
                masks=pairs,
            )
        except Exception as err:  # noqa: BLE001 - one bad image must not stop the run
            log.warning("skipping %s: %s", rel.as_posix(), err)
            failed.append((rel.as_posix(), str(err)))
            continue
        dest = (cfg.output_dir / rel).with_suffix(".masks.json")
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(payload)
        sidecar = dest.with_suffix(".meta.json")
        sidecar.write_text(
            json.dumps({"source_image": rel.as_posix(), **sidecar_doc}, indent=2) + "\n",
            encoding="utf-8",
        )
        written.append(dest)
    if not images:
        log.warning("no images found under %s", cfg.input_dir)
    return ExportResult(written=tuple(written), failed=tuple(failed))
