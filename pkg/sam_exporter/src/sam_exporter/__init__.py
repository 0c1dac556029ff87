"""Adapter that exports automatic segmentation masks as canonical manifests.

The output format is the berrysmith mask manifest, reproduced here from its
published byte-level contract; this package deliberately does not import
berrysmith, so conformance is checked end to end with `berrysmith
masks-validate` instead of shared code.
"""

from sam_exporter.backends import MaskBackend, SamBackend, StubBackend
from sam_exporter.exporter import ExporterConfig, ExportResult, export_masks
from sam_exporter.manifest import dense_to_runs, manifest_bytes

__all__ = [
    "ExporterConfig",
    "ExportResult",
    "MaskBackend",
    "SamBackend",
    "StubBackend",
    "dense_to_runs",
    "export_masks",
    "manifest_bytes",
]
