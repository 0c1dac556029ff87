"""berrysmith: synthetic anomalous-fruit image generation and dataset tooling.

Pipeline in one sentence: segment masks (external model, fixtures, or a
threshold fallback), find the most textured segments with a dual-pass Canny
filter, align them onto healthy segments by principal-axis rotation and
area-matching scale, merge with Poisson blending, and manage the resulting
corpora via manifests, fold splits, and augmentation experiments.
"""

from .blend import (
    AlignmentTransform,
    ConvergenceError,
    PasteRegion,
    compute_alignment,
    paste_region,
    poisson_blend,
    solve_poisson_plane,
    warp,
)
from .edges import (
    MAGNITUDE_SCALE,
    CannyThresholds,
    DcedParams,
    DcedResult,
    EdgeMap,
    MaskedEdgeStats,
    canny,
    dced,
    hysteresis,
    masked_edge_stats,
    suppressed_magnitude,
)
from .imgcore import (
    GradientField,
    ImageGray,
    ImageRgb,
    PrincipalAxis,
    gaussian_blur,
    load_gray,
    load_rgb,
    principal_axis,
    save_png,
    sigma_for_kernel,
    sobel_gradients,
    to_grayscale,
)
from .masks import (
    MaskFormatError,
    MaskSet,
    SegMask,
    decode_maskset,
    encode_maskset,
    erode,
    filter_masks,
    intersect,
    otsu_threshold,
    segment_fallback,
)
from .pipeline import (
    DatasetManifest,
    GenerationConfig,
    GenerationReport,
    ManifestEntry,
    SampleRejected,
    SyntheticRecord,
    augment_manifest,
    derive_stream,
    generate_dataset,
    generate_sample,
    load_manifest,
    save_manifest,
    select_edgiest,
    split_folds,
)
from .tuner import (
    ANOMALOUS,
    NORMAL,
    CandidateScore,
    GridSpec,
    Metrics,
    TunedDced,
    best_separator,
    classify_baseline,
    enumerate_grid,
    evaluate,
    load_tuned,
    save_tuned,
    score_grid,
    tune,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentTransform",
    "ANOMALOUS",
    "best_separator",
    "CandidateScore",
    "canny",
    "CannyThresholds",
    "classify_baseline",
    "compute_alignment",
    "ConvergenceError",
    "DatasetManifest",
    "dced",
    "DcedParams",
    "DcedResult",
    "decode_maskset",
    "derive_stream",
    "EdgeMap",
    "encode_maskset",
    "enumerate_grid",
    "erode",
    "evaluate",
    "filter_masks",
    "gaussian_blur",
    "generate_dataset",
    "generate_sample",
    "GenerationConfig",
    "GenerationReport",
    "GradientField",
    "GridSpec",
    "hysteresis",
    "ImageGray",
    "ImageRgb",
    "intersect",
    "load_gray",
    "load_manifest",
    "load_rgb",
    "load_tuned",
    "MAGNITUDE_SCALE",
    "ManifestEntry",
    "masked_edge_stats",
    "MaskedEdgeStats",
    "MaskFormatError",
    "MaskSet",
    "Metrics",
    "NORMAL",
    "otsu_threshold",
    "paste_region",
    "PasteRegion",
    "poisson_blend",
    "principal_axis",
    "PrincipalAxis",
    "SampleRejected",
    "save_manifest",
    "save_png",
    "save_tuned",
    "score_grid",
    "SegMask",
    "segment_fallback",
    "select_edgiest",
    "sigma_for_kernel",
    "sobel_gradients",
    "solve_poisson_plane",
    "split_folds",
    "suppressed_magnitude",
    "SyntheticRecord",
    "to_grayscale",
    "tune",
    "TunedDced",
    "warp",
]
