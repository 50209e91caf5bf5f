"""Hierarchical segment-based local explanations for black-box image
classifiers.

The pipeline consumes externally produced segmentation masks, organizes
them into a containment hierarchy, flattens a chosen granularity level
into a full-coverage feature space, fits a locally weighted ridge
surrogate against perturbed model predictions, and evaluates the result
with a battery of faithfulness metrics.
"""

from .adapter import (
    CallableAdapter,
    HttpAdapter,
    ModelAdapter,
    ModelOutput,
    SubprocessAdapter,
)
from .engine import (
    DepthResult,
    ExplainConfig,
    Explanation,
    SampleBatch,
    SurrogateFit,
    explain,
    fit_surrogate,
    generate_samples,
    kernel_weight,
    kernel_weights,
    render_perturbation,
    select_significant,
)
from .errors import (
    AdapterError,
    ConfigError,
    DegenerateSegmentation,
    DuplicateId,
    FormatError,
    HsegError,
    IoError,
    LengthMismatch,
    NothingToExpand,
    ProtocolError,
    SchemaError,
    SingularSystem,
    TransportError,
    ValidationError,
)
from .explanation_io import explanation_to_dict, write_explanation
from .hierarchy import (
    FeatureSpace,
    HierarchyGraph,
    SegmentationStats,
    build_hierarchy,
    fill_empty_space,
    filter_small_segments,
    overlap_metric,
    segmentation_stats,
    select_depth_features,
    sweep_segmentation_stats,
)
from .image_io import ImageBuffer, load_image, save_image
from .manifest import (
    SegmentManifest,
    SegmentMask,
    load_manifest,
    manifest_from_dict,
    manifest_to_dict,
    save_manifest,
)
from .render import render_attribution_map, render_attribution_overlay
from .rle import decode_rle, encode_rle

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "CallableAdapter",
    "ConfigError",
    "DegenerateSegmentation",
    "DepthResult",
    "DuplicateId",
    "ExplainConfig",
    "Explanation",
    "FeatureSpace",
    "FormatError",
    "HierarchyGraph",
    "HsegError",
    "HttpAdapter",
    "ImageBuffer",
    "IoError",
    "LengthMismatch",
    "ModelAdapter",
    "ModelOutput",
    "NothingToExpand",
    "ProtocolError",
    "SampleBatch",
    "SchemaError",
    "SegmentManifest",
    "SegmentMask",
    "SegmentationStats",
    "SingularSystem",
    "SubprocessAdapter",
    "SurrogateFit",
    "TransportError",
    "ValidationError",
    "build_hierarchy",
    "decode_rle",
    "encode_rle",
    "explain",
    "explanation_to_dict",
    "fill_empty_space",
    "filter_small_segments",
    "fit_surrogate",
    "generate_samples",
    "kernel_weight",
    "kernel_weights",
    "load_image",
    "load_manifest",
    "manifest_from_dict",
    "manifest_to_dict",
    "overlap_metric",
    "render_attribution_map",
    "render_attribution_overlay",
    "render_perturbation",
    "save_image",
    "save_manifest",
    "segmentation_stats",
    "select_depth_features",
    "select_significant",
    "sweep_segmentation_stats",
    "write_explanation",
]
