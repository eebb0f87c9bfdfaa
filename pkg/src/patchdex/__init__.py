"""Multi-resolution patch retrieval engine.

Encode convolutional response maps into per-patch feature sets, optionally
whiten and binarize them, rank references by the asymmetric min/sum patch
distance, and score the rankings with standard retrieval protocols.
"""

from .ablation import TABLE_CONFIGS, PipelineConfig, parse_config, run_ablation
from .encoder import (
    FeatureVector,
    PatchFeatureSet,
    encode_image,
    encode_image_direct,
    encode_stack,
    l2_normalize,
    nominal_image_dims,
    slice_levels,
    spatial_max_pool,
)
from .errors import (
    BadMagicError,
    ConfigError,
    DegenerateTrainingSetError,
    DimensionMismatchError,
    EmptySetError,
    FormatError,
    InvalidHeaderError,
    ManifestError,
    MissingLabelError,
    NonFiniteValueError,
    PatchdexError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .evaluation import (
    EvalReport,
    average_precision,
    evaluate,
    format_report_table,
    read_ranks_tsv,
    ukb_score,
    write_ranks_tsv,
)
from .formats import (
    ResponseMap,
    read_feature_set,
    read_quantized_set,
    read_response_map,
    read_whitening_model,
    rmap_filename,
    write_feature_set,
    write_quantized_set,
    write_response_map,
    write_whitening_model,
)
from .geometry import (
    CellRect,
    PatchLayout,
    PatchRect,
    map_to_feature_coords,
    patch_count,
    patch_layout,
    patch_sides,
)
from .manifest import (
    DatasetManifest,
    ImageEntry,
    load_manifest,
    save_manifest,
)
from .matcher import (
    PatchDistanceMatrix,
    QuantizedSet,
    RankedList,
    hamming_image_distance,
    image_distance,
    patch_distance_matrix,
    patch_min_distance,
    rank_references,
    rank_references_quantized,
    vector_distance,
)
from .synth import SynthSpec, generate_dataset, synth_dataset
from .whitening import (
    QuantizedCode,
    WhiteningModel,
    apply_whitening,
    fit_whitening,
    hamming_distance,
    quantize,
    whiten_feature_set,
)

__version__ = "1.0.0"

__all__ = [
    "BadMagicError",
    "CellRect",
    "ConfigError",
    "DatasetManifest",
    "DegenerateTrainingSetError",
    "DimensionMismatchError",
    "EmptySetError",
    "EvalReport",
    "FeatureVector",
    "FormatError",
    "ImageEntry",
    "InvalidHeaderError",
    "ManifestError",
    "MissingLabelError",
    "NonFiniteValueError",
    "PatchDistanceMatrix",
    "PatchFeatureSet",
    "PatchLayout",
    "PatchRect",
    "PatchdexError",
    "PipelineConfig",
    "QuantizedCode",
    "QuantizedSet",
    "RankedList",
    "ResponseMap",
    "SynthSpec",
    "TABLE_CONFIGS",
    "TruncatedFileError",
    "UnsupportedVersionError",
    "WhiteningModel",
    "apply_whitening",
    "average_precision",
    "encode_image",
    "encode_image_direct",
    "encode_stack",
    "evaluate",
    "fit_whitening",
    "format_report_table",
    "generate_dataset",
    "hamming_distance",
    "hamming_image_distance",
    "image_distance",
    "l2_normalize",
    "load_manifest",
    "map_to_feature_coords",
    "nominal_image_dims",
    "parse_config",
    "patch_count",
    "patch_distance_matrix",
    "patch_layout",
    "patch_min_distance",
    "patch_sides",
    "quantize",
    "rank_references",
    "rank_references_quantized",
    "read_feature_set",
    "read_quantized_set",
    "read_ranks_tsv",
    "read_response_map",
    "read_whitening_model",
    "rmap_filename",
    "run_ablation",
    "save_manifest",
    "slice_levels",
    "spatial_max_pool",
    "synth_dataset",
    "ukb_score",
    "vector_distance",
    "whiten_feature_set",
    "write_feature_set",
    "write_quantized_set",
    "write_ranks_tsv",
    "write_response_map",
    "write_whitening_model",
]
