"""Workload-aware lossless compression for ML pre-processing pipelines.

Compresses heterogeneous frames column-wise with dictionary encoding,
performs feature transformations directly on/into compressed matrices,
morphs compressed representations into co-coded workload-optimized
layouts without decompression, and reads/writes a tiled compressed
binary format with streaming encode.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .cframe import CompressedFrame, compress_frame, decompress_frame, frame_memory_estimate
from .cla import (
    SelectionMatrix,
    WorkloadVector,
    cbind,
    decompress,
    left_mm,
    right_mv,
    scalar_op,
    selection_mm,
    slice_rows,
)
from .colgroup import (
    ColumnRange,
    CompressedMatrix,
    DDCGroup,
    DenseDict,
    IdentityDict,
    SharedDict,
    decompress_group,
    group_memory_size,
    slice_group_rows,
)
from .frame import Frame, Schema, TypedColumn, ValueType, apply_schema, detect_schema, read_csv
from .mapvec import MapVector, MapWidth, map_width_for
from .morph import MorphOptions, MorphPlan, classify, combine_any, combine_ddc, group, morph, morph_encoding
from .planner import execute, extract_workload, inject_morphs, parse_pipeline, train_lm_cg
from .tio import CompressionScheme, ReadStats, read_tiled, update_and_encode, write_tiled
from .transform import (
    EncodePath,
    EncodeResult,
    MetaFrame,
    TransformSpec,
    mae,
    output_size_model,
    quantize_equiheight,
    quantize_equiwidth,
    transform_apply,
    transform_encode,
)

__all__ = [
    "kernel_backend",
    "Frame", "Schema", "TypedColumn", "ValueType", "read_csv", "detect_schema", "apply_schema",
    "CompressedFrame", "compress_frame", "decompress_frame", "frame_memory_estimate",
    "MapVector", "MapWidth", "map_width_for",
    "ColumnRange", "CompressedMatrix", "DDCGroup", "DenseDict", "IdentityDict", "SharedDict",
    "decompress_group", "group_memory_size", "slice_group_rows",
    "TransformSpec", "MetaFrame", "EncodePath", "EncodeResult",
    "transform_encode", "transform_apply", "output_size_model",
    "quantize_equiwidth", "quantize_equiheight", "mae",
    "SelectionMatrix", "WorkloadVector", "scalar_op", "cbind", "left_mm", "right_mv",
    "selection_mm", "slice_rows", "decompress",
    "MorphOptions", "MorphPlan", "classify", "group", "combine_ddc", "combine_any",
    "morph_encoding", "morph",
    "CompressionScheme", "ReadStats", "write_tiled", "read_tiled", "update_and_encode",
    "parse_pipeline", "extract_workload", "inject_morphs", "execute", "train_lm_cg",
]
