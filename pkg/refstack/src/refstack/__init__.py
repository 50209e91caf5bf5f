"""Reference model server and mask exporter for the explanation engine."""

from .classifiers import KINDS, ToyClassifierSpec, classify
from .export import (
    build_manifest,
    decode_column_major_counts,
    encode_row_major_rle,
    export_manifest,
)
from .server import RefServer, canonical_json, meta_payload, predict_payload

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "RefServer",
    "ToyClassifierSpec",
    "build_manifest",
    "canonical_json",
    "classify",
    "decode_column_major_counts",
    "encode_row_major_rle",
    "export_manifest",
    "meta_payload",
    "predict_payload",
]
