"""Segment manifests: the serialized candidate-mask sets produced by an
external segmentation model.

Masks may overlap each other and may leave image pixels uncovered; both
are normal for automatically generated masks. The JSON layout is:

    {"image": {"width": W, "height": H},
     "segments": [{"id": 0, "rle": [..]}, ...],
     "provenance": {"model": "...", "params": {}}}

Runs are decimal integers, row-major, leading zero-run first. Segment
order is preserved; ties between segments are always broken by the
lowest id.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateId, IoError, LengthMismatch, SchemaError
from .rle import decode_rle, encode_rle


@dataclass(frozen=True)
class SegmentMask:
    """One candidate segment, stored as a run-length encoded bitmap.

    ``bbox`` is the inclusive (min_row, min_col, max_row, max_col) of the
    set pixels; ``pixel_count`` is always at least 1.
    """

    id: int
    rle: tuple[int, ...]
    pixel_count: int
    bbox: tuple[int, int, int, int]

    @classmethod
    def from_bitmap(cls, seg_id: int, bitmap: np.ndarray) -> "SegmentMask":
        """Encode a boolean (H, W) bitmap; the mask must have a set pixel."""
        bits = np.asarray(bitmap, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("bitmap must be 2-D")
        rows, cols = np.nonzero(bits)
        if rows.size == 0:
            raise ValueError(f"segment {seg_id} has no set pixels")
        bbox = (int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max()))
        return cls(
            id=int(seg_id),
            rle=tuple(encode_rle(bits)),
            pixel_count=int(rows.size),
            bbox=bbox,
        )

    def decode(self, width: int, height: int) -> np.ndarray:
        """Decode to a (height, width) boolean bitmap."""
        return decode_rle(self.rle, width, height)


@dataclass(frozen=True)
class SegmentManifest:
    """A full candidate-mask set plus the image dimensions it refers to."""

    image_width: int
    image_height: int
    segments: tuple[SegmentMask, ...]
    provenance: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_bitmaps(
        cls,
        bitmaps: Sequence[np.ndarray],
        ids: Iterable[int] | None = None,
        provenance: Mapping[str, Any] | None = None,
    ) -> "SegmentManifest":
        """Build a manifest from in-memory boolean (H, W) masks."""
        if not bitmaps:
            raise ValueError("at least one bitmap is required")
        h, w = np.asarray(bitmaps[0], dtype=bool).shape
        id_list = list(ids) if ids is not None else list(range(len(bitmaps)))
        if len(id_list) != len(bitmaps):
            raise ValueError("ids and bitmaps must have equal length")
        segments = tuple(
            SegmentMask.from_bitmap(i, np.asarray(b, dtype=bool))
            for i, b in zip(id_list, bitmaps)
        )
        return cls(
            image_width=int(w),
            image_height=int(h),
            segments=segments,
            provenance=dict(provenance or {}),
        )

    def segment_by_id(self, seg_id: int) -> SegmentMask:
        for seg in self.segments:
            if seg.id == seg_id:
                return seg
        raise KeyError(f"no segment with id {seg_id}")


_TOP_KEYS = {"image", "segments", "provenance"}
_SEGMENT_KEYS = {"id", "rle"}


def manifest_from_dict(doc: Mapping[str, Any]) -> SegmentManifest:
    """Validate a parsed manifest document and build the typed object.

    Every structural violation names the offending segment id where one
    exists, so broken exports are easy to track down.
    """
    if not isinstance(doc, Mapping):
        raise SchemaError("manifest root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown manifest keys: {sorted(unknown)}")
    image = doc.get("image")
    if not isinstance(image, Mapping) or set(image) != {"width", "height"}:
        raise SchemaError("manifest 'image' must be {'width': W, 'height': H}")
    width, height = image["width"], image["height"]
    if not isinstance(width, int) or not isinstance(height, int) or width < 1 or height < 1:
        raise SchemaError("image dimensions must be positive integers")
    raw_segments = doc.get("segments")
    if not isinstance(raw_segments, list):
        raise SchemaError("manifest 'segments' must be a list")
    provenance = doc.get("provenance", {})
    if not isinstance(provenance, Mapping):
        raise SchemaError("manifest 'provenance' must be an object")

    seen: set[int] = set()
    segments: list[SegmentMask] = []
    for entry in raw_segments:
        if not isinstance(entry, Mapping) or set(entry) != _SEGMENT_KEYS:
            raise SchemaError("each segment must be {'id': int, 'rle': [..]}")
        seg_id = entry["id"]
        if not isinstance(seg_id, int) or seg_id < 0:
            raise SchemaError(f"segment id {seg_id!r} must be a non-negative integer")
        if seg_id in seen:
            raise DuplicateId(f"segment id {seg_id} appears more than once")
        seen.add(seg_id)
        runs = entry["rle"]
        if not isinstance(runs, list) or not all(isinstance(r, int) for r in runs):
            raise SchemaError(f"segment {seg_id}: rle must be a list of integers")
        if any(r < 0 for r in runs):
            raise SchemaError(f"segment {seg_id}: rle runs must be non-negative")
        try:
            bitmap = decode_rle(runs, width, height)
        except LengthMismatch as exc:
            raise LengthMismatch(f"segment {seg_id}: {exc}") from exc
        if not bitmap.any():
            raise SchemaError(f"segment {seg_id} has no set pixels")
        segments.append(SegmentMask.from_bitmap(seg_id, bitmap))

    return SegmentManifest(
        image_width=width,
        image_height=height,
        segments=tuple(segments),
        provenance=dict(provenance),
    )


def manifest_to_dict(manifest: SegmentManifest) -> dict[str, Any]:
    """Canonical JSON-ready form; the inverse of :func:`manifest_from_dict`."""
    return {
        "image": {"width": manifest.image_width, "height": manifest.image_height},
        "segments": [
            {"id": seg.id, "rle": list(seg.rle)} for seg in manifest.segments
        ],
        "provenance": dict(manifest.provenance),
    }


def load_manifest(path: str | os.PathLike) -> SegmentManifest:
    """Read and validate a manifest JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {path} is not valid JSON: {exc}") from exc
    return manifest_from_dict(doc)


def save_manifest(manifest: SegmentManifest, path: str | os.PathLike) -> None:
    """Write a manifest in canonical form (load -> save -> load is identity)."""
    doc = manifest_to_dict(manifest)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc
