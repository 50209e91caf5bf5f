"""Convert externally produced masks into the engine's manifest JSON.

Accepted sources:

* a directory of binary mask PNGs (any nonzero pixel counts as set),
  ordered by filename and numbered from zero, and/or
* a JSON file of column-major uncompressed run-length masks
  (``{"masks": [{"size": [H, W], "counts": [...]}, ...]}``), the layout
  emitted by common annotation tooling.

The manifest schema is row-major with a leading zero-run::

    {"image": {"width": W, "height": H},
     "segments": [{"id": 0, "rle": [..]}, ...],
     "provenance": {"model": "...", "params": {}}}

Nothing is filtered and overlapping masks are kept as separate segments;
size thresholds belong to the consumer.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from PIL import Image


def encode_row_major_rle(bitmap: np.ndarray) -> list[int]:
    """Alternating zero-run/one-run lengths over the row-major bitmap."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    runs: list[int] = []
    value = False
    length = 0
    for bit in flat:
        if bool(bit) == value:
            length += 1
        else:
            runs.append(length)
            value = not value
            length = 1
    runs.append(length)
    return runs


def decode_column_major_counts(counts: Sequence[int], height: int, width: int) -> np.ndarray:
    """Expand column-major uncompressed counts into an (H, W) bitmap."""
    total = sum(counts)
    if total != height * width:
        raise ValueError(
            f"counts sum to {total}, expected {height * width} for {height}x{width}"
        )
    flat = np.zeros(total, dtype=bool)
    position = 0
    value = False
    for run in counts:
        if run < 0:
            raise ValueError("counts must be non-negative")
        if value:
            flat[position : position + run] = True
        position += run
        value = not value
    # column-major flattening: index = c * height + r
    return flat.reshape(width, height).T


def load_mask_png(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 0


def build_manifest(
    bitmaps: Sequence[np.ndarray],
    model: str = "export",
    params: dict[str, Any] | None = None,
) -> dict[str, Any]:
    if not bitmaps:
        raise ValueError("no masks to export")
    shapes = {b.shape for b in map(np.asarray, bitmaps)}
    if len(shapes) != 1:
        raise ValueError(f"masks disagree on image shape: {sorted(shapes)}")
    height, width = next(iter(shapes))
    segments = []
    for seg_id, bitmap in enumerate(bitmaps):
        if not np.asarray(bitmap, dtype=bool).any():
            raise ValueError(f"mask {seg_id} has no set pixels")
        segments.append({"id": seg_id, "rle": encode_row_major_rle(bitmap)})
    return {
        "image": {"width": int(width), "height": int(height)},
        "segments": segments,
        "provenance": {"model": model, "params": dict(params or {})},
    }


def collect_bitmaps(
    mask_dir: str | os.PathLike | None = None,
    coco_json: str | os.PathLike | None = None,
) -> list[np.ndarray]:
    bitmaps: list[np.ndarray] = []
    if mask_dir is not None:
        paths = sorted(Path(mask_dir).glob("*.png"))
        if not paths and coco_json is None:
            raise ValueError(f"no PNG masks found under {mask_dir}")
        bitmaps.extend(load_mask_png(p) for p in paths)
    if coco_json is not None:
        with open(coco_json, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        masks = doc.get("masks")
        if not isinstance(masks, list):
            raise ValueError("column-major mask file must carry a 'masks' list")
        for entry in masks:
            height, width = entry["size"]
            bitmaps.append(
                decode_column_major_counts(entry["counts"], int(height), int(width))
            )
    if not bitmaps:
        raise ValueError("no masks to export")
    return bitmaps


def export_manifest(
    out_path: str | os.PathLike,
    mask_dir: str | os.PathLike | None = None,
    coco_json: str | os.PathLike | None = None,
    model: str = "export",
    params: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Read masks, build the manifest document, and write it as JSON."""
    manifest = build_manifest(collect_bitmaps(mask_dir, coco_json), model, params)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
