"""Run-length codec for binary masks.

Runs are counted over the row-major flattened bitmap and alternate
zero-run / one-run, starting with the zero-run. The leading zero-run may
be 0 so a mask can begin with a set pixel. Canonical encodings contain no
zero-length interior runs and no trailing empty run.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import LengthMismatch


def decode_rle(rle: Sequence[int], width: int, height: int) -> np.ndarray:
    """Expand a run list into a (height, width) boolean bitmap.

    Raises:
        LengthMismatch: the runs do not sum to ``width * height``.
        ValueError: a run is negative.
    """
    runs = np.asarray(list(rle), dtype=np.int64)
    if runs.size and int(runs.min()) < 0:
        raise ValueError("runs must be non-negative")
    total = int(runs.sum()) if runs.size else 0
    expected = width * height
    if total != expected:
        raise LengthMismatch(
            f"runs sum to {total}, expected {expected} for a {width}x{height} bitmap"
        )
    values = (np.arange(runs.size) % 2).astype(bool)
    flat = np.repeat(values, runs)
    return flat.reshape(height, width)


def encode_rle(bitmap: np.ndarray) -> list[int]:
    """Encode a boolean bitmap into the canonical run list.

    Accepts any array shape; pixels are read in row-major order. The
    result always satisfies ``decode_rle(encode_rle(b), w, h) == b``.
    """
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change_points = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], change_points, [flat.size]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]
