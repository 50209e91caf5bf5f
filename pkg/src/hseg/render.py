"""Attribution-map overlays.

Features with positive coefficients are tinted pure blue, negative ones
pure red, with alpha proportional to |coefficient| / max|coefficient|.
Selected features are additionally outlined in their full tint color.
Rendering is a pure function of (explanation, image): identical inputs
give identical PNG bytes.
"""

from __future__ import annotations

import os

import numpy as np

from .engine import Explanation
from .image_io import ImageBuffer, save_image

BLUE = np.array([0, 0, 255], dtype=np.float64)
RED = np.array([255, 0, 0], dtype=np.float64)


def _region_outline(region: np.ndarray) -> np.ndarray:
    """Pixels of a region that touch a different region or the image edge."""
    inner = np.zeros_like(region)
    inner[1:-1, 1:-1] = (
        region[1:-1, 1:-1]
        & region[:-2, 1:-1]
        & region[2:, 1:-1]
        & region[1:-1, :-2]
        & region[1:-1, 2:]
    )
    return region & ~inner


def render_attribution_overlay(
    explanation: Explanation, image: ImageBuffer
) -> ImageBuffer:
    """Compute the overlay without writing it anywhere."""
    result = explanation.final
    space = result.feature_space
    if space.label_map.shape != (image.height, image.width):
        raise ValueError("explanation feature space does not cover this image")
    coeffs = np.asarray(result.fit.coefficients, dtype=np.float64)
    max_abs = float(np.abs(coeffs).max()) if coeffs.size else 0.0
    if max_abs == 0.0:
        return ImageBuffer(
            width=image.width,
            height=image.height,
            channels=image.channels,
            pixels=image.pixels.copy(),
        )

    rgb = image.rgb_pixels().astype(np.float64)
    alphas = np.abs(coeffs) / max_abs
    tints = np.where(coeffs[:, None] >= 0, BLUE[None, :], RED[None, :])
    alpha_map = alphas[space.label_map][:, :, None]
    tint_map = tints[space.label_map]
    blended = (1.0 - alpha_map) * rgb + alpha_map * tint_map

    selected_positions = [
        space.feature_ids.index(fid) for fid in result.selected_ids
    ]
    for pos in selected_positions:
        outline = _region_outline(space.label_map == pos)
        blended[outline] = tints[pos]

    pixels = np.floor(blended + 0.5).astype(np.uint8)
    return ImageBuffer(width=image.width, height=image.height, channels=3, pixels=pixels)


def render_attribution_map(
    explanation: Explanation, image: ImageBuffer, path: str | os.PathLike
) -> None:
    """Render the overlay for the final depth and write it as PNG.

    When every coefficient is zero the written file is an unmodified
    copy of the input image.
    """
    save_image(render_attribution_overlay(explanation, image), path)
