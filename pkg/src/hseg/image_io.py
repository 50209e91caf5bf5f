"""8-bit PNG loading and saving backed by Pillow.

Only two pixel layouts exist in this package: single-channel grayscale
and interleaved RGB. Anything else (16-bit depths, alpha, CMYK) is
rejected rather than silently converted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, IoError


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable 8-bit image with row-major interleaved pixels.

    ``pixels`` has shape (height, width, channels) with dtype uint8 and is
    marked read-only, so buffers are safe to share across threads.
    """

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"pixel array shape {px.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ImageBuffer":
        """Build a buffer from an (H, W) or (H, W, C) uint8-compatible array."""
        arr = np.asarray(array, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, pixels=arr)

    def to_bytes(self) -> bytes:
        """Row-major interleaved pixel bytes, length width*height*channels."""
        return self.pixels.tobytes()

    def rgb_pixels(self) -> np.ndarray:
        """Pixels as (H, W, 3); grayscale is replicated across channels."""
        if self.channels == 3:
            return self.pixels
        return np.repeat(self.pixels, 3, axis=2)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None  # type: ignore[assignment]


def load_image(path: str | os.PathLike) -> ImageBuffer:
    """Decode an 8-bit PNG into an ImageBuffer.

    Grayscale files map to channels=1, RGB files to channels=3. Palette
    images are expanded to RGB. 16-bit and alpha-carrying files raise
    FormatError; unreadable or truncated files raise IoError.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                raise FormatError(f"unsupported image mode {mode!r}; need 8-bit L or RGB")
    except FormatError:
        raise
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    h, w, c = arr.shape
    return ImageBuffer(width=w, height=h, channels=c, pixels=arr)


def save_image(buffer: ImageBuffer, path: str | os.PathLike) -> None:
    """Write a buffer as PNG. Output bytes are deterministic per input."""
    if buffer.channels == 1:
        im = Image.fromarray(buffer.pixels[:, :, 0], mode="L")
    else:
        im = Image.fromarray(buffer.pixels, mode="RGB")
    try:
        im.save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc
