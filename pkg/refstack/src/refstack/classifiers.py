"""Deterministic toy classifiers.

Every classifier is a pure function of the incoming pixel statistics (and
a fixed seed), so each evaluation metric built on top of them has an
analytic expectation:

* ``region-mean``  p(class 1) is the mean intensity of a fixed box / 255
* ``constant``     always the same one-hot distribution
* ``random``       uniform-ish probabilities hashed from the pixel bytes
* ``shuffled``     region-mean with its classes permuted by the seed,
                   standing in for a weight-randomized model
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

KINDS = ("region-mean", "constant", "random", "shuffled")


@dataclass(frozen=True)
class ToyClassifierSpec:
    """Configuration of one toy endpoint."""

    kind: str
    bbox: tuple[int, int, int, int] = (0, 0, 0, 0)  # r0, c0, r1, c1 half-open
    num_classes: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.kind in ("region-mean", "shuffled"):
            r0, c0, r1, c1 = self.bbox
            if not (0 <= r0 < r1 and 0 <= c0 < c1):
                raise ValueError(f"bbox {self.bbox} is not a valid half-open box")


def _region_mean_probs(spec: ToyClassifierSpec, pixels: np.ndarray) -> list[float]:
    r0, c0, r1, c1 = spec.bbox
    h, w = pixels.shape[:2]
    if r1 > h or c1 > w:
        raise ValueError(f"bbox {spec.bbox} exceeds a {h}x{w} image")
    mean = float(pixels[r0:r1, c0:c1].mean()) / 255.0
    probs = [0.0] * spec.num_classes
    probs[0] = 1.0 - mean
    probs[1] = mean
    return probs


def _random_probs(spec: ToyClassifierSpec, pixels: np.ndarray) -> list[float]:
    digest = hashlib.blake2b(
        pixels.tobytes() + spec.seed.to_bytes(8, "little", signed=True),
        digest_size=8,
    ).digest()
    rng = np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))
    raw = rng.random(spec.num_classes) + 1e-9
    return [float(v) for v in raw / raw.sum()]


def _shuffled_probs(spec: ToyClassifierSpec, pixels: np.ndarray) -> list[float]:
    base = _region_mean_probs(spec, pixels)
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    permutation = rng.permutation(spec.num_classes)
    return [base[int(i)] for i in permutation]


def classify(spec: ToyClassifierSpec, pixels: np.ndarray) -> list[float]:
    """Probability vector for one (H, W, C) uint8 pixel array."""
    if spec.kind == "region-mean":
        return _region_mean_probs(spec, pixels)
    if spec.kind == "constant":
        probs = [0.0] * spec.num_classes
        probs[0] = 1.0
        return probs
    if spec.kind == "random":
        return _random_probs(spec, pixels)
    return _shuffled_probs(spec, pixels)
