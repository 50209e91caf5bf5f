"""Perturbation sampling, proximity weighting, weighted ridge fitting and
the depth-iterating explanation driver.

The driver filters tiny segments, builds the containment hierarchy, then
per granularity level: flattens the level into a feature space, samples
binary feature on/off vectors, renders the matching perturbed images,
queries the black-box model in batches, weights every sample by its
proximity kernel, fits a weighted ridge surrogate and records which
features stand out. The highest-scoring features that have children are
expanded for the next level.

Sampling uses a counter-based Philox generator keyed by the seed, so
sample matrices are reproducible across platforms for a fixed seed.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .adapter import ModelAdapter
from .errors import ConfigError, SingularSystem
from .hierarchy import (
    FeatureSpace,
    HierarchyGraph,
    SegmentationStats,
    build_hierarchy,
    fill_empty_space,
    filter_small_segments,
    segmentation_stats,
    select_depth_features,
)
from .image_io import ImageBuffer
from .manifest import SegmentManifest

MAX_SELECTED_FEATURES = 3
SIGNIFICANCE_FACTOR = 1.5


@dataclass(frozen=True)
class ExplainConfig:
    """Run parameters; field names mirror the CLI flags and config keys."""

    depth: int = 1
    top_k: int = 1
    theta: int = 500
    overlap_threshold: float = 0.9
    n_samples: int = 256
    batch_size: int = 10
    kernel_width: float = 0.25
    ridge_lambda: float = 1.0
    seed: int = 0
    target_class: int | None = None
    parallel: int = 1

    # config-file / CLI key -> dataclass field
    KEY_MAP = {
        "depth": "depth",
        "top_k": "top_k",
        "theta": "theta",
        "t": "overlap_threshold",
        "samples": "n_samples",
        "batch": "batch_size",
        "sigma": "kernel_width",
        "lambda": "ridge_lambda",
        "seed": "seed",
        "target_class": "target_class",
        "parallel": "parallel",
    }

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError("depth must be at least 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if self.theta < 0:
            raise ConfigError("theta must be non-negative")
        if not (0.0 < self.overlap_threshold <= 1.0):
            raise ConfigError("t must lie in (0, 1]")
        if self.n_samples < 2:
            raise ConfigError("samples must be at least 2")
        if self.batch_size < 1:
            raise ConfigError("batch must be at least 1")
        if self.kernel_width <= 0:
            raise ConfigError("sigma must be positive")
        if self.ridge_lambda < 0:
            raise ConfigError("lambda must be non-negative")
        if self.parallel < 1:
            raise ConfigError("parallel must be at least 1")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExplainConfig":
        """Build from flag-style keys, rejecting anything unknown."""
        unknown = set(mapping) - set(cls.KEY_MAP)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {cls.KEY_MAP[k]: v for k, v in mapping.items()}
        try:
            config = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        config.validate()
        return config

    def snapshot(self) -> dict[str, Any]:
        """Flag-keyed dict embedded into explanation documents."""
        values = asdict(self)
        return {key: values[field_name] for key, field_name in self.KEY_MAP.items()}


@dataclass(frozen=True)
class SampleBatch:
    """One level's perturbation samples with weights and predictions.

    Row 0 of ``z_binary`` is always the all-ones vector, i.e. the
    unperturbed instance itself.
    """

    z_binary: np.ndarray
    weights: np.ndarray
    predictions: np.ndarray


@dataclass(frozen=True)
class SurrogateFit:
    """Weighted ridge solution plus the settings it was fit under."""

    coefficients: tuple[float, ...]
    intercept: float
    sigma: float
    ridge_lambda: float
    target_class: int
    weighted_loss: float


@dataclass(frozen=True)
class DepthResult:
    """Everything recorded for one granularity level."""

    depth: int
    feature_space: FeatureSpace
    fit: SurrogateFit
    selected_ids: tuple[int, ...]
    expanded_ids: tuple[int, ...]


@dataclass(frozen=True)
class Explanation:
    """Per-depth results plus the configuration that produced them."""

    depths: tuple[DepthResult, ...]
    config: dict[str, Any]
    seed: int
    stats: SegmentationStats
    image_ref: str = ""

    @property
    def final(self) -> DepthResult:
        return self.depths[-1]


def generate_samples(feature_count: int, n_samples: int, seed: int) -> np.ndarray:
    """Binary sample matrix: row 0 all ones, the rest i.i.d. fair coin flips.

    Philox (counter-based, 64-bit) keyed by ``seed`` makes the matrix a
    pure function of (feature_count, n_samples, seed).
    """
    if feature_count < 1:
        raise ValueError("feature_count must be at least 1")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = np.empty((n_samples, feature_count), dtype=np.uint8)
    z[0] = 1
    z[1:] = rng.integers(0, 2, size=(n_samples - 1, feature_count), dtype=np.uint8)
    return z


def kernel_weight(z_row: np.ndarray, sigma: float) -> float:
    """Proximity of a sample to the unperturbed instance.

    The squared L2 distance between binary vectors equals the number of
    toggled-off features k, so the weight is exp(-k / sigma^2).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = int(np.sum(np.asarray(z_row) == 0))
    return float(np.exp(-k / (sigma * sigma)))


def kernel_weights(z: np.ndarray, sigma: float) -> np.ndarray:
    """Vectorized :func:`kernel_weight` over the rows of a sample matrix."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = np.sum(np.asarray(z) == 0, axis=1)
    return np.exp(-k / (sigma * sigma))


def render_perturbation(
    image: ImageBuffer, feature_space: FeatureSpace, z_row: np.ndarray
) -> ImageBuffer:
    """Blank out the toggled-off features of one sample.

    Features in state 1 keep their pixels; features in state 0 are
    flattened to their per-channel mean color, rounded half up.
    """
    z = np.asarray(z_row).ravel()
    if z.shape[0] != feature_space.feature_count:
        raise ValueError(
            f"z_row has {z.shape[0]} entries for {feature_space.feature_count} features"
        )
    fill = np.floor(feature_space.mean_color + 0.5).astype(np.uint8)
    off = ~z.astype(bool)[feature_space.label_map]
    pixels = image.pixels.copy()
    pixels[off] = fill[feature_space.label_map[off]]
    return ImageBuffer(
        width=image.width,
        height=image.height,
        channels=image.channels,
        pixels=pixels,
    )


def fit_surrogate(
    z_matrix: np.ndarray,
    weights: np.ndarray,
    target_probs: np.ndarray,
    ridge_lambda: float,
    sigma: float = 0.0,
    target_class: int = -1,
) -> SurrogateFit:
    """Solve the weighted ridge problem with an unpenalized intercept.

    Minimizes ``sum_i w_i (y_i - beta . z_i - b)^2 + lambda * |beta|^2``
    via the normal equations. The reported loss is the weighted squared
    error at the optimum, without the penalty term.

    Raises SingularSystem only when ``ridge_lambda`` is zero and the Gram
    matrix is rank-deficient.
    """
    z = np.asarray(z_matrix, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).ravel()
    y = np.asarray(target_probs, dtype=np.float64).ravel()
    if z.ndim != 2:
        raise ValueError("z_matrix must be 2-D")
    n, d = z.shape
    if w.shape[0] != n or y.shape[0] != n:
        raise ValueError("weights and target_probs must match the sample count")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(w)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be non-negative")
    if n < d + 1:
        warnings.warn(
            f"{n} samples for {d} features underdetermine the fit",
            RuntimeWarning,
            stacklevel=2,
        )
    design = np.hstack([z, np.ones((n, 1))])
    weighted = design * w[:, None]
    gram = weighted.T @ design
    gram[:d, :d] += ridge_lambda * np.eye(d)
    rhs = weighted.T @ y
    try:
        solution = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        if ridge_lambda == 0.0:
            raise SingularSystem(
                "gram matrix is rank-deficient; use a positive lambda"
            ) from exc
        raise
    residual = y - design @ solution
    loss = float(np.sum(w * residual * residual))
    return SurrogateFit(
        coefficients=tuple(float(c) for c in solution[:d]),
        intercept=float(solution[d]),
        sigma=float(sigma),
        ridge_lambda=float(ridge_lambda),
        target_class=int(target_class),
        weighted_loss=loss,
    )


def select_significant(coefficients: Sequence[float]) -> list[int]:
    """Positions of the standout coefficients, at most three.

    A coefficient stands out when it exceeds mean + 1.5 * population
    standard deviation; of those, the three largest are kept, ordered by
    descending value. When nothing clears the bar, the single argmax is
    returned so an explanation always exists.
    """
    coeffs = np.asarray(coefficients, dtype=np.float64)
    if coeffs.size == 0:
        raise ValueError("coefficients must be non-empty")
    tau = float(coeffs.mean() + SIGNIFICANCE_FACTOR * coeffs.std())
    above = [i for i in range(coeffs.size) if coeffs[i] > tau]
    if not above:
        return [int(np.argmax(coeffs))]
    above.sort(key=lambda i: (-coeffs[i], i))
    return above[:MAX_SELECTED_FEATURES]


def _predict_samples(
    adapter: ModelAdapter,
    image: ImageBuffer,
    feature_space: FeatureSpace,
    z: np.ndarray,
    batch_size: int,
    parallel: int,
) -> np.ndarray:
    """Render all samples and query the model in order-preserving batches."""
    n = z.shape[0]
    batches = [
        list(range(start, min(start + batch_size, n)))
        for start in range(0, n, batch_size)
    ]

    def run(batch: list[int]) -> np.ndarray:
        images = [render_perturbation(image, feature_space, z[i]) for i in batch]
        return adapter.predict_probs(images)

    if parallel <= 1 or len(batches) == 1:
        parts = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(run, batches))
    return np.vstack(parts)


def _depth_seed(seed: int, depth: int) -> int:
    # distinct Philox keys per level; level 1 keeps the user's exact seed
    return seed + (depth - 1) * 0x9E3779B1


def _rank_for_expansion(
    feature_ids: Sequence[int],
    coefficients: Sequence[float],
    hierarchy: HierarchyGraph,
    top_k: int,
) -> list[int]:
    """Top-k feature ids by descending coefficient, skipping childless ones."""
    order = sorted(
        range(len(feature_ids)), key=lambda i: (-coefficients[i], i)
    )
    ranked = [feature_ids[i] for i in order if hierarchy.children(feature_ids[i])]
    return ranked[:top_k]


def explain(
    image: ImageBuffer,
    manifest: SegmentManifest,
    adapter: ModelAdapter,
    config: ExplainConfig,
) -> Explanation:
    """Run the full iterative surrogate-fitting pipeline.

    Stops early, keeping the completed levels, when none of the
    top-ranked features can be refined further. Repeated runs with the
    same inputs and seed produce identical results.
    """
    config.validate()
    kept = filter_small_segments(manifest, config.theta)
    tree = build_hierarchy(
        kept, manifest.image_width, manifest.image_height, config.overlap_threshold
    )
    features = select_depth_features(tree, 1)
    target = config.target_class
    depth_results: list[DepthResult] = []
    depth1_space: FeatureSpace | None = None

    for depth in range(1, config.depth + 1):
        space = fill_empty_space(features, manifest, image)
        if depth == 1:
            depth1_space = space
        z = generate_samples(
            space.feature_count, config.n_samples, _depth_seed(config.seed, depth)
        )
        preds = _predict_samples(
            adapter, image, space, z, config.batch_size, config.parallel
        )
        if target is None:
            target = int(np.argmax(preds[0]))
        weights = kernel_weights(z, config.kernel_width)
        fit = fit_surrogate(
            z,
            weights,
            preds[:, target],
            config.ridge_lambda,
            sigma=config.kernel_width,
            target_class=target,
        )
        selected = tuple(
            space.feature_ids[pos] for pos in select_significant(fit.coefficients)
        )
        expanded: tuple[int, ...] = ()
        if depth < config.depth:
            expanded = tuple(
                _rank_for_expansion(
                    space.feature_ids, fit.coefficients, tree, config.top_k
                )
            )
        depth_results.append(
            DepthResult(
                depth=depth,
                feature_space=space,
                fit=fit,
                selected_ids=selected,
                expanded_ids=expanded,
            )
        )
        if depth < config.depth:
            if not expanded:
                break  # nothing refinable: stop with the completed levels
            features = select_depth_features(
                tree, depth + 1, expanded, previous_features=list(space.feature_ids)
            )

    assert depth1_space is not None
    stats = segmentation_stats(manifest, config.theta, tree, depth1_space)
    return Explanation(
        depths=tuple(depth_results),
        config=config.snapshot(),
        seed=config.seed,
        stats=stats,
    )
