"""Quantitative evaluation battery for explanations.

Every check is a pure function of its inputs: reference predictions are
re-obtained from the adapter on each call rather than cached, and all
randomness is seeded. Boolean checks follow the polarity used when the
results are aggregated into percentages:

* preservation: keeping only the explanation keeps the predicted class;
* deletion: removing the explanation CHANGES the predicted class
  (a change means the explanation was necessary, so True is good);
* single deletion: replacing everything else with a fixed background
  keeps the predicted class;
* noise variants: the same two checks after re-explaining a noisy image;
* contrastive variants: a second model judges the masked images against
  the first model's original decision;
* randomization: explanations obtained from a broken model, re-shown to
  the healthy model, should change the prediction.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, fields
from typing import Any, Sequence

import numpy as np

from .adapter import ModelAdapter
from .engine import (
    ExplainConfig,
    Explanation,
    explain,
    fit_surrogate,
    generate_samples,
    kernel_weights,
    render_perturbation,
    _predict_samples,
)
from .errors import ValidationError
from .hierarchy import FeatureSpace
from .image_io import ImageBuffer
from .manifest import SegmentManifest

DEFAULT_BACKGROUND = (0, 0, 0)
DEFAULT_NOISE_STDEV = 10.0
DEFAULT_STABILITY_RUNS = 16


def _selected_positions(explanation: Explanation) -> list[int]:
    result = explanation.final
    return [result.feature_space.feature_ids.index(fid) for fid in result.selected_ids]


def _keep_only_selected(image: ImageBuffer, explanation: Explanation) -> ImageBuffer:
    space = explanation.final.feature_space
    z = np.zeros(space.feature_count, dtype=np.uint8)
    z[_selected_positions(explanation)] = 1
    return render_perturbation(image, space, z)


def _remove_selected(image: ImageBuffer, explanation: Explanation) -> ImageBuffer:
    space = explanation.final.feature_space
    z = np.ones(space.feature_count, dtype=np.uint8)
    z[_selected_positions(explanation)] = 0
    return render_perturbation(image, space, z)


def _argmax(adapter: ModelAdapter, image: ImageBuffer) -> int:
    return adapter.predict_batch([image])[0].argmax_label


def preservation_check(
    image: ImageBuffer, explanation: Explanation, adapter: ModelAdapter
) -> bool:
    """Keep only the selected features; True when the class is unchanged."""
    original = _argmax(adapter, image)
    masked = _keep_only_selected(image, explanation)
    return _argmax(adapter, masked) == original


def deletion_check(
    image: ImageBuffer, explanation: Explanation, adapter: ModelAdapter
) -> bool:
    """Blank the selected features; True when the class CHANGES."""
    original = _argmax(adapter, image)
    masked = _remove_selected(image, explanation)
    return _argmax(adapter, masked) != original


def single_deletion_check(
    image: ImageBuffer,
    explanation: Explanation,
    adapter: ModelAdapter,
    background: Sequence[int] = DEFAULT_BACKGROUND,
) -> bool:
    """Replace all non-selected features with a fixed background color;
    True when the classification is maintained."""
    original = _argmax(adapter, image)
    space = explanation.final.feature_space
    keep = np.zeros(space.feature_count, dtype=bool)
    keep[_selected_positions(explanation)] = True
    bg = np.asarray(background, dtype=np.uint8)[: image.channels]
    pixels = image.pixels.copy()
    pixels[~keep[space.label_map]] = bg
    masked = ImageBuffer(
        width=image.width, height=image.height, channels=image.channels, pixels=pixels
    )
    return _argmax(adapter, masked) == original


def incremental_deletion(
    image: ImageBuffer, explanation: Explanation, adapter: ModelAdapter
) -> float:
    """Area under the confidence curve while removing features.

    Features are blanked cumulatively from the highest coefficient down;
    the curve records the original class's confidence starting at the
    unperturbed image. Removal stops after the first step that flips the
    predicted class, or once every feature is gone. The x axis is the
    fraction of traversed steps, normalized to [0, 1], integrated with
    the trapezoid rule.
    """
    space = explanation.final.feature_space
    coeffs = explanation.final.fit.coefficients
    order = sorted(range(space.feature_count), key=lambda i: (-coeffs[i], i))
    base = adapter.predict_batch([image])[0]
    original = base.argmax_label
    confidences = [base.probs[original]]
    z = np.ones(space.feature_count, dtype=np.uint8)
    for pos in order:
        z[pos] = 0
        output = adapter.predict_batch([render_perturbation(image, space, z)])[0]
        confidences.append(output.probs[original])
        if output.argmax_label != original:
            break
    steps = len(confidences) - 1
    xs = np.arange(steps + 1, dtype=np.float64) / steps
    ys = np.asarray(confidences, dtype=np.float64)
    return float(np.trapezoid(ys, xs))


def compactness(explanation: Explanation) -> float:
    """Fraction of image pixels covered by the selected features."""
    space = explanation.final.feature_space
    positions = _selected_positions(explanation)
    covered = int(np.isin(space.label_map, positions).sum())
    return covered / space.label_map.size


def gini(coefficients: Sequence[float]) -> float:
    """Inequality of the absolute coefficients, in [0, 1].

    Mean absolute pairwise difference over twice the mean; zero for a
    uniform vector and for the degenerate all-zero vector.
    """
    a = np.abs(np.asarray(coefficients, dtype=np.float64))
    if a.size == 0:
        raise ValueError("coefficients must be non-empty")
    mu = float(a.mean())
    if mu == 0.0:
        return 0.0
    diff_sum = float(np.abs(a[:, None] - a[None, :]).sum())
    return diff_sum / (2.0 * a.size * a.size * mu)


def add_gaussian_noise(
    image: ImageBuffer, stdev: float, seed: int
) -> ImageBuffer:
    """Seeded pixel noise on the 0-255 scale, clamped and rounded half up."""
    if stdev < 0:
        raise ValueError("stdev must be non-negative")
    if stdev == 0:
        return image
    rng = np.random.Generator(np.random.Philox(key=seed))
    noise = rng.normal(0.0, stdev, size=image.pixels.shape)
    noisy = np.clip(np.floor(image.pixels.astype(np.float64) + noise + 0.5), 0, 255)
    return ImageBuffer(
        width=image.width,
        height=image.height,
        channels=image.channels,
        pixels=noisy.astype(np.uint8),
    )


def noise_checks(
    image: ImageBuffer,
    manifest: SegmentManifest,
    adapter: ModelAdapter,
    config: ExplainConfig,
    noise_stdev: float = DEFAULT_NOISE_STDEV,
    seed: int = 0,
) -> tuple[bool, bool]:
    """Re-explain a noisy copy of the image and run both basic checks on it."""
    noisy = add_gaussian_noise(image, noise_stdev, seed)
    noisy_explanation = explain(noisy, manifest, adapter, config)
    return (
        preservation_check(noisy, noisy_explanation, adapter),
        deletion_check(noisy, noisy_explanation, adapter),
    )


def repeated_stability(
    image: ImageBuffer,
    manifest: SegmentManifest,
    adapter: ModelAdapter,
    config: ExplainConfig,
    runs: int = DEFAULT_STABILITY_RUNS,
) -> float:
    """Mean per-coefficient standard deviation across re-sampled fits.

    The feature space and target class are computed once, so the number
    measures sampling noise only, not segmentation noise. Runs use seeds
    ``config.seed + 0 .. runs - 1``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    reference = explain(image, manifest, adapter, config)
    space = reference.final.feature_space
    target = reference.final.fit.target_class
    coefficient_runs = np.empty((runs, space.feature_count), dtype=np.float64)
    for i in range(runs):
        z = generate_samples(space.feature_count, config.n_samples, config.seed + i)
        preds = _predict_samples(
            adapter, image, space, z, config.batch_size, config.parallel
        )
        weights = kernel_weights(z, config.kernel_width)
        fit = fit_surrogate(
            z,
            weights,
            preds[:, target],
            config.ridge_lambda,
            sigma=config.kernel_width,
            target_class=target,
        )
        coefficient_runs[i] = fit.coefficients
    return float(coefficient_runs.std(axis=0).mean())


def contrastivity_checks(
    image: ImageBuffer,
    explanation: Explanation,
    adapter_primary: ModelAdapter,
    adapter_secondary: ModelAdapter,
) -> tuple[bool, bool]:
    """Can a second model reproduce the first model's decision from the
    masked images alone? Requires matching label-space sizes."""
    n1 = adapter_primary.get_meta()["num_classes"]
    n2 = adapter_secondary.get_meta()["num_classes"]
    if n1 != n2:
        raise ValidationError(
            f"label spaces differ: {n1} classes vs {n2} classes"
        )
    original = _argmax(adapter_primary, image)
    kept = _keep_only_selected(image, explanation)
    removed = _remove_selected(image, explanation)
    preservation = _argmax(adapter_secondary, kept) == original
    deletion = _argmax(adapter_secondary, removed) != original
    return preservation, deletion


def randomization_check(
    image: ImageBuffer,
    manifest: SegmentManifest,
    config: ExplainConfig,
    adapter_normal: ModelAdapter,
    adapter_randomized: ModelAdapter,
) -> bool:
    """Explain under a broken endpoint, then show the preserved image to
    the healthy model; True when its prediction differs from f(x)."""
    broken_explanation = explain(image, manifest, adapter_randomized, config)
    preserved = _keep_only_selected(image, broken_explanation)
    return _argmax(adapter_normal, preserved) != _argmax(adapter_normal, image)


def randomization_checks(
    image: ImageBuffer,
    manifest: SegmentManifest,
    config: ExplainConfig,
    adapter_normal: ModelAdapter,
    adapter_random_model: ModelAdapter,
    adapter_random_expl: ModelAdapter,
) -> tuple[bool, bool]:
    """Both randomization flavors: shuffled-weights and random-output."""
    return (
        randomization_check(image, manifest, config, adapter_normal, adapter_random_model),
        randomization_check(image, manifest, config, adapter_normal, adapter_random_expl),
    )


@dataclass
class MetricsReport:
    """Per-instance results; a None field means the check did not run."""

    instance: str = ""
    preservation: bool | None = None
    deletion: bool | None = None
    single_deletion: bool | None = None
    noise_preservation: bool | None = None
    noise_deletion: bool | None = None
    contrastive_preservation: bool | None = None
    contrastive_deletion: bool | None = None
    random_model_differs: bool | None = None
    random_expl_differs: bool | None = None
    incr_deletion_auc: float | None = None
    compactness: float | None = None
    gini: float | None = None
    rep_stability_mean_sigma: float | None = None
    config: dict[str, Any] | None = None

    BOOL_FIELDS = (
        "preservation",
        "deletion",
        "single_deletion",
        "noise_preservation",
        "noise_deletion",
        "contrastive_preservation",
        "contrastive_deletion",
        "random_model_differs",
        "random_expl_differs",
    )
    REAL_FIELDS = (
        "incr_deletion_auc",
        "compactness",
        "gini",
        "rep_stability_mean_sigma",
    )

    def to_dict(self) -> dict[str, Any]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "config"
        } | {"config": self.config}


def evaluate_instance(
    image: ImageBuffer,
    manifest: SegmentManifest,
    adapter: ModelAdapter,
    config: ExplainConfig,
    *,
    instance: str = "",
    adapter_contrast: ModelAdapter | None = None,
    adapter_random_model: ModelAdapter | None = None,
    adapter_random_expl: ModelAdapter | None = None,
    background: Sequence[int] = DEFAULT_BACKGROUND,
    noise_stdev: float = DEFAULT_NOISE_STDEV,
    stability_runs: int = DEFAULT_STABILITY_RUNS,
    run_noise: bool = True,
    run_stability: bool = True,
) -> MetricsReport:
    """Run the full battery for one image. Optional adapters gate the
    contrastive and randomization checks."""
    explanation = explain(image, manifest, adapter, config)
    report = MetricsReport(instance=instance, config=config.snapshot())
    report.preservation = preservation_check(image, explanation, adapter)
    report.deletion = deletion_check(image, explanation, adapter)
    report.single_deletion = single_deletion_check(image, explanation, adapter, background)
    report.incr_deletion_auc = incremental_deletion(image, explanation, adapter)
    report.compactness = compactness(explanation)
    report.gini = gini(explanation.final.fit.coefficients)
    if run_noise:
        report.noise_preservation, report.noise_deletion = noise_checks(
            image, manifest, adapter, config, noise_stdev, config.seed
        )
    if run_stability:
        report.rep_stability_mean_sigma = repeated_stability(
            image, manifest, adapter, config, stability_runs
        )
    if adapter_contrast is not None:
        (
            report.contrastive_preservation,
            report.contrastive_deletion,
        ) = contrastivity_checks(image, explanation, adapter, adapter_contrast)
    if adapter_random_model is not None:
        report.random_model_differs = randomization_check(
            image, manifest, config, adapter, adapter_random_model
        )
    if adapter_random_expl is not None:
        report.random_expl_differs = randomization_check(
            image, manifest, config, adapter, adapter_random_expl
        )
    return report


def aggregate_reports(reports: Sequence[MetricsReport]) -> dict[str, Any]:
    """Dataset-level summary: exact percentages for booleans, means for reals."""
    if not reports:
        raise ValueError("no reports to aggregate")
    summary: dict[str, Any] = {"instances": len(reports)}
    for name in MetricsReport.BOOL_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        summary[name + "_pct"] = (
            100.0 * sum(values) / len(values) if values else None
        )
    for name in MetricsReport.REAL_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        summary[name + "_mean"] = (
            float(np.mean(values)) if values else None
        )
    return summary


CSV_COLUMNS = (
    ("instance",)
    + MetricsReport.BOOL_FIELDS
    + MetricsReport.REAL_FIELDS
)


def write_reports_csv(reports: Sequence[MetricsReport], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            row = []
            for col in CSV_COLUMNS:
                value = getattr(report, col)
                if value is None:
                    row.append("")
                elif isinstance(value, bool):
                    row.append("1" if value else "0")
                else:
                    row.append(repr(value) if isinstance(value, float) else str(value))
            writer.writerow(row)


def write_aggregate_json(summary: dict[str, Any], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
