"""Command-line front end.

Subcommands:

* ``hseg explain``      one image -> explanation JSON + attribution PNG
* ``hseg evaluate``     dataset manifest -> per-instance CSV + aggregate JSON
* ``hseg sweep-theta``  segment-count statistics across size thresholds

Exit codes: 0 success, 2 configuration error, 3 degenerate segmentation,
4 adapter failure. Nothing is written before the configuration fully
validates, and all outputs land under the chosen output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import metrics as metrics_mod
from .adapter import HttpAdapter, ModelAdapter
from .engine import ExplainConfig, explain
from .errors import (
    AdapterError,
    ConfigError,
    DegenerateSegmentation,
    HsegError,
    IoError,
)
from .explanation_io import write_explanation
from .hierarchy import sweep_segmentation_stats
from .image_io import load_image
from .manifest import load_manifest
from .render import render_attribution_map

ENDPOINT_ENV = "HSEG_ENDPOINT"

_CONFIG_FLAGS = {
    "depth": int,
    "top_k": int,
    "theta": int,
    "t": float,
    "samples": int,
    "batch": int,
    "sigma": float,
    "lambda": float,
    "seed": int,
    "target_class": int,
    "parallel": int,
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for key, typ in _CONFIG_FLAGS.items():
        parser.add_argument(
            "--" + key.replace("_", "-"),
            dest="cfg_" + key,
            type=typ,
            default=None,
            metavar=key.upper(),
        )
    parser.add_argument("--config", default=None, help="JSON config file; flags override it")


def _build_config(args: argparse.Namespace, require_seed: bool = False) -> ExplainConfig:
    merged: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must contain a JSON object")
        merged.update(file_cfg)
    for key in _CONFIG_FLAGS:
        value = getattr(args, "cfg_" + key)
        if value is not None:
            merged[key] = value
    if require_seed and "seed" not in merged:
        raise ConfigError("--seed is required for reproducible evaluation")
    return ExplainConfig.from_mapping(merged)


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _make_adapter(args: argparse.Namespace, attr: str = "endpoint") -> ModelAdapter:
    endpoint = getattr(args, attr, None) or (
        os.environ.get(ENDPOINT_ENV) if attr == "endpoint" else None
    )
    if not endpoint:
        raise ConfigError(
            f"--{attr.replace('_', '-')} is required (or set {ENDPOINT_ENV})"
        )
    return HttpAdapter(endpoint, timeout=args.timeout, retries=args.retries)


def _add_transport_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--timeout", type=float, default=30.0)
    parser.add_argument("--retries", type=int, default=2)


def cmd_explain(args: argparse.Namespace) -> int:
    config = _build_config(args)
    image_path = _require_file(args.image, "--image")
    masks_path = _require_file(args.masks, "--masks")
    adapter = _make_adapter(args)
    out_dir = Path(args.out)

    image = load_image(image_path)
    manifest = load_manifest(masks_path)
    explanation = explain(image, manifest, adapter, config)
    explanation = replace(explanation, image_ref=str(image_path))

    out_dir.mkdir(parents=True, exist_ok=True)
    write_explanation(explanation, out_dir / "explanation.json")
    render_attribution_map(explanation, image, out_dir / "attribution.png")
    print(f"wrote {out_dir / 'explanation.json'} and {out_dir / 'attribution.png'}")
    return 0


def _parse_dataset(path: Path) -> list[tuple[Path, Path, str]]:
    entries: list[tuple[Path, Path, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ConfigError(
                f"{path}:{lineno}: expected 'image manifest [label]', got {len(parts)} fields"
            )
        label = parts[2] if len(parts) == 3 else ""
        entries.append((Path(parts[0]), Path(parts[1]), label))
    if not entries:
        raise ConfigError(f"dataset {path} lists no instances")
    return entries


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _build_config(args, require_seed=True)
    dataset_path = _require_file(args.dataset, "--dataset")
    entries = _parse_dataset(dataset_path)
    for image_path, manifest_path, _ in entries:
        if not image_path.is_file():
            raise ConfigError(f"image not found: {image_path}")
        if not manifest_path.is_file():
            raise ConfigError(f"mask manifest not found: {manifest_path}")
    adapter = _make_adapter(args)
    adapter_contrast = _make_adapter(args, "endpoint2") if args.endpoint2 else None
    adapter_rand_model = (
        _make_adapter(args, "rand_endpoint") if args.rand_endpoint else None
    )
    adapter_rand_expl = (
        _make_adapter(args, "rand_expl_endpoint") if args.rand_expl_endpoint else None
    )
    out_dir = Path(args.out)

    def run_one(index: int) -> metrics_mod.MetricsReport:
        image_path, manifest_path, label = entries[index]
        image = load_image(image_path)
        manifest = load_manifest(manifest_path)
        name = label or image_path.name
        return metrics_mod.evaluate_instance(
            image,
            manifest,
            adapter,
            config,
            instance=name,
            adapter_contrast=adapter_contrast,
            adapter_random_model=adapter_rand_model,
            adapter_random_expl=adapter_rand_expl,
            noise_stdev=args.noise_stdev,
            stability_runs=args.stability_runs,
            run_noise=not args.no_noise,
            run_stability=not args.no_stability,
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run_one, range(len(entries))))
    else:
        reports = [run_one(i) for i in range(len(entries))]

    summary = metrics_mod.aggregate_reports(reports)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_mod.write_reports_csv(reports, out_dir / "report.csv")
    metrics_mod.write_aggregate_json(summary, out_dir / "aggregate.json")
    print(f"evaluated {len(reports)} instances -> {out_dir}")
    return 0


def cmd_sweep_theta(args: argparse.Namespace) -> int:
    if not args.values:
        raise ConfigError("--values must list at least one threshold")
    try:
        thetas = [int(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated integers: {exc}") from exc
    if not thetas:
        raise ConfigError("--values must list at least one threshold")
    masks_path = _require_file(args.masks, "--masks")
    threshold = args.cfg_t if args.cfg_t is not None else 0.9

    manifest = load_manifest(masks_path)
    rows = sweep_segmentation_stats(manifest, thetas, threshold)
    header = (
        f"{'theta':>8} {'total':>7} {'filtered':>9} {'hierarchy':>10} "
        f"{'final':>7} {'empty':>8}"
    )
    print(header)
    doc = []
    for theta, stats in rows:
        print(
            f"{theta:>8} {stats.segments_total:>7} {stats.segments_after_filter:>9} "
            f"{stats.segments_after_hierarchy:>10} {stats.features_final:>7} "
            f"{stats.empty_space_proportion:>8.4f}"
        )
        doc.append({"theta": theta, **stats.to_dict()})
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hseg",
        description="Hierarchical segment-based explanations for image classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser("explain", help="explain one image")
    p_explain.add_argument("--image", required=False)
    p_explain.add_argument("--masks", required=False)
    p_explain.add_argument("--endpoint", default=None)
    p_explain.add_argument("--out", default="hseg-out")
    _add_config_flags(p_explain)
    _add_transport_flags(p_explain)
    p_explain.set_defaults(func=cmd_explain)

    p_eval = sub.add_parser("evaluate", help="run the metric battery over a dataset")
    p_eval.add_argument("--dataset", required=False)
    p_eval.add_argument("--endpoint", default=None)
    p_eval.add_argument("--endpoint2", default=None, help="second model for contrastivity")
    p_eval.add_argument("--rand-endpoint", dest="rand_endpoint", default=None)
    p_eval.add_argument("--rand-expl-endpoint", dest="rand_expl_endpoint", default=None)
    p_eval.add_argument("--out", default="hseg-out")
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--noise-stdev", type=float, default=metrics_mod.DEFAULT_NOISE_STDEV)
    p_eval.add_argument(
        "--stability-runs", type=int, default=metrics_mod.DEFAULT_STABILITY_RUNS
    )
    p_eval.add_argument("--no-noise", action="store_true")
    p_eval.add_argument("--no-stability", action="store_true")
    _add_config_flags(p_eval)
    _add_transport_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep-theta", help="segment statistics per size threshold")
    p_sweep.add_argument("--masks", required=False)
    p_sweep.add_argument("--values", default="")
    p_sweep.add_argument("--t", dest="cfg_t", type=float, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep_theta)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DegenerateSegmentation as exc:
        print(f"degenerate segmentation: {exc}", file=sys.stderr)
        return 3
    except AdapterError as exc:
        print(f"adapter failure: {exc}", file=sys.stderr)
        return 4
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except HsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
