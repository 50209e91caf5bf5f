"""Command-line front end: ``refstack serve`` and ``refstack export``."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .classifiers import KINDS, ToyClassifierSpec
from .export import export_manifest
from .server import RefServer


def _parse_bbox(text: str) -> tuple[int, int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox must be r0,c0,r1,c1")
    return tuple(parts)  # type: ignore[return-value]


def cmd_serve(args: argparse.Namespace) -> int:
    spec = ToyClassifierSpec(
        kind=args.kind,
        bbox=args.bbox,
        num_classes=args.num_classes,
        seed=args.seed,
    )
    server = RefServer(spec, host=args.host, port=args.port)
    print(f"serving {spec.kind} on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    manifest = export_manifest(
        args.out,
        mask_dir=args.mask_dir,
        coco_json=args.coco,
        model=args.model,
    )
    print(f"wrote {len(manifest['segments'])} segments to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refstack")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run a toy classifier endpoint")
    p_serve.add_argument("--kind", choices=KINDS, required=True)
    p_serve.add_argument("--bbox", type=_parse_bbox, default=(0, 0, 1, 1))
    p_serve.add_argument("--num-classes", type=int, default=2)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.set_defaults(func=cmd_serve)

    p_export = sub.add_parser("export", help="convert masks to a manifest")
    p_export.add_argument("--in", dest="mask_dir", default=None, help="directory of PNG masks")
    p_export.add_argument("--coco", default=None, help="column-major RLE mask JSON")
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--model", default="export")
    p_export.set_defaults(func=cmd_export)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
