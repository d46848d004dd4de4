"""facedup-adapter: produce and validate feature sidecars."""

from __future__ import annotations

import argparse
import sys

from .extract import extract
from .providers import AdapterConfig
from .sidecar import selfcheck


def cmd_extract(args) -> int:
    config = AdapterConfig(
        provider=args.provider,
        detector_model=args.detector_model,
        embedder_model=args.embedder_model,
        quality_model=args.quality_model,
        embed_dim=args.embed_dim,
        score_threshold=args.score_threshold,
        batch_size=args.batch_size,
    )
    report = extract(args.root, args.dataset_id, args.out, config)
    print(
        f"extract: {report.images} images, {report.detected} with detections, "
        f"{len(report.landmark_failures)} landmark failures, "
        f"{len(report.unreadable)} unreadable -> {args.out}"
    )
    for image_id in report.unreadable:
        print(f"  unreadable: {image_id}", file=sys.stderr)
    return 0


def cmd_selfcheck(args) -> int:
    report = selfcheck(args.sidecar)
    if report.ok:
        print(f"selfcheck: {report.records} records, no violations")
        return 0
    print(f"selfcheck: {len(report.violations)} violations in {report.path}", file=sys.stderr)
    for v in report.violations:
        print(f"  {v}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="facedup-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run models over a dataset tree")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--dataset-id", required=True)
    p.add_argument("--out", required=True, help="output sidecar path")
    p.add_argument("--provider", default="builtin", help="builtin, yunet, or dotted path")
    p.add_argument("--detector-model")
    p.add_argument("--embedder-model")
    p.add_argument("--quality-model")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("selfcheck", help="validate a sidecar file")
    p.add_argument("sidecar")
    p.set_defaults(func=cmd_selfcheck)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
