"""Command-line pipeline: scan -> dedup -> apply -> eval -> report.

All outputs land in the run's output directory and are deterministic for
a fixed config, independent of worker count:

    manifest.tsv      dataset_id / subject_id / rel_path / byte_len
    hashcache.tsv     resumable per-image hashes
    rawsets.jsonl     raw duplicate sets (source, variant, members)
    skiplist.txt      image_id TAB reason (decode/landmark failures)
    scan_report.json  counts, algorithm constants, config echo
    plan.tsv          every keep/remove/move action
    removed.txt       dataset_id TAB rel_path
    moved.txt         dataset_id TAB rel_path TAB old TAB new subject
    dedup_report.json counts and thresholds
    metrics.csv       dataset, variant, eer, fnmr@..., pauc_...
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from pathlib import Path

from . import __version__
from .align import AlignmentError, align_face
from .config import ConfigError, RunConfig
from .corpus import DataError, DecodeError, Manifest, build_manifest, decode_canonical
from .dedup import (
    DedupAction,
    DedupPlan,
    apply_plan,
    build_full_removal_plan,
    build_plan,
    merge_overlapping_sets,
    raw_set_stats,
)
from .evaluation import MetricError, evaluate_manifest
from .features import SidecarError, load_sidecars
from .hashing import HashCache, RawDupSet, content_digest, find_duplicate_sets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rawsets(path: Path, sets: list[RawDupSet]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sorted(sets, key=lambda s: (s.variant, s.source, s.members)):
            fh.write(
                json.dumps(
                    {"source": s.source, "variant": s.variant, "members": list(s.members)},
                    separators=(",", ":"),
                )
                + "\n"
            )


def _read_rawsets(path: Path) -> list[RawDupSet]:
    sets = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            sets.append(RawDupSet(tuple(d["members"]), d["source"], d["variant"]))
    return sets


def _read_exclude_list(path: str | None) -> set[tuple[str, str]]:
    if not path:
        return set()
    out = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            ds, rel = line.split("\t", 1)
            out.add((ds, rel))
    return out


def _sidecar_fingerprint(paths: list[str]) -> str:
    if not paths:
        return "-"
    acc = content_digest(b"".join(Path(p).read_bytes() for p in sorted(paths)))
    return acc.hex()


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.root:
        roots = []
        for spec in args.root:
            if "=" not in spec:
                raise ConfigError(f"--root wants NAME=PATH, got {spec!r}")
            name, path = spec.split("=", 1)
            roots.append((name, path))
        cfg.roots = roots
    if args.out:
        cfg.out_dir = args.out
    if getattr(args, "sidecar", None):
        cfg.sidecars = list(args.sidecar)
    if getattr(args, "variants", None):
        cfg.variants = args.variants.split(",")
    if getattr(args, "phash_distance", None) is not None:
        cfg.hash.phash_max_distance = args.phash_distance
    if getattr(args, "exclude_list", None):
        cfg.exclude_list = args.exclude_list
    if getattr(args, "seed", None) is not None:
        cfg.eval_seed = args.seed
    cfg.validate()
    return cfg


def cmd_scan(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not cfg.roots:
        raise ConfigError("no dataset roots given (use --root NAME=PATH or a config file)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exclude = _read_exclude_list(cfg.exclude_list)
    manifest, skipped = build_manifest(cfg.roots, exclude)
    manifest.write(out / "manifest.tsv")
    roots = {name: Path(path) for name, path in cfg.roots}

    fingerprint = _sidecar_fingerprint(cfg.sidecars) if "preprocessed" in cfg.variants else "-"
    cache = HashCache.load(out / "hashcache.tsv", fingerprint)

    def file_bytes(record):
        return (roots[record.dataset_id] / record.rel_path).read_bytes()

    def file_decode(record):
        return decode_canonical(file_bytes(record), record.image_id)

    all_sets: list[RawDupSet] = []
    skip_lines: list[str] = [f"{s.dataset_id}/{s.rel_path}\t{s.reason}" for s in skipped]
    stats: dict = {}

    result = find_duplicate_sets(
        manifest,
        "original",
        cfg.hash,
        source_bytes=file_bytes,
        decode=file_decode,
        cache=cache,
        workers=args.workers,
    )
    all_sets.extend(result.sets)
    stats["original"] = result.stats
    skip_lines.extend(f"{i}\t{reason.split(':')[0]}" for i, reason in result.errors)

    landmark_failures: list[str] = []
    if "preprocessed" in cfg.variants:
        store = load_sidecars(cfg.sidecars)
        usable = []
        for r in manifest:
            if store.has_landmarks(r.image_id):
                usable.append(r)
            else:
                landmark_failures.append(r.image_id)
        sub = Manifest(records=usable)
        save_dir = Path(args.save_aligned) if args.save_aligned else None

        @functools.lru_cache(maxsize=max(8, 4 * args.workers))
        def aligned(image_id: str):
            record = manifest.get(image_id)
            buf = file_decode(record)
            crop = align_face(buf, store.detections(image_id))
            if save_dir is not None:
                from PIL import Image

                dst = (save_dir / record.dataset_id / record.rel_path).with_suffix(".png")
                dst.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(crop.array, "RGB").save(dst, "PNG")
            return crop

        result_pp = find_duplicate_sets(
            sub,
            "preprocessed",
            cfg.hash,
            source_bytes=lambda r: aligned(r.image_id).data,
            decode=lambda r: aligned(r.image_id),
            cache=cache,
            workers=args.workers,
            validation_bytes=file_bytes,
        )
        all_sets.extend(result_pp.sets)
        stats["preprocessed"] = result_pp.stats
        skip_lines.extend(f"{i}\t{reason.split(':')[0]}" for i, reason in result_pp.errors)
        skip_lines.extend(f"{i}\tlandmark_failure" for i in landmark_failures)

    cache.save(out / "hashcache.tsv")
    _write_rawsets(out / "rawsets.jsonl", all_sets)
    with open(out / "skiplist.txt", "w", encoding="utf-8", newline="\n") as fh:
        for line in sorted(set(skip_lines)):
            fh.write(line + "\n")

    report = {
        "config": cfg.echo(),
        "manifest": manifest.counts(),
        "variants": stats,
        "raw_duplicate_stats": raw_set_stats(all_sets, manifest),
        "raw_sets": len(all_sets),
        "skipped_files": len(skipped),
        "landmark_failures": len(landmark_failures),
    }
    _write_json(out / "scan_report.json", report)
    print(f"scan: {len(manifest)} images, {len(all_sets)} raw duplicate sets -> {out}")
    return EXIT_OK


def cmd_dedup(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    manifest = Manifest.read(out / "manifest.tsv")
    raw_sets = _read_rawsets(out / "rawsets.jsonl")
    merged = merge_overlapping_sets(raw_sets, manifest)
    if args.mode == "full-removal":
        plan = build_full_removal_plan(manifest, merged)
    else:
        if not cfg.sidecars:
            raise ConfigError("preservative dedup needs sidecar files (--sidecar)")
        store = load_sidecars(cfg.sidecars)
        plan = build_plan(manifest, merged, store, cfg.dedup)
        plan.report["sidecar_warnings"] = store.warnings
    plan.report["config"] = cfg.echo()
    plan.report["mode"] = args.mode
    plan.report["raw_duplicate_stats"] = raw_set_stats(raw_sets, manifest)

    plan.write_removed(out / "removed.txt")
    plan.write_moved(out / "moved.txt")
    with open(out / "plan.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for a in plan.actions:
            target = a.new_subject or "-"
            fh.write(f"{a.dataset_id}\t{a.rel_path}\t{a.subject_id}\t{a.verdict}\t{target}\n")
    _write_json(out / "dedup_report.json", plan.report)
    print(
        f"dedup[{args.mode}]: {len(plan.removed())} removed, "
        f"{len(plan.moved())} moved -> {out}"
    )
    return EXIT_OK


def _read_plan(out: Path) -> DedupPlan:
    actions = []
    with open(out / "plan.tsv", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            ds, rel, subj, verdict, target = line.split("\t")
            actions.append(
                DedupAction(ds, rel, subj, verdict, None if target == "-" else target)
            )
    return DedupPlan(actions=actions)


def cmd_apply(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    manifest = Manifest.read(out / "manifest.tsv")
    plan = _read_plan(out)
    roots = {name: Path(path) for name, path in cfg.roots} if cfg.roots else None
    result = apply_plan(
        plan,
        manifest,
        mode=args.mode,
        roots=roots,
        out_dir=args.dest,
    )
    result.write(out / "manifest.dedup.tsv")
    print(f"apply[{args.mode}]: {len(result)} images remain -> {out / 'manifest.dedup.tsv'}")
    return EXIT_OK


def _variant_manifest(variant: str, out: Path, manifest: Manifest, store) -> Manifest:
    keep = [r for r in manifest if store.has_landmarks(r.image_id)]
    base = Manifest(records=keep)
    if variant == "original":
        return base
    if variant == "full":
        raw_sets = _read_rawsets(out / "rawsets.jsonl")
        involved = {m for s in raw_sets for m in s.members}
        return Manifest(records=[r for r in base if r.image_id not in involved])
    if variant == "preservative":
        plan = _read_plan(out)
        return apply_plan(plan, base, mode="list-only")
    raise ConfigError(f"unknown eval variant {variant!r}")


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not cfg.sidecars:
        raise ConfigError("eval needs sidecar files (--sidecar)")
    out = Path(cfg.out_dir)
    manifest = Manifest.read(out / "manifest.tsv")
    store = load_sidecars(cfg.sidecars)
    variant = args.variant
    target = _variant_manifest(variant, out, manifest, store)
    rows = evaluate_manifest(
        target,
        store,
        seed=cfg.eval_seed,
        fmr_targets=tuple(cfg.fmr_targets),
        edc_range=cfg.edc_range,
    )
    header = ["dataset", "variant", "eer"]
    header += [f"fnmr@{t:g}" for t in cfg.fmr_targets]
    header += ["pauc_fnmr", "pauc_fmr"]
    metrics_path = out / f"metrics.{variant}.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [row["dataset"], variant, repr(row["eer"])]
            cells += [repr(row[f"fnmr@{t:g}"]) for t in cfg.fmr_targets]
            cells += [repr(row["pauc_fnmr"]), repr(row["pauc_fmr"])]
            fh.write(",".join(cells) + "\n")
    _write_json(
        out / f"eval_report.{variant}.json",
        {"config": cfg.echo(), "variant": variant, "rows": rows},
    )
    print(f"eval[{variant}]: {len(rows)} dataset rows -> {metrics_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out or "facedup-out")
    for name in ("scan_report.json", "dedup_report.json"):
        path = out / name
        if not path.exists():
            continue
        payload = json.loads(path.read_text(encoding="utf-8"))
        print(f"== {name}")
        if name == "scan_report.json":
            for ds, counts in sorted(payload.get("manifest", {}).items()):
                stats = payload.get("raw_duplicate_stats", {}).get(ds, {})
                print(
                    f"  {ds}: images={counts['images']} subjects={counts['subjects']} "
                    f"intra={stats.get('intra', 0)} inter={stats.get('inter', 0)} "
                    f"combined={stats.get('combined', 0)}"
                )
        else:
            for ds, counts in sorted(payload.get("per_dataset", {}).items()):
                print(f"  {ds}: removed={counts['removed']} moved={counts['moved']}")
            acts = payload.get("actions", {})
            print(
                f"  total: removed={acts.get('removed', 0)} moved={acts.get('moved', 0)} "
                f"kept-in-sets={acts.get('kept_in_sets', 0)}"
            )
    for path in sorted(out.glob("metrics.*.csv")):
        print(f"== {path.name}")
        print(path.read_text(encoding="utf-8").rstrip())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facedup",
        description="Duplicate detection, preservative deduplication, and "
        "verification metrics for labeled face-image datasets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--root", action="append", help="dataset root as NAME=PATH (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--sidecar", action="append", help="feature sidecar file (repeatable)")

    p = sub.add_parser("scan", help="detect exact and near duplicates")
    common(p)
    p.add_argument("--variants", help="comma list: original,preprocessed")
    p.add_argument("--phash-distance", type=int, help="max Hamming distance for pHash grouping")
    p.add_argument("--exclude-list", help="TSV of dataset_id<TAB>rel_path to skip")
    p.add_argument("--save-aligned", help="materialize aligned crops as PNGs under this directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("dedup", help="build the deduplication plan")
    common(p)
    p.add_argument(
        "--mode",
        choices=["preservative", "full-removal"],
        default="preservative",
    )
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("apply", help="apply a plan to the manifest / tree")
    common(p)
    p.add_argument("--mode", choices=["list-only", "materialize"], default="list-only")
    p.add_argument("--dest", help="destination directory for materialize")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="verification and EDC metrics")
    common(p)
    p.add_argument(
        "--variant",
        choices=["original", "full", "preservative"],
        default="original",
    )
    p.add_argument("--seed", type=int, help="non-mated sampling seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print a human-readable summary")
    p.add_argument("--out", help="output directory to summarize")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DecodeError, SidecarError, MetricError, AlignmentError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
