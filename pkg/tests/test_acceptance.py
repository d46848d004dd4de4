"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

import fixture40
from facedup.align import TEMPLATE_112, umeyama_similarity
from facedup.cli import main
from facedup.corpus import ImageRecord, Manifest, PixelBuffer, build_manifest, decode_canonical
from facedup.dedup import merge_overlapping_sets
from facedup.evaluation import (
    ScoredPair,
    edc,
    eer,
    fnmr_at_fmr,
    mated_pairs_for_manifest,
    pauc,
)
from facedup.hashing import HashConfig, RawDupSet, content_digest, find_duplicate_sets, phash

from genimages import blobs32, encode, gradient32, noise32, textured
from oracles import (
    circular_pair_count_oracle,
    eer_oracle_bulk,
    fnmr_at_fmr_oracle_bulk,
    merge_fixpoint_oracle,
    pauc_oracle_fast,
    phash_oracle,
)


def ok(name, detail=""):
    print(f"ACCEPTANCE PASS: {name}" + (f" ({detail})" if detail else ""))


def test_exact_duplicate_soundness(tmp_path):
    """10,000 files, 500 planted byte-identical groups, 20 simulated digest
    collisions: exactly 500 groups, zero false positives, < 30 s."""
    rng = random.Random(1234)
    root = tmp_path / "ds"
    n_unique = 9000
    collision_members = []
    for i in range(n_unique):
        subj = root / f"s{i % 100:03d}"
        subj.mkdir(parents=True, exist_ok=True)
        path = subj / f"u{i:05d}.jpg"
        path.write_bytes(rng.randbytes(rng.randint(40, 200)))
        if i < 40:
            collision_members.append(f"ds/{path.relative_to(root).as_posix()}")
    planted = []
    for g in range(500):
        data = rng.randbytes(rng.randint(40, 200))
        members = []
        for j in range(2):
            subj = root / f"g{g % 50:03d}"
            subj.mkdir(parents=True, exist_ok=True)
            path = subj / f"dup{g:04d}_{j}.jpg"
            path.write_bytes(data)
            members.append(f"ds/{path.relative_to(root).as_posix()}")
        planted.append(tuple(sorted(members)))

    collision_token = {}
    for k in range(0, 40, 2):
        a, b = collision_members[k], collision_members[k + 1]
        collision_token[a] = collision_token[b] = b"C" * 28 + k.to_bytes(4, "big")

    manifest, _ = build_manifest([("ds", root)])
    assert len(manifest) == 10_000
    by_id = {r.image_id: r for r in manifest}

    def file_bytes(rec):
        return (root / rec.rel_path).read_bytes()

    def digest_fn_for(rec_id):
        return collision_token.get(rec_id)

    def digest(data):
        return content_digest(data)

    # wrap: per-image collision injection needs the id, so patch via bytes map
    content_to_id = {}
    for rec in manifest:
        if rec.image_id in collision_token:
            content_to_id[file_bytes(rec)] = rec.image_id

    def colliding_digest(data):
        rec_id = content_to_id.get(data)
        if rec_id is not None:
            return collision_token[rec_id]
        return content_digest(data)

    t0 = time.perf_counter()
    result = find_duplicate_sets(
        manifest,
        "original",
        HashConfig(phash=False, crop_resistant=False),
        file_bytes,
        digest_fn=colliding_digest,
        workers=1,
    )
    elapsed = time.perf_counter() - t0
    got = sorted(s.members for s in result.sets)
    assert got == sorted(planted)
    assert len(got) == 500
    for member in collision_token:
        assert not any(member in g for g in got)
    assert elapsed < 30.0
    ok("exact-duplicate soundness", f"500 groups, 0 false positives, {elapsed:.1f}s")


def test_phash_oracle_equality():
    """200 synthetic images: hash equals the scalar double-precision oracle
    bit-exactly in 100% of cases."""
    cases = [(gradient32, 70), (noise32, 70), (blobs32, 60)]
    total = 0
    for gen, count in cases:
        for seed in range(count):
            arr = gen(seed)
            assert phash(PixelBuffer(arr)) == phash_oracle(arr.tolist()), (gen.__name__, seed)
            total += 1
    assert total == 200
    ok("pHash oracle equality", "200/200 bit-exact")


def test_near_duplicate_recall(tmp_path):
    """JPEG re-encodes (q85-95) of 100 base images each group with their
    source at d=4; at least 95% already group at d=0."""
    root = tmp_path / "ds"
    pairs = []
    for i in range(100):
        subj = root / f"s{i:03d}"
        subj.mkdir(parents=True)
        base_arr = textured(1000 + i, 160)
        base = subj / "base.jpg"
        base.write_bytes(encode(base_arr, "JPEG", quality=95))
        redecoded = decode_canonical(base.read_bytes()).array
        copy = subj / "copy.jpg"
        copy.write_bytes(encode(redecoded, "JPEG", quality=85 + (i % 11)))
        pairs.append((f"ds/s{i:03d}/base.jpg", f"ds/s{i:03d}/copy.jpg"))
    manifest, _ = build_manifest([("ds", root)])

    def file_bytes(rec):
        return (root / rec.rel_path).read_bytes()

    def decode(rec):
        return decode_canonical(file_bytes(rec), rec.image_id)

    def grouped(max_d):
        cfg = HashConfig(exact=False, crop_resistant=False, phash_max_distance=max_d)
        res = find_duplicate_sets(manifest, "original", cfg, file_bytes, decode)
        member_sets = [set(s.members) for s in res.sets]
        count = 0
        for a, b in pairs:
            if any(a in ms and b in ms for ms in member_sets):
                count += 1
        return count

    at_d4 = grouped(4)
    at_d0 = grouped(0)
    assert at_d4 == 100
    assert at_d0 >= 95
    ok("near-duplicate recall", f"100/100 at d=4, {at_d0}/100 at d=0")


def test_merge_correctness():
    """Merged sets equal the quadratic fixpoint oracle on 1,000 random
    overlapping instances."""
    rng = random.Random(7)
    universe = [f"d/s/{i:02d}.jpg" for i in range(60)]
    manifest = Manifest(
        records=[ImageRecord("d", "s", f"s/{i:02d}.jpg", 1) for i in range(60)]
    )
    for trial in range(1000):
        n_sets = rng.randint(0, 40)
        sets = []
        for _ in range(n_sets):
            members = rng.sample(universe, rng.randint(2, 5))
            sets.append(RawDupSet(tuple(sorted(members)), "phash", "original"))
        merged = merge_overlapping_sets(sets, manifest)
        expected = merge_fixpoint_oracle([list(s.members) for s in sets])
        assert [list(s.members) for s in merged] == expected, trial
    ok("merge correctness", "1000/1000 instances exact")


def test_rule_fixture_plan(tmp_path):
    """The 12-subject, 40-image fixture exercises every preservative rule
    branch; the emitted plan matches the hand-derived plan byte-exactly."""
    root = tmp_path / "fixture"
    fixture40.build(root)
    out = tmp_path / "out"
    sidecar = str(root / "features.tsv")
    assert main(["scan", "--root", f"fix={root / 'fix'}", "--out", str(out),
                 "--variants", "original,preprocessed", "--sidecar", sidecar]) == 0
    assert main(["dedup", "--out", str(out), "--sidecar", sidecar]) == 0
    assert (out / "removed.txt").read_text() == fixture40.expected_removed_lines()
    assert (out / "moved.txt").read_text() == fixture40.expected_moved_lines()
    skip = (out / "skiplist.txt").read_text()
    assert "fix/s12/z1.png\tlandmark_failure" in skip
    ok("rule fixture plan", "removed/moved lists byte-exact vs hand derivation")


def test_circular_pair_counts():
    """Total mated pairs equals the N/1/0 formula on 1,000 random draws."""
    rng = random.Random(99)
    for trial in range(1000):
        sizes = [rng.randint(1, 9) for _ in range(rng.randint(1, 25))]
        records = []
        for k, n in enumerate(sizes):
            for i in range(n):
                records.append(ImageRecord("d", f"s{k:02d}", f"s{k:02d}/{i}.jpg", 1))
        manifest = Manifest(records=records)
        pairs = mated_pairs_for_manifest(manifest)
        assert len(pairs) == circular_pair_count_oracle(sizes), trial
    ok("circular pair counts", "1000/1000 draws exact")


def _random_pairs(seed, n=1000):
    rng = random.Random(seed)
    sep = rng.uniform(0.3, 1.5)
    pairs = []
    for i in range(n):
        pairs.append(ScoredPair(f"m{i}", f"m{i}'", True, rng.gauss(sep, 1.0), rng.uniform(0, 50)))
        pairs.append(ScoredPair(f"n{i}", f"n{i}'", False, rng.gauss(-sep, 1.0), rng.uniform(0, 50)))
    return pairs


def test_metric_oracles():
    """EER, FNMR@FMR, pAUC match brute-force oracles within 1e-9 on 100
    random 2,000-pair instances; all are rank statistics."""
    for seed in range(100):
        pairs = _random_pairs(seed)
        mated = [p.score for p in pairs if p.mated]
        nonmated = [p.score for p in pairs if not p.mated]
        assert eer(pairs) == pytest.approx(eer_oracle_bulk(mated, nonmated), abs=1e-9)
        op = fnmr_at_fmr(pairs, 1e-3)
        assert op.fnmr == pytest.approx(
            fnmr_at_fmr_oracle_bulk(mated, nonmated, 1e-3), abs=1e-9
        )
        curve = edc(pairs, op.threshold, "FNMR")
        assert pauc(curve) == pytest.approx(
            pauc_oracle_fast(curve.points, 0.0, 0.2), abs=1e-9
        )

    # rank-statistic property: a strictly monotone transform changes nothing
    for seed in range(10):
        pairs = _random_pairs(seed, n=400)
        warp = lambda s: math.expm1(0.9 * s) if s > 0 else 0.9 * s
        warped = [
            ScoredPair(p.a, p.b, p.mated, warp(p.score), p.pair_quality) for p in pairs
        ]
        assert eer(pairs) == eer(warped)
        op, op_w = fnmr_at_fmr(pairs, 1e-3), fnmr_at_fmr(warped, 1e-3)
        assert op.fnmr == op_w.fnmr
        assert pauc(edc(pairs, op.threshold, "FNMR")) == pauc(
            edc(warped, op_w.threshold, "FNMR")
        )
        assert pauc(edc(pairs, op.threshold, "FMR")) == pauc(
            edc(warped, op_w.threshold, "FMR")
        )
    ok("metric oracles", "100 instances within 1e-9; monotone-transform invariant")


def test_umeyama_recovery():
    """1,000 random similarities recovered with max parameter error < 1e-9
    and no reflections."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        s = rng.uniform(0.5, 2.0)
        theta = rng.uniform(-math.pi, math.pi)
        tx, ty = rng.uniform(-50, 50, 2)
        c, si = math.cos(theta), math.sin(theta)
        fwd = np.array([[s * c, -s * si], [s * si, s * c]])
        src = TEMPLATE_112 @ fwd.T + [tx, ty]
        t = umeyama_similarity(src, TEMPLATE_112)
        m = np.asarray(t.matrix)
        assert np.linalg.det(m[:, :2]) > 0  # never a reflection
        err = max(
            abs(t.scale - 1.0 / s),
            abs((t.rotation + theta + math.pi) % (2 * math.pi) - math.pi),
            np.abs(t.apply(src) - TEMPLATE_112).max(),
        )
        worst = max(worst, err)
        assert err < 1e-9
    ok("umeyama recovery", f"1000/1000, worst error {worst:.2e}")


def test_worker_determinism(tmp_path):
    """scan+dedup+eval with 1, 4, and 16 workers produce byte-identical
    outputs."""
    root = tmp_path / "fixture"
    fixture40.build(root)
    sidecar = str(root / "features.tsv")
    outputs = {}
    files = [
        "manifest.tsv",
        "hashcache.tsv",
        "rawsets.jsonl",
        "skiplist.txt",
        "scan_report.json",
        "plan.tsv",
        "removed.txt",
        "moved.txt",
        "dedup_report.json",
        "metrics.preservative.csv",
        "eval_report.preservative.json",
    ]
    for workers in (1, 4, 16):
        out = tmp_path / f"out{workers}"
        assert main(["scan", "--root", f"fix={root / 'fix'}", "--out", str(out),
                     "--variants", "original,preprocessed", "--sidecar", sidecar,
                     "--workers", str(workers)]) == 0
        assert main(["dedup", "--out", str(out), "--sidecar", sidecar]) == 0
        assert main(["eval", "--out", str(out), "--sidecar", sidecar,
                     "--variant", "preservative"]) == 0
        outputs[workers] = {f: (out / f).read_bytes() for f in files}
    for f in files:
        assert outputs[1][f] == outputs[4][f] == outputs[16][f], f
    ok("determinism", "11 output files byte-identical across 1/4/16 workers")


@pytest.mark.skipif(
    not os.environ.get("FACEDUP_LFW_ROOT") or not os.environ.get("FACEDUP_LFW_SIDECAR"),
    reason="optional real-data smoke: set FACEDUP_LFW_ROOT and FACEDUP_LFW_SIDECAR",
)
def test_optional_lfw_smoke(tmp_path):
    """With real LFW data and model sidecars available, the preservative
    plan is expected near removed=9, moved=0; deviation is reported, not
    failed, since model-version drift shifts similarity scores."""
    root = os.environ["FACEDUP_LFW_ROOT"]
    sidecar = os.environ["FACEDUP_LFW_SIDECAR"]
    out = tmp_path / "out"
    assert main(["scan", "--root", f"lfw={root}", "--out", str(out),
                 "--variants", "original,preprocessed", "--sidecar", sidecar]) == 0
    assert main(["dedup", "--out", str(out), "--sidecar", sidecar]) == 0
    report = json.loads((out / "dedup_report.json").read_text())
    removed = report["per_dataset"]["lfw"]["removed"]
    moved = report["per_dataset"]["lfw"]["moved"]
    print(f"LFW smoke: removed={removed} (reference 9), moved={moved} (reference 0)")
    ok("optional LFW smoke", f"removed={removed}, moved={moved}")
