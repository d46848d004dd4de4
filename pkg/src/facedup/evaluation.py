"""Verification and quality-assessment metrics.

Mated pairs are chained circularly per subject (image i with image i+1,
last with first when a subject has more than two images) so every image
sits in the same number of comparisons; an equal number of non-mated
cross-subject pairs is drawn with a seeded RNG. Metrics: interpolated
EER, FNMR at an approximated FMR operating point, and error-versus-
discard curves with their partial AUC.

Threshold convention throughout: a comparison is accepted (called mated)
when score >= threshold.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

from .corpus import Manifest


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class ScoredPair:
    a: str
    b: str
    mated: bool
    score: float
    pair_quality: float = math.nan


def circular_mated_pairs(images: list[str]) -> list[tuple[str, str]]:
    """Circular pair chain over one subject's lexically ordered images.

    N > 2 gives N pairs (closing the circle), N == 2 gives one pair,
    subjects with fewer than two images yield nothing.
    """
    n = len(images)
    if n < 2:
        return []
    pairs = [(images[i], images[i + 1]) for i in range(n - 1)]
    if n > 2:
        pairs.append((images[-1], images[0]))
    return pairs


def mated_pairs_for_manifest(manifest: Manifest) -> list[tuple[str, str]]:
    pairs = []
    for (_ds, _subj), records in sorted(manifest.by_subject().items()):
        pairs.extend(
            circular_mated_pairs([r.image_id for r in records])
        )
    return pairs


def sample_nonmated(manifest: Manifest, n: int, seed: int = 1) -> list[tuple[str, str]]:
    """Draw n distinct cross-subject pairs uniformly with a seeded RNG."""
    if n == 0:
        return []
    records = list(manifest)
    subject_of = {r.image_id: (r.dataset_id, r.subject_id) for r in records}
    ids = [r.image_id for r in records]
    per_subject: dict = {}
    for r in records:
        per_subject[(r.dataset_id, r.subject_id)] = per_subject.get((r.dataset_id, r.subject_id), 0) + 1
    total = len(ids) * (len(ids) - 1) // 2
    same = sum(c * (c - 1) // 2 for c in per_subject.values())
    possible = total - same
    if n > possible:
        raise MetricError(f"requested {n} non-mated pairs, only {possible} exist")
    rng = random.Random(seed)
    if n * 2 >= possible:
        # small instance: enumerate and sample without replacement
        all_pairs = [
            (ids[i], ids[j])
            for i in range(len(ids))
            for j in range(i + 1, len(ids))
            if subject_of[ids[i]] != subject_of[ids[j]]
        ]
        return rng.sample(all_pairs, n)
    chosen: set[tuple[str, str]] = set()
    out = []
    while len(out) < n:
        i = rng.randrange(len(ids))
        j = rng.randrange(len(ids))
        if i == j:
            continue
        a, b = ids[i], ids[j]
        if subject_of[a] == subject_of[b]:
            continue
        key = (a, b) if a < b else (b, a)
        if key in chosen:
            continue
        chosen.add(key)
        out.append(key)
    return out


def _split_scores(pairs: list[ScoredPair]) -> tuple[list[float], list[float]]:
    mated = sorted(p.score for p in pairs if p.mated)
    nonmated = sorted(p.score for p in pairs if not p.mated)
    if not mated or not nonmated:
        raise MetricError("need both mated and non-mated pairs")
    return mated, nonmated


def _fnmr_at(mated_sorted: list[float], t: float) -> float:
    # fraction of mated scores < t (rejected under accept-iff->=t)
    return bisect_left(mated_sorted, t) / len(mated_sorted)


def _fmr_at(nonmated_sorted: list[float], t: float) -> float:
    # fraction of non-mated scores >= t (accepted)
    return (len(nonmated_sorted) - bisect_left(nonmated_sorted, t)) / len(nonmated_sorted)


def eer(pairs: list[ScoredPair]) -> float:
    """Equal error rate, linearly interpolated between the two candidate
    thresholds that bracket the FNMR/FMR crossing."""
    mated, nonmated = _split_scores(pairs)
    candidates = sorted(set(mated) | set(nonmated))
    candidates.append(candidates[-1] + 1.0)  # above every score: FNMR 1, FMR 0
    prev_t = None
    prev_fnmr = prev_fmr = 0.0
    for t in candidates:
        fnmr = _fnmr_at(mated, t)
        fmr = _fmr_at(nonmated, t)
        if fnmr >= fmr:
            if fnmr == fmr:
                return fnmr
            if prev_t is None:
                return (fnmr + fmr) / 2.0
            dfn = fnmr - prev_fnmr
            dfm = fmr - prev_fmr
            lam = (prev_fmr - prev_fnmr) / (dfn - dfm)
            return prev_fnmr + dfn * lam
        prev_t, prev_fnmr, prev_fmr = t, fnmr, fmr
    raise MetricError("no crossing found")  # unreachable: sentinel always crosses


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fnmr: float
    achieved_fmr: float
    target_fmr: float
    warning: str | None = None


def fnmr_at_fmr(pairs: list[ScoredPair], target_fmr: float) -> OperatingPoint:
    """FNMR at the loosest threshold whose empirical FMR is within target.

    The threshold is the lowest value t (drawn from the observed scores,
    or just above the maximum when no score qualifies) with
    FMR(t) <= target_fmr; accept-iff-score>=t semantics.
    """
    mated, nonmated = _split_scores(pairs)
    allowed = math.floor(target_fmr * len(nonmated))
    warning = None
    if allowed < 1:
        warning = (
            f"target FMR {target_fmr:g} below 1/{len(nonmated)}; "
            "threshold sits above every non-mated score"
        )
    if allowed >= len(nonmated):
        t = -math.inf
    else:
        boundary = nonmated[len(nonmated) - 1 - allowed]  # (allowed+1)-th highest
        scores = sorted(set(mated) | set(nonmated))
        idx = bisect_right(scores, boundary)
        t = scores[idx] if idx < len(scores) else scores[-1] + 1.0
    return OperatingPoint(
        threshold=t,
        fnmr=_fnmr_at(mated, t),
        achieved_fmr=_fmr_at(nonmated, t),
        target_fmr=target_fmr,
        warning=warning,
    )


@dataclass
class EdcCurve:
    points: list[tuple[float, float]]  # (discard fraction, error), fractions ascending

    def __post_init__(self):
        if not self.points or self.points[0][0] != 0.0:
            raise MetricError("EDC curve must start at discard fraction 0")

    def error_at(self, fraction: float) -> float:
        """Piecewise-linear interpolation of the curve."""
        pts = self.points
        if fraction <= pts[0][0]:
            return pts[0][1]
        for (f0, e0), (f1, e1) in zip(pts, pts[1:]):
            if fraction <= f1:
                if f1 == f0:
                    return e1
                w = (fraction - f0) / (f1 - f0)
                return e0 + (e1 - e0) * w
        raise MetricError(f"discard fraction {fraction} outside curve domain")


def edc(
    pairs: list[ScoredPair], comparison_threshold: float, error_kind: str
) -> EdcCurve:
    """Error-versus-discard curve for one error kind.

    Pairs of the relevant class (mated for FNMR, non-mated for FMR) are
    discarded in ascending pair-quality order, tied qualities together;
    the error over the retained pairs is recomputed at the fixed
    comparison threshold after every step. Discarding the final tie group
    would leave nothing to evaluate, so the curve closes at fraction 1.0
    holding the last computable error (a single pair therefore yields the
    degenerate two-point curve [(0, e), (1, e)]).
    """
    if error_kind not in ("FNMR", "FMR"):
        raise MetricError(f"unknown EDC error kind {error_kind!r}")
    want_mated = error_kind == "FNMR"
    relevant = [p for p in pairs if p.mated == want_mated]
    if not relevant:
        raise MetricError("no pairs of the requested class")
    for p in relevant:
        if math.isnan(p.pair_quality):
            raise MetricError(f"pair ({p.a}, {p.b}) lacks a pair quality")
    relevant.sort(key=lambda p: (p.pair_quality, p.a, p.b))
    n = len(relevant)

    def error_over(sub: list[ScoredPair]) -> float:
        if want_mated:
            wrong = sum(1 for p in sub if p.score < comparison_threshold)
        else:
            wrong = sum(1 for p in sub if p.score >= comparison_threshold)
        return wrong / len(sub)

    points = [(0.0, error_over(relevant))]
    i = 0
    while i < n:
        q = relevant[i].pair_quality
        j = i
        while j < n and relevant[j].pair_quality == q:
            j += 1
        if j >= n:
            break  # discarding the last tie group would empty the set
        points.append((j / n, error_over(relevant[j:])))
        i = j
    points.append((1.0, points[-1][1]))
    return EdcCurve(points)


def pauc(curve: EdcCurve, lo: float = 0.0, hi: float = 0.20) -> float:
    """Partial AUC of the piecewise-linear curve, normalized by the range
    width so a flat curve at error e integrates to e."""
    if not lo < hi:
        raise MetricError("empty pAUC range")
    last_f = curve.points[-1][0]
    if hi > last_f:
        raise MetricError(f"pAUC range [{lo}, {hi}] outside curve domain (max {last_f})")
    xs = sorted({lo, hi} | {f for f, _ in curve.points if lo < f < hi})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        y0 = curve.error_at(x0)
        y1 = curve.error_at(x1)
        area += (y0 + y1) / 2.0 * (x1 - x0)
    return area / (hi - lo)


def score_pairs(pairs: list[tuple[str, str]], mated: bool, store) -> list[ScoredPair]:
    """Attach similarity scores and pair qualities; missing embeddings are fatal."""
    from .features import cosine_similarity, quality_key  # local import avoids a cycle

    missing = sorted({i for p in pairs for i in p if store.embedding(i) is None})
    if missing:
        raise MetricError(
            f"missing embeddings for {len(missing)} images: {', '.join(missing[:10])}"
            + ("..." if len(missing) > 10 else "")
        )
    out = []
    for a, b in pairs:
        score = cosine_similarity(store.embedding(a), store.embedding(b))
        pq = min(quality_key(store.quality(a)), quality_key(store.quality(b)))
        out.append(ScoredPair(a, b, mated, score, pq))
    return out


def evaluate_manifest(
    manifest: Manifest,
    store,
    seed: int = 1,
    fmr_targets: tuple[float, ...] = (1e-3, 1e-2),
    edc_range: tuple[float, float] = (0.0, 0.20),
) -> list[dict]:
    """One metrics row per dataset: EER, FNMR at the FMR targets, and the
    FNMR/FMR EDC pAUC over the discard range.

    The EDC comparison threshold is fixed at the first FMR target's
    operating point on the undiscarded pair set. Non-mated pairs are
    resampled per call with the same seed.
    """
    rows = []
    for ds in manifest.datasets:
        sub = Manifest(records=[r for r in manifest if r.dataset_id == ds])
        mated_ids = mated_pairs_for_manifest(sub)
        if not mated_ids:
            raise MetricError(f"dataset {ds} yields no mated pairs")
        nonmated_ids = sample_nonmated(sub, len(mated_ids), seed)
        pairs = score_pairs(mated_ids, True, store) + score_pairs(
            nonmated_ids, False, store
        )
        row: dict = {
            "dataset": ds,
            "mated_pairs": len(mated_ids),
            "nonmated_pairs": len(nonmated_ids),
            "eer": eer(pairs),
        }
        for target in fmr_targets:
            op = fnmr_at_fmr(pairs, target)
            row[f"fnmr@{target:g}"] = op.fnmr
        threshold = fnmr_at_fmr(pairs, fmr_targets[0]).threshold
        row["edc_threshold"] = threshold
        for kind in ("FNMR", "FMR"):
            curve = edc(pairs, threshold, kind)
            row[f"pauc_{kind.lower()}"] = pauc(curve, edc_range[0], edc_range[1])
        rows.append(row)
    return rows
