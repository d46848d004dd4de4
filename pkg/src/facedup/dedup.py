"""Preservative deduplication: merge, correct, select, resolve, plan.

Raw duplicate sets from all hash sources and image variants are merged
into disjoint sets. Near/mixed sets go through a similarity-based false
positive correction; each surviving set keeps exactly one representative
(byte-identical intra-subject sets keep the lexically first path, others
keep the highest-quality image). Inter-subject sets additionally resolve
which subject the kept image belongs to, or drop it when the assignment
would be unsafe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import shutil

from ._union_find import UnionFind
from .corpus import DataError, ImageRecord, Manifest
from .features import FeatureStore, cosine_similarity, mean_similarity, quality_key
from .hashing import RawDupSet

FP_RULES = ("all_below", "any_below", "components")


@dataclass(frozen=True)
class MergedDupSet:
    members: tuple[str, ...]  # sorted image_ids
    subjects: frozenset[tuple[str, str]]  # (dataset_id, subject_id)
    kind: str  # intra | inter
    exactness: str  # exact | near | mixed
    exact_groups: tuple[tuple[str, ...], ...]  # byte-identical fragments, size >= 2

    @property
    def key(self) -> str:
        return self.members[0]


@dataclass(frozen=True)
class DedupAction:
    dataset_id: str
    rel_path: str
    subject_id: str
    verdict: str  # keep | remove | move
    new_subject: str | None = None

    @property
    def image_id(self) -> str:
        return f"{self.dataset_id}/{self.rel_path}"

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.dataset_id, self.rel_path)


@dataclass
class DedupPlan:
    actions: list[DedupAction]
    report: dict = field(default_factory=dict)

    def removed(self) -> list[DedupAction]:
        return [a for a in self.actions if a.verdict == "remove"]

    def moved(self) -> list[DedupAction]:
        return [a for a in self.actions if a.verdict == "move"]

    def write_removed(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for a in self.removed():
                fh.write(f"{a.dataset_id}\t{a.rel_path}\n")

    def write_moved(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for a in self.moved():
                fh.write(f"{a.dataset_id}\t{a.rel_path}\t{a.subject_id}\t{a.new_subject}\n")


def _build_set(members: list[str], manifest: Manifest, exact_uf: UnionFind) -> MergedDupSet:
    members = sorted(members)
    subjects = frozenset(
        (manifest.get(m).dataset_id, manifest.get(m).subject_id) for m in members
    )
    groups: dict = {}
    for m in members:
        try:
            root = exact_uf.find(m)
        except KeyError:
            continue
        groups.setdefault(root, []).append(m)
    exact_groups = tuple(
        tuple(sorted(g)) for g in sorted(groups.values()) if len(g) >= 2
    )
    if any(len(g) == len(members) for g in exact_groups):
        exactness = "exact"
    elif exact_groups:
        exactness = "mixed"
    else:
        exactness = "near"
    return MergedDupSet(
        members=tuple(members),
        subjects=subjects,
        kind="intra" if len(subjects) == 1 else "inter",
        exactness=exactness,
        exact_groups=exact_groups,
    )


def merge_overlapping_sets(
    sets: list[RawDupSet], manifest: Manifest
) -> list[MergedDupSet]:
    """Union-find over shared members across all sources and variants.

    Output is canonical: members sorted within each set, sets sorted by
    their smallest member, pairwise disjoint.
    """
    uf = UnionFind()
    exact_uf = UnionFind()  # file-level byte identity: original-variant exact sets only
    for s in sets:
        first = s.members[0]
        for m in s.members:
            uf.union(first, m)
            if s.source == "exact" and s.variant == "original":
                exact_uf.union(first, m)
    for m in uf.keys():
        if m not in manifest:
            raise DataError(f"duplicate-set member not in manifest: {m}")
    merged = [_build_set(comp, manifest, exact_uf) for comp in uf.components()]
    merged.sort(key=lambda s: s.members[0])
    return merged


def _same_exact_group(a: str, b: str, s: MergedDupSet) -> bool:
    return any(a in g and b in g for g in s.exact_groups)


def false_positive_filter(
    s: MergedDupSet,
    store: FeatureStore,
    manifest: Manifest,
    threshold: float = 0.40,
    rule: str = "all_below",
) -> tuple[list[MergedDupSet], list[str]]:
    """Similarity-based false positive correction of one near/mixed set.

    Pairs inside a byte-identical fragment are exempt (they cannot be
    false positives); pairs where either image lacks an embedding are not
    evaluable. Under the default "all_below" rule an image is ejected when
    it has at least one evaluable pair and every one of them scores below
    the threshold ("any_below" ejects on a single below-threshold pair;
    "components" splits the set at below-threshold edges). Ejected images
    simply stay in the dataset. Returns (surviving sets, ejected ids);
    sets reduced below 2 members dissolve.
    """
    if rule not in FP_RULES:
        raise ValueError(f"unknown fp rule {rule!r}")
    if s.exactness == "exact":
        return [s], []
    members = list(s.members)
    emb = {m: store.embedding(m) for m in members}
    sims: dict[tuple[str, str], float] = {}
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            a, b = members[i], members[j]
            if _same_exact_group(a, b, s):
                continue
            if emb[a] is None or emb[b] is None:
                continue
            sims[(a, b)] = cosine_similarity(emb[a], emb[b])

    exact_uf = UnionFind()
    for g in s.exact_groups:
        for m in g[1:]:
            exact_uf.union(g[0], m)

    if rule == "components":
        uf = UnionFind(members)
        for (a, b), sim in sims.items():
            if sim >= threshold:
                uf.union(a, b)
        for g in s.exact_groups:
            for m in g[1:]:
                uf.union(g[0], m)
        for m in members:
            if emb[m] is None:  # cannot be exonerated; stays attached
                for other in members:
                    if other != m:
                        uf.union(m, other)
        comps = uf.components()
        survivors = [
            _build_set(c, manifest, exact_uf) for c in comps if len(c) >= 2
        ]
        survivors.sort(key=lambda x: x.members[0])
        ejected = sorted(m for c in comps if len(c) < 2 for m in c)
        return survivors, ejected

    ejected = []
    for m in members:
        incident = [sim for pair, sim in sims.items() if m in pair]
        if not incident:
            continue  # no evaluable pair: retained, cannot be exonerated
        if rule == "any_below":
            bad = any(sim < threshold for sim in incident)
        else:  # all_below
            bad = all(sim < threshold for sim in incident)
        if bad:
            ejected.append(m)
    kept = [m for m in members if m not in set(ejected)]
    if len(kept) < 2:
        return [], sorted(ejected)  # leftovers revert to keep via dissolution
    return [_build_set(kept, manifest, exact_uf)], sorted(ejected)


def select_representative(s: MergedDupSet, store: FeatureStore, manifest: Manifest) -> str:
    """The set member to keep.

    Byte-identical intra-subject sets keep the lexically first path; all
    other sets keep the highest quality score (missing scores count as
    negative infinity), ties broken by ascending lexical path.
    """
    if len(s.members) < 2:
        raise ValueError("representative needs a set of >= 2")
    paths = {m: manifest.get(m).sort_key for m in s.members}
    if s.exactness == "exact" and s.kind == "intra":
        return min(s.members, key=lambda m: paths[m])
    return min(s.members, key=lambda m: (-quality_key(store.quality(m)), paths[m]))


@dataclass(frozen=True)
class InterResolution:
    verdict: str  # keep | move | remove
    target: tuple[str, str] | None  # (dataset_id, subject_id) for keep/move
    reason: str


def resolve_inter_subject(
    s: MergedDupSet,
    representative: str,
    manifest: Manifest,
    store: FeatureStore,
    duplicate_involved: set[str],
    t_sim: float = 0.40,
    t_margin: float = 0.20,
) -> InterResolution:
    """Decide the subject for the kept image of an inter-subject set.

    The representative is compared against each candidate subject's
    non-duplicate images (never assigned to any raw duplicate set) that
    have embeddings; subjects with no usable gallery are excluded. The
    best mean similarity must reach t_sim and beat the runner-up by
    t_margin (both strict-less-than exclusions), otherwise the image is
    removed.
    """
    rep_emb = store.embedding(representative)
    if rep_emb is None:
        return InterResolution("remove", None, "representative_has_no_embedding")
    galleries: dict[tuple[str, str], list] = {}
    for ds, subj in sorted(s.subjects):
        gallery = [
            store.embedding(r.image_id)
            for r in manifest
            if r.dataset_id == ds
            and r.subject_id == subj
            and r.image_id not in duplicate_involved
            and store.embedding(r.image_id) is not None
        ]
        if gallery:
            galleries[(ds, subj)] = gallery
    if not galleries:
        return InterResolution("remove", None, "no_candidate_subjects")
    means = {
        cand: mean_similarity(rep_emb, gallery) for cand, gallery in galleries.items()
    }
    ranked = sorted(means, key=lambda c: (-means[c], c))
    best = ranked[0]
    if means[best] < t_sim:
        return InterResolution("remove", None, "below_similarity_threshold")
    if len(ranked) >= 2 and abs(means[best] - means[ranked[1]]) < t_margin:
        return InterResolution("remove", None, "margin_too_small")
    rep_rec = manifest.get(representative)
    if best == (rep_rec.dataset_id, rep_rec.subject_id):
        return InterResolution("keep", best, "assigned_to_current_subject")
    return InterResolution("move", best, "assigned_to_new_subject")


@dataclass
class DedupConfig:
    t_fp: float = 0.40
    t_assign: float = 0.40
    t_margin: float = 0.20
    fp_rule: str = "all_below"


def build_plan(
    manifest: Manifest,
    merged_sets: list[MergedDupSet],
    store: FeatureStore,
    config: DedupConfig | None = None,
) -> DedupPlan:
    """Apply the full pipeline to merged sets and emit a deterministic plan.

    Stage order: exact intra-subject selection, false positive correction,
    quality-based representative selection, inter-subject resolution.
    Images ejected by the correction revert to implicit keeps and appear
    only in the report.
    """
    config = config or DedupConfig()
    duplicate_involved = {m for s in merged_sets for m in s.members}
    for m in duplicate_involved:
        if m not in manifest:
            raise DataError(f"duplicate-set member not in manifest: {m}")

    actions: list[DedupAction] = []
    fp_ejected: list[str] = []
    dissolved_sets = 0
    inter_reasons: dict[str, int] = {}
    collision_keeps = 0
    kept_in_sets = 0
    moved_count = 0

    def act(image_id: str, verdict: str, new_subject: str | None = None) -> None:
        rec = manifest.get(image_id)
        actions.append(
            DedupAction(rec.dataset_id, rec.rel_path, rec.subject_id, verdict, new_subject)
        )

    for s in merged_sets:
        if s.exactness == "exact" and s.kind == "intra":
            surviving = [s]
            ejected: list[str] = []
        else:
            surviving, ejected = false_positive_filter(
                s, store, manifest, config.t_fp, config.fp_rule
            )
        fp_ejected.extend(ejected)
        if not surviving:
            dissolved_sets += 1
            continue
        for sub in surviving:
            rep = select_representative(sub, store, manifest)
            if sub.kind == "intra":
                resolution = InterResolution(
                    "keep", next(iter(sub.subjects)), "intra_subject"
                )
            else:
                resolution = resolve_inter_subject(
                    sub,
                    rep,
                    manifest,
                    store,
                    duplicate_involved,
                    config.t_assign,
                    config.t_margin,
                )
                inter_reasons[resolution.reason] = inter_reasons.get(resolution.reason, 0) + 1

            keep_id: str | None = None
            move_target: str | None = None
            if resolution.verdict == "keep":
                keep_id = rep
            elif resolution.verdict == "move":
                target_ds, target_subj = resolution.target
                # moving onto a subject that already holds a byte-identical
                # copy degenerates to keeping that copy in place
                twins = [
                    m
                    for g in sub.exact_groups
                    if rep in g
                    for m in g
                    if m != rep
                    and manifest.get(m).dataset_id == target_ds
                    and manifest.get(m).subject_id == target_subj
                ]
                if twins:
                    keep_id = min(twins, key=lambda m: manifest.get(m).sort_key)
                    collision_keeps += 1
                else:
                    keep_id = rep
                    move_target = target_subj

            for m in sub.members:
                if m == keep_id:
                    if move_target is not None:
                        act(m, "move", move_target)
                        moved_count += 1
                    else:
                        act(m, "keep")
                        kept_in_sets += 1
                else:
                    act(m, "remove")

    actions.sort(key=lambda a: a.sort_key)
    removed_count = sum(1 for a in actions if a.verdict == "remove")
    per_dataset: dict[str, dict[str, int]] = {
        ds: {"removed": 0, "moved": 0} for ds in manifest.datasets
    }
    for a in actions:
        if a.verdict == "remove":
            per_dataset[a.dataset_id]["removed"] += 1
        elif a.verdict == "move":
            per_dataset[a.dataset_id]["moved"] += 1

    report = {
        "thresholds": {
            "t_fp": config.t_fp,
            "t_assign": config.t_assign,
            "t_margin": config.t_margin,
            "fp_rule": config.fp_rule,
        },
        "sets": {
            "merged": len(merged_sets),
            "dissolved_by_fp_filter": dissolved_sets,
            "fp_ejected_images": sorted(fp_ejected),
            "inter_resolutions": dict(sorted(inter_reasons.items())),
            "move_collision_keeps": collision_keeps,
        },
        "actions": {
            "removed": removed_count,
            "moved": moved_count,
            "kept_in_sets": kept_in_sets,
        },
        "per_dataset": per_dataset,
    }
    return DedupPlan(actions=actions, report=report)


def build_full_removal_plan(manifest: Manifest, merged_sets: list[MergedDupSet]) -> DedupPlan:
    """Remove every image involved in any duplicate set (no correction)."""
    actions = []
    for s in merged_sets:
        for m in s.members:
            rec = manifest.get(m)
            actions.append(DedupAction(rec.dataset_id, rec.rel_path, rec.subject_id, "remove"))
    actions.sort(key=lambda a: a.sort_key)
    per_dataset = {ds: {"removed": 0, "moved": 0} for ds in manifest.datasets}
    for a in actions:
        per_dataset[a.dataset_id]["removed"] += 1
    report = {
        "mode": "full_removal",
        "actions": {"removed": len(actions), "moved": 0, "kept_in_sets": 0},
        "per_dataset": per_dataset,
    }
    return DedupPlan(actions=actions, report=report)


def raw_set_stats(raw_sets: list[RawDupSet], manifest: Manifest) -> dict[str, dict[str, int]]:
    """Per-dataset duplicate counts in the pre-merge sense.

    Raw sets from different hash functions overlap, so one image can be an
    intra-subject duplicate in one set and an inter-subject duplicate in
    another; `combined` counts the union.
    """
    intra_images: dict[str, set] = {}
    inter_images: dict[str, set] = {}
    all_images: dict[str, set] = {}
    intra_subjects: dict[str, set] = {}
    inter_subjects: dict[str, set] = {}
    for s in raw_sets:
        subjects = {
            (manifest.get(m).dataset_id, manifest.get(m).subject_id) for m in s.members
        }
        intra = len(subjects) == 1
        for m in s.members:
            rec = manifest.get(m)
            all_images.setdefault(rec.dataset_id, set()).add(m)
            if intra:
                intra_images.setdefault(rec.dataset_id, set()).add(m)
                intra_subjects.setdefault(rec.dataset_id, set()).add(rec.subject_id)
            else:
                inter_images.setdefault(rec.dataset_id, set()).add(m)
                inter_subjects.setdefault(rec.dataset_id, set()).add(rec.subject_id)
    out = {}
    for ds in manifest.datasets:
        out[ds] = {
            "intra": len(intra_images.get(ds, ())),
            "subjects_with_intra": len(intra_subjects.get(ds, ())),
            "inter": len(inter_images.get(ds, ())),
            "subjects_with_inter": len(inter_subjects.get(ds, ())),
            "combined": len(all_images.get(ds, ())),
        }
    return out


def apply_plan(
    plan: DedupPlan,
    manifest: Manifest,
    mode: str = "list-only",
    roots: dict[str, str | Path] | None = None,
    out_dir: str | Path | None = None,
) -> Manifest:
    """Apply a plan to a manifest; optionally materialize the cleaned tree.

    list-only returns the filtered manifest: removed images drop out and
    moved images keep their path but carry the new subject label (the
    image identity stays stable for feature lookups). materialize copies
    kept files into out_dir/<dataset>/..., physically relocating moved
    images under their new subject directory, and returns a manifest of
    the new layout.
    """
    by_id = {a.image_id: a for a in plan.actions}
    records = []
    for rec in manifest:
        action = by_id.get(rec.image_id)
        if action is None or action.verdict == "keep":
            records.append(rec)
        elif action.verdict == "remove":
            continue
        elif action.verdict == "move":
            records.append(
                ImageRecord(rec.dataset_id, action.new_subject, rec.rel_path, rec.byte_len)
            )
    if mode == "list-only":
        return Manifest(records=records)
    if mode != "materialize":
        raise ValueError(f"unknown apply mode {mode!r}")
    if roots is None or out_dir is None:
        raise DataError("materialize needs dataset roots and an output directory")
    out_dir = Path(out_dir)
    out_records = []
    for rec in manifest:
        action = by_id.get(rec.image_id)
        if action is not None and action.verdict == "remove":
            continue
        if action is not None and action.verdict == "move":
            basename = rec.rel_path.rsplit("/", 1)[-1]
            new_rel = f"{action.new_subject}/{basename}"
            out_records.append(
                ImageRecord(rec.dataset_id, action.new_subject, new_rel, rec.byte_len)
            )
        else:
            out_records.append(rec)
        out_rec = out_records[-1]
        src = Path(roots[rec.dataset_id]) / rec.rel_path
        dst = out_dir / out_rec.dataset_id / out_rec.rel_path
        dst.parent.mkdir(parents=True, exist_ok=True)
        if dst.exists():
            raise DataError(f"materialize collision at {dst}")
        shutil.copyfile(src, dst)
    return Manifest(records=out_records)
