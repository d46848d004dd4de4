"""Per-image features served from sidecar files.

Sidecar format (UTF-8, LF, line-delimited) is the contract between this
engine and whatever model pipeline produced the features:

    #dim=<D>
    image_id \\t quality|"nan" \\t v1,v2,...,vD|"-" \\t detections_json|"-"

Quality "nan" means no quality score could be computed (it sorts below
every real score). "-" for the vector means no embedding could be
extracted; "-" or an empty JSON list for detections means landmark
detection failed. Vectors are stored L2-normalized; off-norm vectors are
normalized on load with a warning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .align import Detection

_NORM_TOL = 1e-6


class SidecarError(Exception):
    """Malformed sidecar content; message carries file and line number."""


@dataclass
class FeatureRecord:
    embedding: np.ndarray | None  # unit-norm float64, or None
    quality: float | None  # None = missing ("nan" in the file)
    detections: list[Detection]  # empty = landmark failure


@dataclass
class FeatureStore:
    dim: int
    records: dict[str, FeatureRecord] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.records

    def __len__(self) -> int:
        return len(self.records)

    def get(self, image_id: str) -> FeatureRecord | None:
        return self.records.get(image_id)

    def embedding(self, image_id: str) -> np.ndarray | None:
        rec = self.records.get(image_id)
        return rec.embedding if rec else None

    def quality(self, image_id: str) -> float | None:
        rec = self.records.get(image_id)
        return rec.quality if rec else None

    def has_landmarks(self, image_id: str) -> bool:
        rec = self.records.get(image_id)
        return bool(rec and rec.detections)

    def detections(self, image_id: str) -> list[Detection]:
        rec = self.records.get(image_id)
        return rec.detections if rec else []


def quality_key(quality: float | None) -> float:
    """Sortable quality: missing scores below every real value."""
    return -math.inf if quality is None else quality


def _parse_detections(blob: str, where: str) -> list[Detection]:
    if blob == "-":
        return []
    try:
        raw = json.loads(blob)
        return [
            Detection(
                bbox=tuple(float(v) for v in d["bbox"]),
                confidence=float(d["confidence"]),
                landmarks=tuple((float(p[0]), float(p[1])) for p in d["landmarks"]),
            )
            for d in raw
        ]
    except (ValueError, KeyError, TypeError) as exc:
        raise SidecarError(f"{where}: bad detections JSON: {exc}") from exc


def detections_to_json(detections: Iterable[Detection]) -> str:
    items = [
        {
            "bbox": list(d.bbox),
            "confidence": d.confidence,
            "landmarks": [list(p) for p in d.landmarks],
        }
        for d in detections
    ]
    return json.dumps(items, separators=(",", ":")) if items else "-"


def load_sidecars(paths: Iterable[str | Path]) -> FeatureStore:
    """Load and merge sidecar files; duplicate ids last-wins with a warning."""
    store: FeatureStore | None = None
    for path in paths:
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
            if not first.startswith("#dim="):
                raise SidecarError(f"{path}:1: missing #dim= header")
            try:
                dim = int(first[5:])
            except ValueError as exc:
                raise SidecarError(f"{path}:1: bad dimension {first[5:]!r}") from exc
            if dim < 1:
                raise SidecarError(f"{path}:1: dimension must be positive")
            if store is None:
                store = FeatureStore(dim=dim)
            elif dim != store.dim:
                raise SidecarError(
                    f"{path}:1: dimension {dim} conflicts with {store.dim}"
                )
            for lineno, line in enumerate(fh, 2):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                where = f"{path}:{lineno}"
                parts = line.split("\t")
                if len(parts) != 4:
                    raise SidecarError(f"{where}: expected 4 fields, got {len(parts)}")
                image_id, q_s, vec_s, det_s = parts
                if not image_id:
                    raise SidecarError(f"{where}: empty image_id")
                if q_s == "nan":
                    quality: float | None = None
                else:
                    try:
                        quality = float(q_s)
                    except ValueError as exc:
                        raise SidecarError(f"{where}: bad quality {q_s!r}") from exc
                    if math.isnan(quality):
                        quality = None
                embedding: np.ndarray | None
                if vec_s == "-":
                    embedding = None
                else:
                    try:
                        embedding = np.array(
                            [float(v) for v in vec_s.split(",")], dtype=np.float64
                        )
                    except ValueError as exc:
                        raise SidecarError(f"{where}: bad vector: {exc}") from exc
                    if embedding.shape[0] != store.dim:
                        raise SidecarError(
                            f"{where}: vector has {embedding.shape[0]} dims, header says {store.dim}"
                        )
                    if not np.all(np.isfinite(embedding)):
                        raise SidecarError(f"{where}: non-finite vector entries")
                    norm = float(np.linalg.norm(embedding))
                    if norm == 0.0:
                        raise SidecarError(f"{where}: zero-norm vector")
                    if abs(norm - 1.0) > _NORM_TOL:
                        embedding = embedding / norm
                        store.warnings.append(
                            f"{where}: vector for {image_id} had norm {norm:.6g}; normalized"
                        )
                if image_id in store.records:
                    store.warnings.append(f"{where}: duplicate record for {image_id}; last wins")
                store.records[image_id] = FeatureRecord(
                    embedding=embedding,
                    quality=quality,
                    detections=_parse_detections(det_s, where),
                )
    if store is None:
        raise SidecarError("no sidecar files given")
    return store


def write_sidecar(
    path: str | Path,
    dim: int,
    rows: Iterable[tuple[str, float | None, np.ndarray | None, list[Detection]]],
) -> None:
    """Write records in the sidecar format (used by tests and fixtures)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={dim}\n")
        for image_id, quality, vec, dets in rows:
            q_s = "nan" if quality is None else repr(float(quality))
            v_s = "-" if vec is None else ",".join(repr(float(x)) for x in vec)
            fh.write(f"{image_id}\t{q_s}\t{v_s}\t{detections_to_json(dets)}\n")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product of two stored unit vectors; exactly symmetric."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # fixed pairwise reduction: bit-stable across runs and argument order
    return float(np.add.reduce(a * b))


def mean_similarity(probe: np.ndarray, gallery: list[np.ndarray]) -> float:
    """Arithmetic mean of cosine similarities against a non-empty gallery."""
    if not gallery:
        raise ValueError("empty gallery")
    total = 0.0
    for g in gallery:
        total += cosine_similarity(probe, g)
    return total / len(gallery)
