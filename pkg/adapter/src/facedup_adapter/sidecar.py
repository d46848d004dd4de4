"""Sidecar file format: the contract consumed by the dedup engine.

    #dim=<D>
    image_id \\t quality|"nan" \\t v1,...,vD|"-" \\t detections_json|"-"

One record per image in manifest order (ids sorted by dataset-relative
path). Vectors are written L2-normalized. "nan" quality means no score
could be computed; "-" embedding means extraction failed; "-" or an empty
JSON list of detections means landmark detection failed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORM_TOL = 1e-6


@dataclass
class SidecarRecord:
    image_id: str
    quality: float | None
    embedding: np.ndarray | None
    detections: list[dict]  # {"bbox": [x,y,w,h], "confidence": c, "landmarks": [[x,y]*5]}


class SidecarWriter:
    def __init__(self, path: str | Path, dim: int):
        self.path = Path(path)
        self.dim = dim
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(f"#dim={dim}\n")

    def write(self, rec: SidecarRecord) -> None:
        q = "nan" if rec.quality is None or math.isnan(rec.quality) else repr(float(rec.quality))
        if rec.embedding is None:
            v = "-"
        else:
            if rec.embedding.shape != (self.dim,):
                raise ValueError(
                    f"{rec.image_id}: embedding has {rec.embedding.shape}, want ({self.dim},)"
                )
            v = ",".join(repr(float(x)) for x in rec.embedding)
        d = json.dumps(rec.detections, separators=(",", ":")) if rec.detections else "-"
        self._fh.write(f"{rec.image_id}\t{q}\t{v}\t{d}\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Violation:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class CheckReport:
    path: str
    records: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def selfcheck(path: str | Path) -> CheckReport:
    """Validate header dimension, field structure, vector norms, and
    detection JSON of every line."""
    report = CheckReport(path=str(path))
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        dim = None
        if not header.startswith("#dim="):
            report.violations.append(Violation(1, "missing #dim= header"))
        else:
            try:
                dim = int(header[5:])
                if dim < 1:
                    report.violations.append(Violation(1, f"non-positive dimension {dim}"))
            except ValueError:
                report.violations.append(Violation(1, f"unparseable dimension {header[5:]!r}"))
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                report.violations.append(
                    Violation(lineno, f"expected 4 fields, found {len(parts)}")
                )
                continue
            image_id, q_s, v_s, d_s = parts
            report.records += 1
            if not image_id:
                report.violations.append(Violation(lineno, "empty image_id"))
            if q_s != "nan":
                try:
                    float(q_s)
                except ValueError:
                    report.violations.append(Violation(lineno, f"bad quality {q_s!r}"))
            if v_s != "-":
                try:
                    vec = np.array([float(x) for x in v_s.split(",")])
                except ValueError:
                    report.violations.append(Violation(lineno, "unparseable vector"))
                    continue
                if dim is not None and vec.shape[0] != dim:
                    report.violations.append(
                        Violation(lineno, f"vector has {vec.shape[0]} dims, header says {dim}")
                    )
                if not np.all(np.isfinite(vec)):
                    report.violations.append(Violation(lineno, "non-finite vector entries"))
                else:
                    norm = float(np.linalg.norm(vec))
                    if abs(norm - 1.0) > NORM_TOL:
                        report.violations.append(
                            Violation(lineno, f"vector norm {norm:.6g} not within {NORM_TOL} of 1")
                        )
            if d_s != "-":
                try:
                    dets = json.loads(d_s)
                    for det in dets:
                        if len(det["landmarks"]) != 5 or len(det["bbox"]) != 4:
                            raise ValueError("wrong landmark/bbox arity")
                        float(det["confidence"])
                except (ValueError, KeyError, TypeError) as exc:
                    report.violations.append(Violation(lineno, f"bad detections JSON: {exc}"))
    return report
