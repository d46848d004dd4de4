"""Walk a dataset tree and emit one sidecar record per image.

Ids and record order follow the engine's manifest convention:
dataset_id/rel_path, sorted ascending. Per-image inference failures turn
into records with missing fields; unreadable images are reported and
skipped entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .providers import AdapterConfig, get_provider
from .sidecar import SidecarRecord, SidecarWriter

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp"}


@dataclass
class ExtractReport:
    images: int = 0
    detected: int = 0
    landmark_failures: list[str] = field(default_factory=list)
    embedding_failures: list[str] = field(default_factory=list)
    unreadable: list[str] = field(default_factory=list)


def iter_images(root: Path):
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.suffix.lower() in IMAGE_EXTENSIONS and path.parent != root:
            yield path


def extract(
    dataset_root: str | Path,
    dataset_id: str,
    out_sidecar: str | Path,
    config: AdapterConfig | None = None,
) -> ExtractReport:
    config = config or AdapterConfig()
    provider = get_provider(config)
    root = Path(dataset_root)
    report = ExtractReport()
    with SidecarWriter(out_sidecar, provider.embed_dim) as writer:
        for path in iter_images(root):
            rel = path.relative_to(root).as_posix()
            image_id = f"{dataset_id}/{rel}"
            data = np.fromfile(path, dtype=np.uint8)
            bgr = cv2.imdecode(data, cv2.IMREAD_COLOR)
            if bgr is None:
                report.unreadable.append(image_id)
                continue
            report.images += 1
            quality, embedding, detections = provider.extract_one(bgr)
            if detections:
                report.detected += 1
            else:
                report.landmark_failures.append(image_id)
            if embedding is None:
                report.embedding_failures.append(image_id)
            writer.write(SidecarRecord(image_id, quality, embedding, detections))
    return report
