"""Dataset ingestion: canonical manifests and canonical pixel decoding.

A dataset is a directory tree where every image lives in a subject
directory (the immediate parent directory name is the subject label).
Manifests are deterministic regardless of filesystem enumeration order:
records are sorted by (dataset_id, rel_path).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

from ._kernels import rgb_to_gray

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp"}


class DecodeError(Exception):
    """Raised when an image file cannot be decoded."""

    def __init__(self, image_id: str, message: str):
        super().__init__(f"{image_id}: {message}")
        self.image_id = image_id


class DataError(Exception):
    """Inconsistent or malformed on-disk data (manifests, caches, plans)."""


@dataclass(frozen=True)
class ImageRecord:
    dataset_id: str
    subject_id: str
    rel_path: str
    byte_len: int

    @property
    def image_id(self) -> str:
        return f"{self.dataset_id}/{self.rel_path}"

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.dataset_id, self.rel_path)


@dataclass(frozen=True)
class SkippedFile:
    dataset_id: str
    rel_path: str
    reason: str


@dataclass
class Manifest:
    records: list[ImageRecord] = field(default_factory=list)
    datasets: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.sort_key)
        if not self.datasets:
            self.datasets = sorted({r.dataset_id for r in self.records})
        self._by_id = {}
        seen_paths = set()
        for r in self.records:
            if not r.subject_id:
                raise DataError(f"empty subject label for {r.dataset_id}/{r.rel_path}")
            if r.image_id in self._by_id:
                raise DataError(f"duplicate image_id {r.image_id}")
            if r.sort_key in seen_paths:
                raise DataError(f"duplicate path {r.sort_key}")
            seen_paths.add(r.sort_key)
            self._by_id[r.image_id] = r

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    def get(self, image_id: str) -> ImageRecord:
        return self._by_id[image_id]

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def subjects(self, dataset_id: str | None = None) -> set[tuple[str, str]]:
        return {
            (r.dataset_id, r.subject_id)
            for r in self.records
            if dataset_id is None or r.dataset_id == dataset_id
        }

    def by_subject(self) -> dict[tuple[str, str], list[ImageRecord]]:
        """Records grouped by (dataset, subject), each group in lexical path order."""
        groups: dict[tuple[str, str], list[ImageRecord]] = {}
        for r in self.records:  # records are already path-sorted
            groups.setdefault((r.dataset_id, r.subject_id), []).append(r)
        return groups

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for ds in self.datasets:
            recs = [r for r in self.records if r.dataset_id == ds]
            out[ds] = {
                "images": len(recs),
                "subjects": len({r.subject_id for r in recs}),
            }
        return out

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self.records:
                fh.write(f"{r.dataset_id}\t{r.subject_id}\t{r.rel_path}\t{r.byte_len}\n")

    @classmethod
    def read(cls, path: str | Path) -> "Manifest":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
                ds, subj, rel, blen = parts
                records.append(ImageRecord(ds, subj, rel, int(blen)))
        return cls(records=records)


def build_manifest(
    roots: Iterable[tuple[str, str | Path]],
    exclude: set[tuple[str, str]] | None = None,
) -> tuple[Manifest, list[SkippedFile]]:
    """Walk dataset roots and build a canonical manifest.

    Subject label is the file's immediate parent directory name; files that
    sit directly in the dataset root or carry an unrecognized extension are
    skipped and reported. An unreadable root is fatal; an unreadable single
    file becomes a skip record. `exclude` holds externally supplied
    (dataset_id, rel_path) pairs (non-face lists etc.) to leave out.
    """
    exclude = exclude or set()
    records: list[ImageRecord] = []
    skipped: list[SkippedFile] = []
    for dataset_id, root in roots:
        root = Path(root)
        if not root.is_dir():
            raise DataError(f"dataset root not readable: {root}")
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for name in sorted(filenames):
                full = Path(dirpath) / name
                rel = full.relative_to(root).as_posix()
                if (dataset_id, rel) in exclude:
                    skipped.append(SkippedFile(dataset_id, rel, "excluded"))
                    continue
                if full.suffix.lower() not in IMAGE_EXTENSIONS:
                    skipped.append(SkippedFile(dataset_id, rel, "extension"))
                    continue
                if Path(dirpath) == root:
                    skipped.append(SkippedFile(dataset_id, rel, "no_subject_dir"))
                    continue
                try:
                    byte_len = full.stat().st_size
                except OSError:
                    skipped.append(SkippedFile(dataset_id, rel, "unreadable"))
                    continue
                subject = Path(dirpath).name
                records.append(ImageRecord(dataset_id, subject, rel, byte_len))
    return Manifest(records=records), skipped


@dataclass
class PixelBuffer:
    """8-bit row-major pixel data, RGB (3 channels) or grayscale (1)."""

    array: np.ndarray  # (h, w, channels) uint8, C-contiguous

    def __post_init__(self):
        if self.array.ndim == 2:
            self.array = self.array[:, :, None]
        if self.array.ndim != 3 or self.array.shape[2] not in (1, 3):
            raise ValueError(f"bad pixel array shape {self.array.shape}")
        self.array = np.ascontiguousarray(self.array, dtype=np.uint8)

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def channels(self) -> int:
        return self.array.shape[2]

    @property
    def data(self) -> bytes:
        return self.array.tobytes()


def decode_canonical(data: bytes, image_id: str = "") -> PixelBuffer:
    """Decode an encoded image (JPEG/PNG/BMP/...) to an 8-bit RGB buffer."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:  # PIL raises a zoo of types for corrupt files
        raise DecodeError(image_id, str(exc)) from exc
    if arr.size == 0:
        raise DecodeError(image_id, "empty image")
    return PixelBuffer(arr)


def decode_file(path: str | Path, image_id: str = "") -> PixelBuffer:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DecodeError(image_id, str(exc)) from exc
    return decode_canonical(data, image_id)


def to_grayscale(buf: PixelBuffer) -> PixelBuffer:
    """ITU-R BT.601 integer luma: (299R + 587G + 114B) // 1000.

    Truncating integer arithmetic; 1-channel input is returned unchanged.
    """
    if buf.channels == 1:
        return buf
    return PixelBuffer(rgb_to_gray(buf.array))
