"""Exact and near duplicate detection.

Exact duplicates: 256-bit content digests bucket the corpus, then a byte
comparison inside every bucket removes any possibility of a collision
false positive.

Near duplicates: a 64-bit DCT perceptual hash (grayscale, Lanczos resample
to 32x32, unnormalized 2-D DCT-II, top-left 8x8 block thresholded against
its median, row-major bits, MSB first) and a crop-resistant multi-hash
(threshold segmentation of a blurred, bounded copy; one perceptual hash
per segment bounding box cropped from the full-scale image).
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from PIL import Image, ImageFilter
from scipy import fft as _fft

from ._kernels import greedy_match_count, segments
from ._union_find import UnionFind
from .corpus import DataError, DecodeError, ImageRecord, Manifest, PixelBuffer, to_grayscale

try:
    import blake3  # type: ignore

    DIGEST_ALGORITHM = "blake3-256"

    def content_digest(data: bytes) -> bytes:
        """256-bit content digest of exact file bytes."""
        return blake3.blake3(data).digest()

except ImportError:
    # Drop-in 256-bit digest; the algorithm name is recorded in every report
    # and in the hash cache header so caches invalidate across builds.
    DIGEST_ALGORITHM = "blake2b-256"

    def content_digest(data: bytes) -> bytes:
        """256-bit content digest of exact file bytes."""
        return hashlib.blake2b(data, digest_size=32).digest()


HASH_VERSION = "facedup-hash-v1"

PHASH_BITS = 64
_PHASH_SIZE = 8
_PHASH_RESAMPLE = 32


def phash(buf: PixelBuffer) -> int:
    """64-bit perceptual hash of the pixel content.

    Unnormalized type-II DCT over the 32x32 Lanczos-resampled grayscale,
    computed by FFT (exact zeros for structurally zero coefficients, e.g.
    the AC terms of a constant image); top-left 8x8 block thresholded with
    strict > against its median, packed row-major, MSB first.
    """
    if buf.width < 1 or buf.height < 1:
        raise ValueError("degenerate pixel buffer")
    gray = to_grayscale(buf).array[:, :, 0]
    if gray.shape != (_PHASH_RESAMPLE, _PHASH_RESAMPLE):
        im = Image.fromarray(gray, "L").resize(
            (_PHASH_RESAMPLE, _PHASH_RESAMPLE), Image.Resampling.LANCZOS
        )
        gray = np.asarray(im, dtype=np.uint8)
    coeffs = _fft.dct(_fft.dct(gray.astype(np.float64), axis=0), axis=1)
    block = coeffs[:_PHASH_SIZE, :_PHASH_SIZE]
    med = np.median(block)
    bits = (block > med).ravel()
    return int.from_bytes(np.packbits(bits).tobytes(), "big")


def hamming(a: int, b: int) -> int:
    """Hamming distance between two 64-bit hashes."""
    return ((a ^ b) & 0xFFFF_FFFF_FFFF_FFFF).bit_count()


def phash_hex(h: int) -> str:
    return f"{h:016x}"


def crop_resistant_hash(
    buf: PixelBuffer,
    segment_threshold: int = 128,
    min_segment_size: int = 500,
    max_segmentation_side: int = 300,
    blur_radius: float = 2.0,
) -> list[int]:
    """Per-segment perceptual hashes, robust to cropping.

    The image is grayscaled, bounded to max_segmentation_side on its long
    side, Gaussian-blurred, and split into 4-connected regions above and
    below the brightness threshold. Each region of at least
    min_segment_size pixels (at segmentation scale) contributes the
    perceptual hash of its bounding-box crop taken from the original-scale
    image. Returns [] when no region reaches the minimum size.
    """
    if buf.width < 1 or buf.height < 1:
        raise ValueError("degenerate pixel buffer")
    gray = to_grayscale(buf).array[:, :, 0]
    h, w = gray.shape
    if max(h, w) > max_segmentation_side:
        if w >= h:
            seg_w = max_segmentation_side
            seg_h = max(1, round(h * max_segmentation_side / w))
        else:
            seg_h = max_segmentation_side
            seg_w = max(1, round(w * max_segmentation_side / h))
    else:
        seg_w, seg_h = w, h
    im = Image.fromarray(gray, "L")
    if (seg_w, seg_h) != (w, h):
        im = im.resize((seg_w, seg_h), Image.Resampling.LANCZOS)
    im = im.filter(ImageFilter.GaussianBlur(radius=blur_radius))
    px = np.asarray(im, dtype=np.uint8)

    regions = np.vstack(
        [
            segments(px > segment_threshold, min_segment_size),  # hills
            segments(px <= segment_threshold, min_segment_size),  # valleys
        ]
    )
    scale_x = w / seg_w
    scale_y = h / seg_h
    hashes: list[int] = []
    for _first, _size, min_r, min_c, max_r, max_c in regions:
        left = max(0, math.floor(min_c * scale_x))
        top = max(0, math.floor(min_r * scale_y))
        right = min(w, math.ceil((max_c + 1) * scale_x))
        bottom = min(h, math.ceil((max_r + 1) * scale_y))
        if right <= left or bottom <= top:
            continue
        crop = buf.array[top:bottom, left:right]
        hashes.append(phash(PixelBuffer(crop.copy())))
    return hashes


def multihash_match(
    a: list[int],
    b: list[int],
    region_cutoff: int = 1,
    bit_error_rate: float = 0.25,
) -> bool:
    """Whether two segment-hash lists agree on enough regions.

    Segments are paired greedily by ascending Hamming distance, each
    segment used at most once; a pairing counts when its distance is at
    most floor(64 * bit_error_rate). True iff at least region_cutoff
    pairings count. Empty either side never matches.
    """
    if region_cutoff < 1 or bit_error_rate <= 0:
        raise ValueError("cutoffs must be positive")
    if not a or not b:
        return False
    max_dist = math.floor(PHASH_BITS * bit_error_rate)
    n = greedy_match_count(
        np.array(a, dtype=np.uint64), np.array(b, dtype=np.uint64), max_dist
    )
    return n >= region_cutoff


def verify_exact_group(
    group: Iterable[str], load_bytes: Callable[[str], bytes]
) -> list[list[str]]:
    """Partition a digest bucket into byte-for-byte identical subgroups."""
    buckets: dict[bytes, list[str]] = {}
    for image_id in sorted(group):
        buckets.setdefault(load_bytes(image_id), []).append(image_id)
    return sorted(buckets.values())


class _BKTree:
    """Hamming-distance index over 64-bit hashes for radius queries."""

    __slots__ = ("_key", "_children")

    def __init__(self):
        self._key: int | None = None
        self._children: dict[int, _BKTree] = {}

    def add(self, key: int) -> None:
        if self._key is None:
            self._key = key
            return
        node = self
        while True:
            d = hamming(key, node._key)
            if d == 0:
                return
            child = node._children.get(d)
            if child is None:
                child = _BKTree()
                child._key = key
                node._children[d] = child
                return
            node = child

    def query(self, key: int, tol: int) -> list[int]:
        if self._key is None:
            return []
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            d = hamming(key, node._key)
            if d <= tol:
                out.append(node._key)
            for cd, child in node._children.items():
                if d - tol <= cd <= d + tol:
                    stack.append(child)
        return out


@dataclass(frozen=True)
class RawDupSet:
    """A set of images pairwise matched by one detection source."""

    members: tuple[str, ...]  # sorted image_ids, len >= 2
    source: str  # exact | phash | crop_resistant
    variant: str  # original | preprocessed

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("duplicate set needs at least 2 members")
        if tuple(sorted(self.members)) != self.members:
            raise ValueError("members must be sorted")


@dataclass
class HashConfig:
    exact: bool = True
    phash: bool = True
    crop_resistant: bool = True
    phash_max_distance: int = 0
    cr_region_cutoff: int = 1
    cr_bit_error_rate: float = 0.25
    cr_prefix_bits: int = 16
    cr_segment_threshold: int = 128
    cr_min_segment_size: int = 500
    cr_max_segmentation_side: int = 300

    def validate(self) -> None:
        if not 0 <= self.phash_max_distance <= 64:
            raise ValueError("phash_max_distance must be in [0, 64]")
        if self.cr_region_cutoff < 1 or not 0 < self.cr_bit_error_rate <= 1:
            raise ValueError("bad crop-resistant cutoffs")
        if not 0 <= self.cr_prefix_bits <= 64:
            raise ValueError("cr_prefix_bits must be in [0, 64]")


@dataclass
class ImageHashes:
    image_id: str
    digest: bytes
    phash: int | None = None
    multihash: list[int] | None = None


@dataclass
class ScanResult:
    sets: list[RawDupSet]
    errors: list[tuple[str, str]]  # (image_id, reason)
    stats: dict = field(default_factory=dict)


def group_by_phash(hashes: dict[str, int], max_distance: int = 0) -> list[list[str]]:
    """Group images whose perceptual hashes match exactly (max_distance=0)
    or transitively within a Hamming radius (max_distance>0)."""
    if max_distance == 0:
        buckets: dict[int, list[str]] = {}
        for image_id in sorted(hashes):
            buckets.setdefault(hashes[image_id], []).append(image_id)
        return sorted(g for g in buckets.values() if len(g) >= 2)
    ids_by_value: dict[int, list[str]] = {}
    for image_id in sorted(hashes):
        ids_by_value.setdefault(hashes[image_id], []).append(image_id)
    values = sorted(ids_by_value)
    tree = _BKTree()
    for v in values:
        tree.add(v)
    uf = UnionFind(values)
    for v in values:
        for near in tree.query(v, max_distance):
            uf.union(v, near)
    groups = []
    for comp in uf.components():
        members = sorted(i for v in comp for i in ids_by_value[v])
        if len(members) >= 2:
            groups.append(members)
    return sorted(groups)


def group_crop_resistant(
    multihashes: dict[str, list[int]], config: HashConfig
) -> list[list[str]]:
    """Pairwise multihash matching inside coarse prefilter buckets.

    Bucket key is the top cr_prefix_bits bits of each image's first
    segment hash (prefix_bits=0 puts everything in one bucket). The
    bucketing bounds cost on large corpora and is recorded in reports
    because it affects recall.
    """
    buckets: dict[int, list[str]] = {}
    shift = PHASH_BITS - config.cr_prefix_bits
    for image_id in sorted(multihashes):
        segs = multihashes[image_id]
        if not segs:
            continue  # empty multihash matches nothing
        key = segs[0] >> shift if config.cr_prefix_bits else 0
        buckets.setdefault(key, []).append(image_id)
    uf = UnionFind()
    for key in sorted(buckets):
        members = buckets[key]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                if multihash_match(
                    multihashes[a],
                    multihashes[b],
                    config.cr_region_cutoff,
                    config.cr_bit_error_rate,
                ):
                    uf.union(a, b)
    return sorted(g for g in uf.components() if len(g) >= 2)


class HashCache:
    """Resumable per-image hash store.

    Line format: image_id \\t variant \\t digest_hex \\t phash_hex \\t
    comma-separated multihash hex list ('-' marks a value that was not
    computed). Rows are trusted only while the digest of the image content
    still matches and the header's algorithm constant is current;
    preprocessed rows additionally require an unchanged sidecar
    fingerprint.
    """

    def __init__(self, sidecar_fingerprint: str = "-"):
        self.rows: dict[tuple[str, str], tuple[str, str, str]] = {}
        self.sidecar_fingerprint = sidecar_fingerprint
        self.algo = f"{HASH_VERSION}+{DIGEST_ALGORITHM}"

    @classmethod
    def load(cls, path: str | Path, sidecar_fingerprint: str = "-") -> "HashCache":
        cache = cls(sidecar_fingerprint)
        path = Path(path)
        if not path.exists():
            return cache
        with open(path, "r", encoding="utf-8") as fh:
            header: dict[str, str] = {}
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        k, v = line[1:].split("=", 1)
                        header[k] = v
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    raise DataError(f"{path}:{lineno}: expected 5 fields")
                image_id, variant, digest_hex, ph, mh = parts
                cache.rows[(image_id, variant)] = (digest_hex, ph, mh)
        if header.get("algo") != cache.algo:
            cache.rows.clear()  # algorithm change invalidates everything
        elif header.get("sidecars", "-") != sidecar_fingerprint:
            cache.rows = {
                k: v for k, v in cache.rows.items() if k[1] == "original"
            }
        return cache

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#algo={self.algo}\n")
            fh.write(f"#sidecars={self.sidecar_fingerprint}\n")
            for (image_id, variant) in sorted(self.rows):
                digest_hex, ph, mh = self.rows[(image_id, variant)]
                fh.write(f"{image_id}\t{variant}\t{digest_hex}\t{ph}\t{mh}\n")

    def lookup(
        self, image_id: str, variant: str, valid_digest_hex: str
    ) -> tuple[str, int | None, list[int] | None] | None:
        """Cached (content_digest_hex, phash, multihash), or None.

        A row is valid only while the image's original file digest equals
        valid_digest_hex; preprocessed rows anchor on the original row, so
        they resume only from a cache that also covers the original scan.
        """
        row = self.rows.get((image_id, variant))
        if row is None:
            return None
        anchor = self.rows.get((image_id, "original"))
        if anchor is None or anchor[0] != valid_digest_hex:
            return None
        ph = int(row[1], 16) if row[1] != "-" else None
        if row[2] == "-":
            mh: list[int] | None = None
        elif row[2] == "":
            mh = []
        else:
            mh = [int(x, 16) for x in row[2].split(",")]
        return row[0], ph, mh

    def put(
        self,
        image_id: str,
        variant: str,
        digest_hex: str,
        ph: int | None,
        mh: list[int] | None,
    ) -> None:
        ph_s = phash_hex(ph) if ph is not None else "-"
        if mh is None:
            mh_s = "-"
        else:
            mh_s = ",".join(phash_hex(x) for x in mh)
        self.rows[(image_id, variant)] = (digest_hex, ph_s, mh_s)

    def stored_digest(self, image_id: str, variant: str) -> str | None:
        row = self.rows.get((image_id, variant))
        return row[0] if row else None


def find_duplicate_sets(
    manifest: Manifest,
    variant: str,
    config: HashConfig,
    source_bytes: Callable[[ImageRecord], bytes],
    decode: Callable[[ImageRecord], PixelBuffer] | None = None,
    digest_fn: Callable[[bytes], bytes] = content_digest,
    cache: HashCache | None = None,
    workers: int = 1,
    validation_bytes: Callable[[ImageRecord], bytes] | None = None,
) -> ScanResult:
    """Run exact + near duplicate detection over one image variant.

    source_bytes supplies the content that defines byte identity (the raw
    file for 'original', canonical pixel bytes of the aligned crop for
    'preprocessed'); decode supplies pixel buffers for perceptual hashing.
    For the preprocessed variant, validation_bytes should read the raw
    file so cache rows can be validated without re-deriving the crop.
    Per-image failures are collected, never fatal; a failed image is
    excluded from every stage of this scan. Output is canonical: members
    sorted, sets sorted, independent of worker count.
    """
    config.validate()
    need_pixels = config.phash or config.crop_resistant
    if need_pixels and decode is None:
        raise ValueError("decode callable required for perceptual hashing")

    errors: list[tuple[str, str]] = []
    hashes: dict[str, ImageHashes] = {}
    cache_hits = 0
    computed = 0

    def process(record: ImageRecord) -> tuple[str, ImageHashes | None, str | None, bool]:
        image_id = record.image_id
        data = None
        if cache is not None:
            try:
                vdata = (validation_bytes or source_bytes)(record)
            except (OSError, DecodeError, DataError) as exc:
                return image_id, None, f"read: {exc}", False
            if validation_bytes is None:
                data = vdata
            vdigest_hex = digest_fn(vdata).hex()
            cached = cache.lookup(image_id, variant, vdigest_hex)
            if cached is not None:
                digest_hex, ph, mh = cached
                if (ph is not None or not config.phash) and (
                    mh is not None or not config.crop_resistant
                ):
                    entry = ImageHashes(image_id, bytes.fromhex(digest_hex), ph, mh)
                    return image_id, entry, None, True
        if data is None:
            try:
                data = source_bytes(record)
            except (OSError, DecodeError, DataError) as exc:
                return image_id, None, f"read: {exc}", False
        entry = ImageHashes(image_id, digest_fn(data))
        if not need_pixels:
            return image_id, entry, None, False
        try:
            buf = decode(record)
        except DecodeError as exc:
            return image_id, None, f"decode: {exc}", False
        if config.phash:
            entry.phash = phash(buf)
        if config.crop_resistant:
            entry.multihash = crop_resistant_hash(
                buf,
                segment_threshold=config.cr_segment_threshold,
                min_segment_size=config.cr_min_segment_size,
                max_segmentation_side=config.cr_max_segmentation_side,
            )
        return image_id, entry, None, False

    records = list(manifest)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, records))
    else:
        results = [process(r) for r in records]

    for image_id, entry, err, hit in results:
        if err is not None:
            errors.append((image_id, err))
            continue
        hashes[image_id] = entry
        if hit:
            cache_hits += 1
        elif need_pixels:
            computed += 1
        if cache is not None:
            cache.put(image_id, variant, entry.digest.hex(), entry.phash, entry.multihash)

    sets: list[RawDupSet] = []

    if config.exact:
        buckets: dict[bytes, list[str]] = {}
        for image_id in sorted(hashes):
            buckets.setdefault(hashes[image_id].digest, []).append(image_id)
        by_id = {r.image_id: r for r in records}

        def load(image_id: str) -> bytes:
            return source_bytes(by_id[image_id])

        for digest in sorted(buckets, key=lambda d: buckets[d][0]):
            group = buckets[digest]
            if len(group) < 2:
                continue
            for sub in verify_exact_group(group, load):
                if len(sub) >= 2:
                    sets.append(RawDupSet(tuple(sub), "exact", variant))

    if config.phash:
        ph_by_id = {i: h.phash for i, h in hashes.items() if h.phash is not None}
        for group in group_by_phash(ph_by_id, config.phash_max_distance):
            sets.append(RawDupSet(tuple(group), "phash", variant))

    if config.crop_resistant:
        mh_by_id = {i: h.multihash for i, h in hashes.items() if h.multihash is not None}
        for group in group_crop_resistant(mh_by_id, config):
            sets.append(RawDupSet(tuple(group), "crop_resistant", variant))

    sets.sort(key=lambda s: (s.source, s.members))
    stats = {
        "variant": variant,
        "images": len(records),
        "hashed": len(hashes),
        "errors": len(errors),
        "cache_hits": cache_hits,
        "perceptual_computed": computed,
        "digest_algorithm": DIGEST_ALGORITHM,
        "hash_version": HASH_VERSION,
        "cr_prefix_bits": config.cr_prefix_bits,
    }
    return ScanResult(sets=sets, errors=sorted(errors), stats=stats)
