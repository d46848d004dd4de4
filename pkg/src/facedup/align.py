"""Face alignment: primary-face selection, similarity transform, warping.

Aligned crops are 112x112 RGB, produced by the least-squares similarity
transform onto the canonical 5-point template used by ArcFace-style
recognition models. Images without usable landmarks go on a skip list and
stay out of the preprocessed duplicate scan and of evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import warp_bilinear_rgb
from .corpus import PixelBuffer

# Canonical 5-point destination template (both eyes, nose tip, mouth
# corners) for 112x112 aligned crops.
TEMPLATE_112 = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ],
    dtype=np.float64,
)

ALIGNED_SIZE = 112

_COLLINEAR_TOL = 1e-10


class AlignmentError(Exception):
    """Landmark configuration unusable for a similarity fit."""


@dataclass(frozen=True)
class Detection:
    bbox: tuple[float, float, float, float]  # x, y, w, h
    confidence: float
    landmarks: tuple[tuple[float, float], ...]  # 5 points

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise ValueError("bounding box must have positive size")
        if len(self.landmarks) != 5:
            raise ValueError("expected exactly 5 landmark points")


@dataclass(frozen=True)
class SimilarityTransform:
    """2x3 matrix whose linear part is s*R with det(R)=+1, s>0."""

    matrix: tuple[tuple[float, float, float], tuple[float, float, float]]

    @property
    def scale(self) -> float:
        a, b = self.matrix[0][0], self.matrix[1][0]
        return math.hypot(a, b)

    @property
    def rotation(self) -> float:
        return math.atan2(self.matrix[1][0], self.matrix[0][0])

    @property
    def translation(self) -> tuple[float, float]:
        return (self.matrix[0][2], self.matrix[1][2])

    def apply(self, points: np.ndarray) -> np.ndarray:
        m = np.asarray(self.matrix, dtype=np.float64)
        return points @ m[:, :2].T + m[:, 2]

    def inverse_coeffs(self) -> np.ndarray:
        """Six coefficients mapping output (x, y) back to source coords."""
        m = np.asarray(self.matrix, dtype=np.float64)
        lin = np.linalg.inv(m[:, :2])
        t = -lin @ m[:, 2]
        return np.array([lin[0, 0], lin[0, 1], t[0], lin[1, 0], lin[1, 1], t[1]])


def select_primary_face(
    detections: list[Detection], image_w: int, image_h: int
) -> Detection:
    """Pick the main face among several detections.

    Equal-weight sum of three normalized terms: relative bbox area,
    proximity to the image center (1 at the center, 0 at the farthest
    corner), and detector confidence. Ties go to the earlier list entry.
    """
    if not detections:
        raise AlignmentError("no face detections")
    cx_img = image_w / 2.0
    cy_img = image_h / 2.0
    dist_max = math.hypot(cx_img, cy_img)
    best = None
    best_score = -math.inf
    for det in detections:
        x, y, w, h = det.bbox
        area = (w * h) / (image_w * image_h)
        cx = x + w / 2.0
        cy = y + h / 2.0
        proximity = 1.0 - (math.hypot(cx - cx_img, cy - cy_img) / dist_max if dist_max else 0.0)
        score = area + proximity + det.confidence
        if score > best_score:
            best_score = score
            best = det
    return best


def umeyama_similarity(
    src: np.ndarray, dst: np.ndarray = TEMPLATE_112
) -> SimilarityTransform:
    """Least-squares similarity transform T minimizing sum ||T(src) - dst||^2.

    Never produces a reflection. Raises AlignmentError when the source
    points are collinear (smallest singular value of the centered source
    below 1e-10).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("expected matching (n, 2) point arrays")
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    if np.linalg.svd(sc, compute_uv=False)[-1] < _COLLINEAR_TOL:
        raise AlignmentError("source landmarks are collinear")
    cov = dc.T @ sc / n
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    r = u @ np.diag(d) @ vt
    var_s = (sc ** 2).sum() / n
    scale = (s * d).sum() / var_s
    t = mu_d - scale * (r @ mu_s)
    m = np.hstack([scale * r, t[:, None]])
    return SimilarityTransform(matrix=((m[0, 0], m[0, 1], m[0, 2]), (m[1, 0], m[1, 1], m[1, 2])))


def warp_to_template(buf: PixelBuffer, transform: SimilarityTransform) -> PixelBuffer:
    """Warp an image into the 112x112 template frame (bilinear, black fill)."""
    src = buf.array
    if src.shape[2] == 1:
        src = np.repeat(src, 3, axis=2)
    out = warp_bilinear_rgb(
        np.ascontiguousarray(src), transform.inverse_coeffs(), ALIGNED_SIZE, ALIGNED_SIZE
    )
    return PixelBuffer(out)


def align_face(buf: PixelBuffer, detections: list[Detection]) -> PixelBuffer:
    """Primary-face selection + similarity fit + warp, in one step."""
    det = select_primary_face(detections, buf.width, buf.height)
    transform = umeyama_similarity(np.array(det.landmarks, dtype=np.float64))
    return warp_to_template(buf, transform)
