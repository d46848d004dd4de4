"""ArcFace-convention alignment: similarity fit onto the canonical
5-point 112x112 template, then an affine warp."""

from __future__ import annotations

import numpy as np
import cv2

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


def similarity_matrix(src: np.ndarray, dst: np.ndarray = TEMPLATE_112) -> np.ndarray:
    """Least-squares similarity transform (no reflection), as a 2x3 matrix.

    Deterministic closed-form fit; cv2.estimateAffinePartial2D is avoided
    because its robust estimators subsample randomly.
    """
    src = np.asarray(src, dtype=np.float64)
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    cov = dc.T @ sc / len(src)
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    r = u @ np.diag(d) @ vt
    var_s = (sc**2).sum() / len(src)
    scale = (s * d).sum() / var_s
    t = mu_d - scale * (r @ mu_s)
    return np.hstack([scale * r, t[:, None]])


def align_crop(bgr: np.ndarray, landmarks: np.ndarray) -> np.ndarray:
    """112x112 aligned BGR crop from 5 landmark points."""
    m = similarity_matrix(np.asarray(landmarks, dtype=np.float64))
    return cv2.warpAffine(
        bgr, m, (ALIGNED_SIZE, ALIGNED_SIZE), flags=cv2.INTER_LINEAR, borderValue=0
    )
