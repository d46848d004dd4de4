"""Self-contained classical provider, usable without downloaded weights.

Detection: eigenface distance-from-face-space over a sliding multi-scale
window (16 components trained offline on a public face-crop set, baked
into the package). Embedding: L2-normalized low-frequency DCT block of
the aligned crop. Quality: log variance-of-Laplacian sharpness.

This provider exists for tests, smoke runs, and environments without
model weights; deployments wanting paper-grade features should configure
the yunet provider with real detector/embedder models.
"""

from __future__ import annotations

import importlib.resources
import math

import cv2
import numpy as np

from ..alignment import TEMPLATE_112, align_crop

WINDOW = 24
EMBED_DIM = 256
SCORE_THRESHOLD = 0.38
MIN_WINDOW_STD = 18.0  # rejects flat patches that any low-rank basis reconstructs
MIN_MEANFACE_NCC = 0.35  # window must correlate with the average face
_LANDMARK_FRACTIONS = TEMPLATE_112 / 112.0


def _load_eigenspace():
    ref = importlib.resources.files("facedup_adapter").joinpath("data/eigenface16.npz")
    with ref.open("rb") as fh:
        data = np.load(fh)
        return data["mean"].astype(np.float64), data["basis"].astype(np.float64)


class BuiltinProvider:
    name = "builtin"
    embed_dim = EMBED_DIM

    def __init__(self, config=None):
        self.mean, self.basis = _load_eigenspace()
        self._mean_unit = self.mean / np.linalg.norm(self.mean)
        self.threshold = SCORE_THRESHOLD
        if config is not None and config.score_threshold is not None:
            self.threshold = config.score_threshold

    def _faceness(self, windows: np.ndarray) -> np.ndarray:
        """Score stacked flattened windows: 1 - distance from face space.

        Windows that are nearly flat or do not correlate with the average
        face are scored out entirely; smooth patches otherwise reconstruct
        deceptively well from any low-rank basis.
        """
        raw_std = windows.std(axis=1)
        v = windows - windows.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        vn = v / norms
        ncc = vn @ self._mean_unit
        vc = vn - self.mean
        proj = vc @ self.basis.T
        recon = proj @ self.basis
        resid = np.linalg.norm(vc - recon, axis=1)
        score = 1.0 - resid
        score[(raw_std < MIN_WINDOW_STD) | (ncc < MIN_MEANFACE_NCC)] = -1.0
        return score

    def detect(self, bgr: np.ndarray) -> list[dict]:
        gray = cv2.cvtColor(bgr, cv2.COLOR_BGR2GRAY)
        h, w = gray.shape
        short = min(h, w)
        boxes = []
        # window covers 40%..95% of the short side, 5 pyramid levels
        for frac in (0.95, 0.8, 0.65, 0.5, 0.4):
            win_px = frac * short
            scale = WINDOW / win_px
            lw, lh = max(WINDOW, round(w * scale)), max(WINDOW, round(h * scale))
            level = cv2.resize(gray, (lw, lh), interpolation=cv2.INTER_AREA)
            stride = 3
            ys = range(0, lh - WINDOW + 1, stride)
            xs = range(0, lw - WINDOW + 1, stride)
            wins = []
            coords = []
            for y in ys:
                for x in xs:
                    wins.append(level[y : y + WINDOW, x : x + WINDOW].astype(np.float64).ravel())
                    coords.append((x, y))
            if not wins:
                continue
            scores = self._faceness(np.stack(wins))
            for (x, y), score in zip(coords, scores):
                if score >= self.threshold:
                    boxes.append(
                        (
                            x / scale,
                            y / scale,
                            WINDOW / scale,
                            WINDOW / scale,
                            float(score),
                        )
                    )
        return _nms(boxes)

    def landmarks(self, bgr: np.ndarray, box: dict) -> np.ndarray:
        x, y, bw, bh = box["bbox"]
        return np.array(
            [[x + fx * bw, y + fy * bh] for fx, fy in _LANDMARK_FRACTIONS]
        )

    def embed(self, aligned_bgr: np.ndarray) -> np.ndarray | None:
        gray = cv2.cvtColor(aligned_bgr, cv2.COLOR_BGR2GRAY).astype(np.float64)
        coeffs = cv2.dct(gray)
        block = coeffs[:16, :16].copy()
        block[0, 0] = 0.0  # exposure-invariant
        vec = block.ravel()
        norm = np.linalg.norm(vec)
        if norm == 0:
            return None
        return vec / norm

    def quality(self, aligned_bgr: np.ndarray) -> float | None:
        gray = cv2.cvtColor(aligned_bgr, cv2.COLOR_BGR2GRAY)
        var = float(cv2.Laplacian(gray, cv2.CV_64F).var())
        return math.log1p(var)

    def extract_one(self, bgr: np.ndarray):
        """(quality, embedding, detections) for one image."""
        detections = self.detect(bgr)
        if not detections:
            return None, None, []
        det_dicts = [
            {
                "bbox": [round(v, 2) for v in d["bbox"]],
                "confidence": round(d["confidence"], 4),
                "landmarks": [[round(p[0], 2), round(p[1], 2)] for p in self.landmarks(bgr, d)],
            }
            for d in detections
        ]
        lms = self.landmarks(bgr, detections[0])  # NMS sorts by score
        aligned = align_crop(bgr, lms)
        return self.quality(aligned), self.embed(aligned), det_dicts


def _nms(boxes, iou_threshold=0.4) -> list[dict]:
    boxes = sorted(boxes, key=lambda b: -b[4])
    kept = []
    for x, y, w, h, score in boxes:
        drop = False
        for k in kept:
            kx, ky, kw, kh = k["bbox"]
            ix = max(0.0, min(x + w, kx + kw) - max(x, kx))
            iy = max(0.0, min(y + h, ky + kh) - max(y, ky))
            inter = ix * iy
            union = w * h + kw * kh - inter
            if union > 0 and inter / union > iou_threshold:
                drop = True
                break
        if not drop:
            kept.append({"bbox": (x, y, w, h), "confidence": min(1.0, max(0.0, score))})
    return kept
