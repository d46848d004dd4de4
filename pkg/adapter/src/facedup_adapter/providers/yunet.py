"""Real-model provider: YuNet face detection plus ONNX embedding/quality
nets through cv2.dnn.

All model files come from the run configuration; nothing is downloaded.
The embedder is expected to take a 112x112 aligned face and emit one
feature vector; when no separate quality model is configured, quality is
the pre-normalization feature magnitude (the convention of magnitude-
aware recognition models, where larger means better sample utility).
"""

from __future__ import annotations

import numpy as np
import cv2

from ..alignment import align_crop


class YuNetProvider:
    name = "yunet"

    def __init__(self, config):
        if not config.detector_model:
            raise ValueError("yunet provider needs --detector-model (a YuNet .onnx)")
        if not config.embedder_model:
            raise ValueError("yunet provider needs --embedder-model (a recognition .onnx)")
        self._detector = cv2.FaceDetectorYN_create(
            str(config.detector_model), "", (320, 320),
            score_threshold=config.score_threshold or 0.6,
        )
        self._embedder = cv2.dnn.readNetFromONNX(str(config.embedder_model))
        self._quality_net = (
            cv2.dnn.readNetFromONNX(str(config.quality_model))
            if config.quality_model
            else None
        )
        self.embed_dim = int(config.embed_dim or 512)
        # standard preprocessing of the ArcFace model family
        self._input_mean = 127.5
        self._input_scale = 1.0 / 127.5

    def detect(self, bgr: np.ndarray) -> list[dict]:
        h, w = bgr.shape[:2]
        self._detector.setInputSize((w, h))
        _, faces = self._detector.detect(bgr)
        out = []
        if faces is None:
            return out
        for row in faces:
            x, y, bw, bh = (float(v) for v in row[:4])
            landmarks = [[float(row[4 + 2 * i]), float(row[5 + 2 * i])] for i in range(5)]
            out.append(
                {
                    "bbox": [x, y, bw, bh],
                    "confidence": float(row[14]),
                    "landmarks": landmarks,
                }
            )
        out.sort(key=lambda d: -d["confidence"])
        return out

    def _forward(self, net, aligned_bgr: np.ndarray) -> np.ndarray:
        blob = cv2.dnn.blobFromImage(
            aligned_bgr,
            scalefactor=self._input_scale,
            size=(112, 112),
            mean=(self._input_mean,) * 3,
            swapRB=True,
        )
        net.setInput(blob)
        return net.forward().ravel().astype(np.float64)

    def extract_one(self, bgr: np.ndarray):
        detections = self.detect(bgr)
        if not detections:
            return None, None, []
        landmarks = np.array(detections[0]["landmarks"])
        aligned = align_crop(bgr, landmarks)
        raw = self._forward(self._embedder, aligned)
        magnitude = float(np.linalg.norm(raw))
        embedding = raw / magnitude if magnitude > 0 else None
        if self._quality_net is not None:
            quality = float(self._forward(self._quality_net, aligned)[0])
        else:
            quality = magnitude if magnitude > 0 else None
        return quality, embedding, detections
