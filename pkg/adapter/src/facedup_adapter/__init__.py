"""facedup-adapter: turns images into the feature sidecars (detections,
embeddings, quality scores) the facedup engine consumes."""

__version__ = "0.1.0"
