"""facedup: duplicate detection and preservative deduplication for
labeled face-image datasets, plus the verification-metric harness to
measure what the cleanup does downstream."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
