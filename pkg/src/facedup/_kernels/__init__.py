"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension is used when it importable; setting the environment
variable ``FACEDUP_PURE_PYTHON=1`` forces the numpy fallback. Both backends
are bit-for-bit interchangeable (see tests/test_kernels_parity.py), so the
selection never affects results, only speed.
"""

import os

from . import _pykernels

if os.environ.get("FACEDUP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

rgb_to_gray = _impl.rgb_to_gray
segments = _impl.segments
warp_bilinear_rgb = _impl.warp_bilinear_rgb
greedy_match_count = _impl.greedy_match_count

__all__ = [
    "BACKEND",
    "rgb_to_gray",
    "segments",
    "warp_bilinear_rgb",
    "greedy_match_count",
]
