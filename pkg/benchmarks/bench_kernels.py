#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [repeats]
"""

import sys
import time

import numpy as np

from facedup._kernels import _pykernels

try:
    from facedup._kernels import _ckernels
except ImportError:
    print("compiled kernels not built; nothing to compare")
    sys.exit(1)


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    rng = np.random.default_rng(0)

    rgb = rng.integers(0, 256, size=(1080, 1920, 3), dtype=np.uint8)
    mask = (rng.random((300, 300)) > 0.48)
    mask_u8 = mask.astype(np.uint8)
    src = rng.integers(0, 256, size=(640, 480, 3), dtype=np.uint8)
    inv = np.array([0.9, -0.2, 14.0, 0.2, 0.9, -3.0])
    a = rng.integers(0, 2**64, size=24, dtype=np.uint64)
    b = rng.integers(0, 2**64, size=24, dtype=np.uint64)

    cases = [
        ("rgb_to_gray", "1920x1080", (rgb,), (rgb,)),
        ("segments", "300x300", (mask, 500), (mask_u8, 500)),
        ("warp_bilinear_rgb", "640x480", (src, inv, 112, 112), (src, inv, 112, 112)),
        ("greedy_match_count", "24x24", (a, b, 16), (a, b, 16)),
    ]
    print(f"{'kernel':<28} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for fn, size, py_args, cy_args in cases:
        name = f"{fn} {size}"
        t_py = timeit(getattr(_pykernels, fn), *py_args, repeats=repeats)
        t_cy = timeit(getattr(_ckernels, fn), *cy_args, repeats=repeats)
        print(f"{name:<28} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
