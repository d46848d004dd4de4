# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the _pykernels functions.

Every function must return byte-identical results to the numpy fallback;
the warp keeps the exact float64 expression tree of the fallback and the
extension is compiled with -ffp-contract=off so no FMA contraction can
change the rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

cdef extern from *:
    """
    static inline int popcount64(unsigned long long x) {
        return __builtin_popcountll(x);
    }
    """
    int popcount64(unsigned long long x) nogil


def rgb_to_gray(const cnp.uint8_t[:, :, ::1] rgb):
    """BT.601 integer luma, truncating division: (299R + 587G + 114B) // 1000."""
    cdef Py_ssize_t h = rgb.shape[0], w = rgb.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef long long acc
    with nogil:
        for i in range(h):
            for j in range(w):
                acc = 299LL * rgb[i, j, 0] + 587LL * rgb[i, j, 1] + 114LL * rgb[i, j, 2]
                ov[i, j] = <cnp.uint8_t>(acc // 1000)
    return out


def segments(mask, int min_size):
    """4-connected regions of True pixels with at least min_size members.

    Same output contract as the fallback: int64 rows of
    (first_flat_index, size, min_row, min_col, max_row, max_col) sorted by
    first_flat_index.
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack = np.empty(h * w, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] seen = np.zeros((h, w), dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] mv = m
    cdef cnp.uint8_t[:, ::1] sv = seen
    cdef cnp.int64_t[::1] st = stack
    cdef Py_ssize_t i, j, r, c, top
    cdef long long size, min_r, min_c, max_r, max_c, first
    rows = []
    for i in range(h):
        for j in range(w):
            if not mv[i, j] or sv[i, j]:
                continue
            first = i * w + j
            size = 0
            min_r = max_r = i
            min_c = max_c = j
            top = 0
            st[top] = first
            sv[i, j] = 1
            top += 1
            while top > 0:
                top -= 1
                r = st[top] // w
                c = st[top] % w
                size += 1
                if r < min_r:
                    min_r = r
                if r > max_r:
                    max_r = r
                if c < min_c:
                    min_c = c
                if c > max_c:
                    max_c = c
                if r > 0 and mv[r - 1, c] and not sv[r - 1, c]:
                    sv[r - 1, c] = 1
                    st[top] = (r - 1) * w + c
                    top += 1
                if r + 1 < h and mv[r + 1, c] and not sv[r + 1, c]:
                    sv[r + 1, c] = 1
                    st[top] = (r + 1) * w + c
                    top += 1
                if c > 0 and mv[r, c - 1] and not sv[r, c - 1]:
                    sv[r, c - 1] = 1
                    st[top] = r * w + c - 1
                    top += 1
                if c + 1 < w and mv[r, c + 1] and not sv[r, c + 1]:
                    sv[r, c + 1] = 1
                    st[top] = r * w + c + 1
                    top += 1
            if size >= min_size:
                rows.append((first, size, min_r, min_c, max_r, max_c))
    if not rows:
        return np.empty((0, 6), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def warp_bilinear_rgb(const cnp.uint8_t[:, :, ::1] src, const cnp.float64_t[::1] inv,
                      int out_h, int out_w):
    """Inverse-mapped bilinear sampling of an RGB image; out of bounds is black."""
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] ov = out
    cdef Py_ssize_t y, x, ch
    cdef double sx, sy, fx, fy, val
    cdef double p00, p01, p10, p11
    cdef long long x0, y0
    with nogil:
        for y in range(out_h):
            for x in range(out_w):
                sx = inv[0] * x + inv[1] * y + inv[2]
                sy = inv[3] * x + inv[4] * y + inv[5]
                x0 = <long long>floor(sx)
                y0 = <long long>floor(sy)
                fx = sx - floor(sx)
                fy = sy - floor(sy)
                for ch in range(3):
                    p00 = src[y0, x0, ch] if 0 <= x0 < w and 0 <= y0 < h else 0.0
                    p01 = src[y0, x0 + 1, ch] if 0 <= x0 + 1 < w and 0 <= y0 < h else 0.0
                    p10 = src[y0 + 1, x0, ch] if 0 <= x0 < w and 0 <= y0 + 1 < h else 0.0
                    p11 = src[y0 + 1, x0 + 1, ch] if 0 <= x0 + 1 < w and 0 <= y0 + 1 < h else 0.0
                    val = (p00 * (1.0 - fx) + p01 * fx) * (1.0 - fy) + (p10 * (1.0 - fx) + p11 * fx) * fy
                    val = floor(val + 0.5)
                    if val < 0.0:
                        val = 0.0
                    elif val > 255.0:
                        val = 255.0
                    ov[y, x, ch] = <cnp.uint8_t>val
    return out


def greedy_match_count(const cnp.uint64_t[::1] a, const cnp.uint64_t[::1] b, int max_dist):
    """Greedy best-pairing of segment hashes by Hamming distance; counts
    pairs within max_dist. Tie-break: lowest (i, j)."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    if na == 0 or nb == 0:
        return 0
    cdef cnp.ndarray[cnp.int64_t, ndim=2] dist = np.empty((na, nb), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] dv = dist
    cdef Py_ssize_t i, j, bi, bj
    cdef long long best, big = 1 << 30
    cdef int matched = 0, rounds, k
    with nogil:
        for i in range(na):
            for j in range(nb):
                dv[i, j] = popcount64(a[i] ^ b[j])
    rounds = <int>(na if na < nb else nb)
    for k in range(rounds):
        best = big
        bi = -1
        bj = -1
        for i in range(na):
            for j in range(nb):
                if dv[i, j] < best:
                    best = dv[i, j]
                    bi = i
                    bj = j
        if bi < 0:
            break
        for j in range(nb):
            dv[bi, j] = big
        for i in range(na):
            dv[i, bj] = big
        if best <= max_dist:
            matched += 1
    return matched
