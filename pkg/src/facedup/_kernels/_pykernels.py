"""Numpy implementations of the hot kernels.

Reference semantics for the compiled backend: every function here must
return byte-identical results to its _ckernels twin.
"""

import numpy as np
from scipy import ndimage

_GRAY_W = np.array([299, 587, 114], dtype=np.int64)

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """BT.601 integer luma, truncating division: (299R + 587G + 114B) // 1000."""
    acc = rgb.astype(np.int64) @ _GRAY_W
    return (acc // 1000).astype(np.uint8)


def segments(mask: np.ndarray, min_size: int) -> np.ndarray:
    """4-connected regions of True pixels with at least min_size members.

    Returns an int64 array of shape (n, 6) with one row per region:
    (first_flat_index, size, min_row, min_col, max_row, max_col),
    sorted by first_flat_index (raster discovery order).
    """
    labels, count = ndimage.label(mask, structure=_FOUR_CONN)
    if count == 0:
        return np.empty((0, 6), dtype=np.int64)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    order = np.argsort(flat, kind="stable")
    boundaries = np.searchsorted(flat[order], np.arange(1, count + 1))
    firsts = order[boundaries]  # first raster index of each label
    objects = ndimage.find_objects(labels)
    out = []
    for lab in range(1, count + 1):
        if sizes[lab] < min_size:
            continue
        sl_r, sl_c = objects[lab - 1]
        out.append(
            (
                int(firsts[lab - 1]),
                int(sizes[lab]),
                sl_r.start,
                sl_c.start,
                sl_r.stop - 1,
                sl_c.stop - 1,
            )
        )
    if not out:
        return np.empty((0, 6), dtype=np.int64)
    arr = np.array(out, dtype=np.int64)
    return arr[np.argsort(arr[:, 0], kind="stable")]


def warp_bilinear_rgb(src: np.ndarray, inv: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Inverse-mapped bilinear sampling of an RGB image; out of bounds is black.

    inv maps output pixel centers (x, y) to source coordinates:
    sx = inv[0]*x + inv[1]*y + inv[2], sy = inv[3]*x + inv[4]*y + inv[5].
    """
    h, w = src.shape[0], src.shape[1]
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    xx, yy = np.meshgrid(xs, ys)
    sx = inv[0] * xx + inv[1] * yy + inv[2]
    sy = inv[3] * xx + inv[4] * yy + inv[5]
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    # zero-padded gather: any tap outside the source reads black
    def tap(yi, xi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = np.zeros(yi.shape + (3,), dtype=np.float64)
        vals[valid] = src[yi[valid], xi[valid]].astype(np.float64)
        return vals

    p00 = tap(y0i, x0i)
    p01 = tap(y0i, x0i + 1)
    p10 = tap(y0i + 1, x0i)
    p11 = tap(y0i + 1, x0i + 1)
    fx3 = fx[..., None]
    fy3 = fy[..., None]
    val = (p00 * (1.0 - fx3) + p01 * fx3) * (1.0 - fy3) + (p10 * (1.0 - fx3) + p11 * fx3) * fy3
    out = np.floor(val + 0.5)
    np.clip(out, 0.0, 255.0, out=out)
    return out.astype(np.uint8)


def greedy_match_count(a: np.ndarray, b: np.ndarray, max_dist: int) -> int:
    """Greedy best-pairing of segment hashes by Hamming distance.

    Repeatedly pairs the globally closest unused (a_i, b_j), ties broken by
    lowest (i, j); counts pairs with distance <= max_dist.
    """
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        return 0
    dist = np.bitwise_count(a[:, None] ^ b[None, :]).astype(np.int64)
    big = np.int64(1 << 30)
    matched = 0
    for _ in range(min(na, nb)):
        k = int(np.argmin(dist))  # row-major argmin = lowest (i, j) on ties
        i, j = divmod(k, nb)
        d = int(dist[i, j])
        if d >= big:
            break
        dist[i, :] = big
        dist[:, j] = big
        if d <= max_dist:
            matched += 1
    return matched
