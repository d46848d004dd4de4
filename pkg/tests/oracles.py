"""Independent reference implementations used as test oracles.

Deliberately written with plain Python loops and scalar math, not shared
with the package code: these check the fast paths from the outside.
"""

import math


def gray_oracle(r: int, g: int, b: int) -> int:
    return (299 * r + 587 * g + 114 * b) // 1000


def phash_oracle(pixels) -> int:
    """Perceptual hash of a 32x32 image, scalar double-precision pipeline.

    pixels: nested sequence (32, 32) grayscale or (32, 32, 3) RGB, 0..255.
    """
    n = 32
    gray = [[0.0] * n for _ in range(n)]
    for i in range(n):
        row = pixels[i]
        if len(row) != n:
            raise ValueError("oracle wants 32x32 input")
        for j in range(n):
            px = row[j]
            try:
                r, g, b = int(px[0]), int(px[1]), int(px[2])
                gray[i][j] = float(gray_oracle(r, g, b))
            except TypeError:
                gray[i][j] = float(int(px))
    # unnormalized DCT-II down the columns, then along the rows
    stage1 = [[0.0] * n for _ in range(n)]
    for k in range(n):
        for c in range(n):
            acc = 0.0
            for m in range(n):
                acc += gray[m][c] * math.cos(math.pi * k * (2 * m + 1) / (2 * n))
            stage1[k][c] = 2.0 * acc
    stage2 = [[0.0] * n for _ in range(n)]
    for r_i in range(n):
        for k in range(n):
            acc = 0.0
            for m in range(n):
                acc += stage1[r_i][m] * math.cos(math.pi * k * (2 * m + 1) / (2 * n))
            stage2[r_i][k] = 2.0 * acc
    block = [stage2[i][j] for i in range(8) for j in range(8)]
    ordered = sorted(block)
    med = (ordered[31] + ordered[32]) / 2.0
    value = 0
    for i, coef in enumerate(block):
        if coef > med:
            value |= 1 << (63 - i)
    return value


def hamming_oracle(a: int, b: int) -> int:
    x = a ^ b
    count = 0
    for _ in range(64):
        count += x & 1
        x >>= 1
    return count


def merge_fixpoint_oracle(sets) -> list[list]:
    """Quadratic repeated merging until no two sets overlap."""
    pool = [set(s) for s in sets]
    changed = True
    while changed:
        changed = False
        for i in range(len(pool)):
            if not pool[i]:
                continue
            for j in range(i + 1, len(pool)):
                if pool[j] and pool[i] & pool[j]:
                    pool[i] |= pool[j]
                    pool[j] = set()
                    changed = True
    return sorted(sorted(s) for s in pool if s)


def cosine_oracle(a, b) -> float:
    acc = 0.0
    for i in range(len(a)):
        acc += float(a[i]) * float(b[i])
    return acc


def mean_similarity_oracle(probe, gallery) -> float:
    acc = 0.0
    for g in gallery:
        acc += cosine_oracle(probe, g)
    return acc / len(gallery)


def eer_oracle(mated, nonmated) -> float:
    """Exhaustive threshold sweep with loop counting; linear interpolation
    between the bracketing candidate thresholds."""
    cand = sorted(set(mated) | set(nonmated))
    cand.append(cand[-1] + 1.0)
    prev = None
    for t in cand:
        fnmr = sum(1 for s in mated if s < t) / len(mated)
        fmr = sum(1 for s in nonmated if s >= t) / len(nonmated)
        if fnmr >= fmr:
            if fnmr == fmr:
                return fnmr
            pt, pfn, pfm = prev
            lam = (pfm - pfn) / ((fnmr - pfn) - (fmr - pfm))
            return pfn + (fnmr - pfn) * lam
        prev = (t, fnmr, fmr)
    raise AssertionError("no crossing")


def fnmr_at_fmr_oracle(mated, nonmated, target) -> float:
    """Ascending scan for the first threshold within the FMR budget."""
    allowed = math.floor(target * len(nonmated))
    cand = sorted(set(mated) | set(nonmated))
    cand.append(cand[-1] + 1.0)
    for t in cand:
        if sum(1 for s in nonmated if s >= t) <= allowed:
            return sum(1 for s in mated if s < t) / len(mated)
    raise AssertionError("unreachable")


def _interp(points, x) -> float:
    if x <= points[0][0]:
        return points[0][1]
    for (f0, e0), (f1, e1) in zip(points, points[1:]):
        if x <= f1:
            if f1 == f0:
                return e1
            return e0 + (e1 - e0) * (x - f0) / (f1 - f0)
    raise AssertionError("outside domain")


def pauc_oracle(points, lo, hi, per_piece=2000) -> float:
    """Fine-grained Riemann sum of the piecewise-linear curve, with the
    partition refined at every curve breakpoint."""
    knots = sorted({lo, hi} | {f for f, _ in points if lo < f < hi})
    area = 0.0
    for a, b in zip(knots, knots[1:]):
        h = (b - a) / per_piece
        for k in range(per_piece):
            area += _interp(points, a + (k + 0.5) * h) * h
    return area / (hi - lo)


def eer_oracle_bulk(mated, nonmated) -> float:
    """Same exhaustive sweep as eer_oracle, with numpy doing the counting
    so 2,000-pair instances stay tractable."""
    import numpy as np

    m = np.asarray(mated, dtype=np.float64)
    nm = np.asarray(nonmated, dtype=np.float64)
    cand = np.array(sorted(set(m.tolist()) | set(nm.tolist())) + [max(m.max(), nm.max()) + 1.0])
    fnmr = (m[None, :] < cand[:, None]).sum(axis=1) / len(m)
    fmr = (nm[None, :] >= cand[:, None]).sum(axis=1) / len(nm)
    for i in range(len(cand)):
        if fnmr[i] >= fmr[i]:
            if fnmr[i] == fmr[i]:
                return float(fnmr[i])
            pfn, pfm = float(fnmr[i - 1]), float(fmr[i - 1])
            lam = (pfm - pfn) / ((float(fnmr[i]) - pfn) - (float(fmr[i]) - pfm))
            return pfn + (float(fnmr[i]) - pfn) * lam
    raise AssertionError("no crossing")


def fnmr_at_fmr_oracle_bulk(mated, nonmated, target) -> float:
    import numpy as np

    m = np.asarray(mated, dtype=np.float64)
    nm = np.asarray(nonmated, dtype=np.float64)
    allowed = math.floor(target * len(nm))
    cand = np.array(sorted(set(m.tolist()) | set(nm.tolist())) + [max(m.max(), nm.max()) + 1.0])
    ge_counts = (nm[None, :] >= cand[:, None]).sum(axis=1)
    for i in range(len(cand)):
        if ge_counts[i] <= allowed:
            return float((m < cand[i]).sum() / len(m))
    raise AssertionError("unreachable")


def pauc_oracle_fast(points, lo, hi, per_piece=20) -> float:
    """Midpoint Riemann sum on a breakpoint-refined grid via np.interp
    (exact for piecewise-linear curves)."""
    import numpy as np

    fs = np.array([f for f, _ in points])
    es = np.array([e for _, e in points])
    knots = np.array(sorted({lo, hi} | {f for f in fs.tolist() if lo < f < hi}))
    area = 0.0
    for a, b in zip(knots, knots[1:]):
        mids = a + (b - a) * (np.arange(per_piece) + 0.5) / per_piece
        area += float(np.interp(mids, fs, es).sum()) * (b - a) / per_piece
    return area / (hi - lo)


def warp_oracle(src, inv, out_h: int, out_w: int):
    """Per-pixel scalar bilinear warp with black out-of-bounds fill."""
    h = len(src)
    w = len(src[0])
    out = [[[0, 0, 0] for _ in range(out_w)] for _ in range(out_h)]
    for y in range(out_h):
        for x in range(out_w):
            sx = inv[0] * x + inv[1] * y + inv[2]
            sy = inv[3] * x + inv[4] * y + inv[5]
            x0 = math.floor(sx)
            y0 = math.floor(sy)
            fx = sx - x0
            fy = sy - y0
            for ch in range(3):
                def tap(yy, xx):
                    if 0 <= yy < h and 0 <= xx < w:
                        return float(src[yy][xx][ch])
                    return 0.0

                p00 = tap(y0, x0)
                p01 = tap(y0, x0 + 1)
                p10 = tap(y0 + 1, x0)
                p11 = tap(y0 + 1, x0 + 1)
                val = (p00 * (1.0 - fx) + p01 * fx) * (1.0 - fy) + (
                    p10 * (1.0 - fx) + p11 * fx
                ) * fy
                val = math.floor(val + 0.5)
                out[y][x][ch] = int(min(255.0, max(0.0, val)))
    return out


def umeyama_grid_oracle(src, dst, s_range=(0.25, 4.0), rounds=5, grid=48):
    """Coarse-to-fine grid minimizer over (scale, angle); the translation
    for a fixed (s, theta) is the centroid match. Returns (s, theta, tx, ty)."""
    n = len(src)
    mu_s = [sum(p[0] for p in src) / n, sum(p[1] for p in src) / n]
    mu_d = [sum(p[0] for p in dst) / n, sum(p[1] for p in dst) / n]

    def loss(s, th):
        c, si = math.cos(th), math.sin(th)
        tx = mu_d[0] - s * (c * mu_s[0] - si * mu_s[1])
        ty = mu_d[1] - s * (si * mu_s[0] + c * mu_s[1])
        err = 0.0
        for (px, py), (qx, qy) in zip(src, dst):
            ex = s * (c * px - si * py) + tx - qx
            ey = s * (si * px + c * py) + ty - qy
            err += ex * ex + ey * ey
        return err, tx, ty

    s_lo, s_hi = s_range
    th_lo, th_hi = -math.pi, math.pi
    best = None
    for _ in range(rounds):
        for i in range(grid + 1):
            s = s_lo + (s_hi - s_lo) * i / grid
            for j in range(grid + 1):
                th = th_lo + (th_hi - th_lo) * j / grid
                err, tx, ty = loss(s, th)
                if best is None or err < best[0]:
                    best = (err, s, th, tx, ty)
        _, s_c, th_c, _, _ = best
        s_span = (s_hi - s_lo) * 2.5 / grid
        th_span = (th_hi - th_lo) * 2.5 / grid
        s_lo, s_hi = s_c - s_span, s_c + s_span
        th_lo, th_hi = th_c - th_span, th_c + th_span
    _, s, th, tx, ty = best
    return s, th, tx, ty


def circular_pair_count_oracle(sizes) -> int:
    """Expected total mated pairs for subject image counts."""
    total = 0
    for n in sizes:
        if n > 2:
            total += n
        elif n == 2:
            total += 1
    return total
