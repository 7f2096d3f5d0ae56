# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, erf, exp, fabs, floor, fmax, fmin, sqrt, M_PI

cnp.import_array()


def rect_moments(int width, int height, double cx, double cy, double cos_t, double sin_t,
                 double hl, double hw, double R, weights, double cutoff):
    W = np.ascontiguousarray(
        np.asarray(weights, dtype=np.float64).reshape(-1, width * height))
    cdef Py_ssize_t nk = W.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((nk, 6))
    cdef const double[:, ::1] Wv = W
    cdef double[:, ::1] ov = out
    cdef double inv = 1.0 / R
    cdef double c = 2.0 / sqrt(M_PI) * inv
    cdef double k = M_PI * R * R / 4.0
    cdef double lim = cutoff * R
    cdef int row, col, j
    cdef Py_ssize_t idx
    cdef double dx, dy, u0, v0, ap, am, bp, bm, A, B, gap, gam, gbp, gbm
    cdef double I, Iu, Iv, t0, t1, t2, t3, t4, t5, w
    cdef bint any_w
    cdef int r0 = 0, r1 = height, c0 = 0, c1 = width
    cdef double ex, ey
    if cutoff > 0:
        # pixel rows and columns that can reach the padded rectangle
        ex = fabs(cos_t) * (hl + lim) + fabs(sin_t) * (hw + lim)
        ey = fabs(sin_t) * (hl + lim) + fabs(cos_t) * (hw + lim)
        c0 = <int>fmin(fmax(floor(cx - ex - 0.5), 0.0), width)
        c1 = <int>fmin(fmax(ceil(cx + ex + 0.5), 0.0), width)
        r0 = <int>fmin(fmax(floor(cy - ey - 0.5), 0.0), height)
        r1 = <int>fmin(fmax(ceil(cy + ey + 0.5), 0.0), height)
    for row in range(r0, r1):
        dy = row + 0.5 - cy
        for col in range(c0, c1):
            idx = row * width + col
            any_w = False
            for j in range(nk):
                if Wv[j, idx] != 0.0:
                    any_w = True
                    break
            if not any_w:
                continue
            dx = col + 0.5 - cx
            u0 = dx * cos_t + dy * sin_t
            v0 = -dx * sin_t + dy * cos_t
            if cutoff > 0 and (fabs(u0) - hl > lim or fabs(v0) - hw > lim):
                continue
            ap = (hl - u0) * inv
            am = (hl + u0) * inv
            bp = (hw - v0) * inv
            bm = (hw + v0) * inv
            A = erf(ap) + erf(am)
            B = erf(bp) + erf(bm)
            gap = exp(-ap * ap)
            gam = exp(-am * am)
            gbp = exp(-bp * bp)
            gbm = exp(-bm * bm)
            I = k * A * B
            Iu = k * c * (gam - gap) * B
            Iv = k * A * c * (gbm - gbp)
            t0 = I
            t1 = -Iu * cos_t + Iv * sin_t
            t2 = -Iu * sin_t - Iv * cos_t
            t3 = Iu * v0 - Iv * u0
            t4 = k * c * (gap + gam) * B
            t5 = k * A * c * (gbp + gbm)
            for j in range(nk):
                w = Wv[j, idx]
                if w == 0.0:
                    continue
                ov[j, 0] += w * t0
                ov[j, 1] += w * t1
                ov[j, 2] += w * t2
                ov[j, 3] += w * t3
                ov[j, 4] += w * t4
                ov[j, 5] += w * t5
    return out


def capsule_coverage(int width, int height, pts, double radius, int s, int x0, int y0, int x1, int y1):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((height, width))
    cdef double[:, ::1] ov = out
    P = np.ascontiguousarray(np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    cdef const double[:, ::1] pv = P
    cdef Py_ssize_t n = P.shape[0]
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    x1 = min(x1, width)
    y1 = min(y1, height)
    if x1 <= x0 or y1 <= y0 or radius <= 0:
        return out
    cdef double r2 = radius * radius
    cdef double inv_s = 1.0 / s
    cdef double norm = 1.0 / (s * s)
    cdef int row, col, a, b, count
    cdef Py_ssize_t i
    cdef double X, Y, ax, ay, ex, ey, l2, px, py, t, qx, qy, d2, best
    for row in range(y0, y1):
        for col in range(x0, x1):
            count = 0
            for a in range(s):
                Y = row + (a + 0.5) * inv_s
                for b in range(s):
                    X = col + (b + 0.5) * inv_s
                    best = 1e300
                    if n == 1:
                        px = X - pv[0, 0]
                        py = Y - pv[0, 1]
                        best = px * px + py * py
                    for i in range(n - 1):
                        ax = pv[i, 0]
                        ay = pv[i, 1]
                        ex = pv[i + 1, 0] - ax
                        ey = pv[i + 1, 1] - ay
                        l2 = ex * ex + ey * ey
                        px = X - ax
                        py = Y - ay
                        t = 0.0
                        if l2 > 0:
                            t = (px * ex + py * ey) / l2
                            if t < 0.0:
                                t = 0.0
                            elif t > 1.0:
                                t = 1.0
                        qx = px - t * ex
                        qy = py - t * ey
                        d2 = qx * qx + qy * qy
                        if d2 < best:
                            best = d2
                            if best <= r2:
                                break
                    if best <= r2:
                        count += 1
            ov[row, col] = count * norm
    return out


cdef inline bint _filled(const double[:, ::1] r, double x, double y, double thr) nogil:
    cdef double fx = floor(x)
    cdef double fy = floor(y)
    if fx < 0 or fy < 0 or fx >= r.shape[1] or fy >= r.shape[0]:
        return False
    return r[<Py_ssize_t>fy, <Py_ssize_t>fx] >= thr


cdef double _median_extent(const double[:, ::1] r, double[::1] bx, double[::1] by, double nx, double ny,
                           double step, double reach, double thr, double[::1] ext, char[::1] act):
    cdef Py_ssize_t n = bx.shape[0]
    cdef Py_ssize_t i, n_act = n
    cdef double d = step
    for i in range(n):
        ext[i] = reach
        act[i] = 1
    while d < reach and n_act >= n - n // 2:
        for i in range(n):
            if act[i] and not _filled(r, bx[i] + d * nx, by[i] + d * ny, thr):
                ext[i] = d
                act[i] = 0
                n_act -= 1
        d += step
    srt = np.sort(np.asarray(ext))
    if n % 2:
        return srt[n // 2]
    return (srt[n // 2 - 1] + srt[n // 2]) / 2.0


def line_scan(raster, double cx, double cy, double ux, double uy, double step, double reach,
              double side_reach, double threshold):
    cdef const double[:, ::1] r = np.ascontiguousarray(raster, dtype=np.float64)
    if not _filled(r, cx, cy, threshold):
        return None
    cdef Py_ssize_t K = <Py_ssize_t>ceil((reach + step) / step)
    cdef Py_ssize_t k, k_hi = K, k_lo = K
    cdef double s
    for k in range(K):
        s = k * step
        if not _filled(r, cx + s * ux, cy + s * uy, threshold):
            k_hi = k
            break
    for k in range(K):
        s = -(k * step)
        if not _filled(r, cx + s * ux, cy + s * uy, threshold):
            k_lo = k
            break
    cdef double s_hi = k_hi * step if k_hi < K else (K - 1) * step + step
    cdef double s_lo = k_lo * step if k_lo < K else (K - 1) * step + step
    cdef Py_ssize_t n = k_hi + k_lo - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] BX = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] BY = np.empty(n)
    cdef double[::1] bx = BX
    cdef double[::1] by = BY
    for k in range(n):
        s = step * <double>(k - (k_lo - 1))
        bx[k] = cx + s * ux
        by[k] = cy + s * uy
    ext = np.empty(n)
    act = np.empty(n, dtype=np.int8)
    cdef double d_pos = _median_extent(r, bx, by, -uy, ux, step, side_reach, threshold, ext, act)
    cdef double d_neg = _median_extent(r, bx, by, uy, -ux, step, side_reach, threshold, ext, act)
    return -s_lo, s_hi, d_pos, d_neg
