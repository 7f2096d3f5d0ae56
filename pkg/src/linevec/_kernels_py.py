"""Pure numpy implementations of the hot kernels.

Selected automatically when the compiled ``_kernels`` extension is missing, or
when ``LINEVEC_PURE_PYTHON=1`` is set.  Signatures match the extension exactly.
"""

import math

import numpy as np
from scipy.special import erf

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def rect_moments(width, height, cx, cy, cos_t, sin_t, hl, hw, R, weights, cutoff):
    """Weighted sums of the Gaussian rectangle integral and its parameter derivatives.

    For each weight row ``w`` returns ``[sum w*I, sum w*dI/dcx, sum w*dI/dcy,
    sum w*dI/dtheta, sum w*dI/dhl, sum w*dI/dhw]`` where ``I`` is the integral
    of ``exp(-r^2/R^2)`` over the rectangle centered at ``(cx, cy)`` with
    half-length ``hl`` along ``(cos_t, sin_t)`` and half-width ``hw``.
    Pixels farther than ``cutoff * R`` outside the rectangle are skipped.
    """
    weights = np.asarray(weights, dtype=np.float64).reshape(-1, width * height)
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    u0 = (dx * cos_t + dy * sin_t).ravel()
    v0 = (-dx * sin_t + dy * cos_t).ravel()
    if cutoff > 0:
        keep = (np.abs(u0) - hl <= cutoff * R) & (np.abs(v0) - hw <= cutoff * R)
        u0 = u0[keep]
        v0 = v0[keep]
        weights = weights[:, keep]
    inv = 1.0 / R
    ap = (hl - u0) * inv
    am = (hl + u0) * inv
    bp = (hw - v0) * inv
    bm = (hw + v0) * inv
    A = erf(ap) + erf(am)
    B = erf(bp) + erf(bm)
    c = _TWO_OVER_SQRT_PI * inv
    gap = np.exp(-ap * ap)
    gam = np.exp(-am * am)
    gbp = np.exp(-bp * bp)
    gbm = np.exp(-bm * bm)
    dA_dhl = c * (gap + gam)
    dA_du = c * (gam - gap)
    dB_dhw = c * (gbp + gbm)
    dB_dv = c * (gbm - gbp)
    k = math.pi * R * R / 4.0
    I = k * A * B
    Iu = k * dA_du * B
    Iv = k * A * dB_dv
    terms = np.stack(
        [
            I,
            -Iu * cos_t + Iv * sin_t,
            -Iu * sin_t - Iv * cos_t,
            Iu * v0 - Iv * u0,
            k * dA_dhl * B,
            k * A * dB_dhw,
        ]
    )
    return weights @ terms.T


def capsule_coverage(width, height, pts, radius, s, x0, y0, x1, y1):
    """Fraction of ``s x s`` subsamples per pixel within ``radius`` of the polyline ``pts``.

    Only pixels in columns ``[x0, x1)`` and rows ``[y0, y1)`` are evaluated.
    """
    out = np.zeros((height, width))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width), min(y1, height)
    if x1 <= x0 or y1 <= y0 or radius <= 0:
        return out
    pts = np.asarray(pts, dtype=np.float64)
    offs = (np.arange(s) + 0.5) / s
    sx = (np.arange(x0, x1)[:, None] + offs[None, :]).ravel()
    sy = (np.arange(y0, y1)[:, None] + offs[None, :]).ravel()
    X, Y = np.meshgrid(sx, sy)
    best = np.full(X.shape, np.inf)
    r2 = radius * radius
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        ex, ey = bx - ax, by - ay
        l2 = ex * ex + ey * ey
        px = X - ax
        py = Y - ay
        if l2 > 0:
            t = np.clip((px * ex + py * ey) / l2, 0.0, 1.0)
        else:
            t = 0.0
        qx = px - t * ex
        qy = py - t * ey
        np.minimum(best, qx * qx + qy * qy, out=best)
    if len(pts) == 1:
        best = (X - pts[0, 0]) ** 2 + (Y - pts[0, 1]) ** 2
    inside = (best <= r2).astype(np.float64)
    h = y1 - y0
    w = x1 - x0
    out[y0:y1, x0:x1] = inside.reshape(h, s, w, s).mean(axis=(1, 3))
    return out


# -- connected-area scans --------------------------------------------------------


def filled(raster, pts, threshold):
    h, w = raster.shape
    ix = np.floor(pts[..., 0]).astype(int)
    iy = np.floor(pts[..., 1]).astype(int)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros(ix.shape, dtype=bool)
    out[inside] = raster[iy[inside], ix[inside]] >= threshold
    return out


def first_unfilled(flags, step):
    """Index of the first false flag (``len(flags)`` if none) and its offset."""
    bad = np.flatnonzero(~flags)
    k = int(bad[0]) if bad.size else len(flags)
    return k, (k * step if bad.size else (k - 1) * step + step)


def median_extent(raster, base, normal, step, reach, threshold):
    """Median over rows of the offset of the first unfilled sample along ``normal``."""
    n = len(base)
    ext = np.full(n, float(reach))
    active = np.arange(n)
    d = step
    # rows still running are longer than every finished one, so the median is
    # fixed once more than half have finished
    while d < reach and len(active) >= n - n // 2:
        ok = filled(raster, base[active] + d * normal[active], threshold)
        ext[active[~ok]] = d
        active = active[ok]
        d += step
    return float(np.median(ext))


def scan_region(raster, centerline, reach, side_reach, step, threshold):
    """``(s_lo, s_hi, d_pos, d_neg)`` of the filled region around ``centerline(0)``.

    ``centerline(s)`` maps arc offsets to ``(points, unit normals)``.  Returns
    None when the starting point is unfilled.
    """
    steps = np.arange(0.0, reach + step, step)
    start, _ = centerline(np.zeros(1))
    if not filled(raster, start, threshold)[0]:
        return None
    fwd, _ = centerline(steps)
    bwd, _ = centerline(-steps)
    k_hi, s_hi = first_unfilled(filled(raster, fwd, threshold), step)
    k_lo, s_lo = first_unfilled(filled(raster, bwd, threshold), step)
    along = step * np.arange(-(k_lo - 1), k_hi)
    base, normal = centerline(along)
    d_pos = median_extent(raster, base, normal, step, side_reach, threshold)
    d_neg = median_extent(raster, base, -normal, step, side_reach, threshold)
    return -s_lo, s_hi, d_pos, d_neg


def line_scan(raster, cx, cy, ux, uy, step, reach, side_reach, threshold):
    center = np.array([cx, cy])
    d = np.array([ux, uy])
    n = np.array([-uy, ux])

    def centerline(s):
        pts = center + s[:, None] * d
        return pts, np.broadcast_to(n, pts.shape)

    return scan_region(np.asarray(raster, dtype=np.float64), centerline, reach, side_reach, step, threshold)
