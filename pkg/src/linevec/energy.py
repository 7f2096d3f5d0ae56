"""Charge-interaction energy of primitives against a raster patch.

Every primitive carries a uniform positive charge over its stroke rectangle
(caps excluded) and interacts with per-pixel point charges through a
two-Gaussian potential.  Three charge grids are derived per primitive at each
iteration barrier (size, position and collinear-redundancy charges); they are
then held fixed while the primitive's own parameters are differentiated.

Parameter vectors
-----------------
line:  ``[mid_x, mid_y, angle, length, width]``
curve: ``[mid_x, mid_y, arm_angle1, arm_angle2, arm_len1, arm_len2, width]``
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.special import erf

from . import kernels
from ._kernels_py import scan_region
from .geom import (
    Curve,
    CurvePosSize,
    Line,
    LinePosSize,
    Primitive,
    bezier_derivative,
    canonical_direction,
    closest_params,
    curve_midpoint,
    curve_possize_jacobian,
    curve_to_possize,
    eval_bezier,
    flatten_params,
    line_to_possize,
    possize_to_curve,
    possize_to_line,
)
from .raster import render_primitive

# Pixels farther than this many Gaussian radii outside a rectangle contribute
# below double precision (erfc(6) ~ 2e-17) and are skipped.
_CUTOFF = 6.0

LINE_POS = (0, 1, 2)
LINE_SIZE = (3, 4)
CURVE_POS = (0, 1, 2, 3)
CURVE_SIZE = (4, 5, 6)


@dataclass(frozen=True)
class PotentialParams:
    R_c: float = 1.0
    R_f: float = 32.0
    lambda_f: float = 0.02
    truncation_radius: float = math.inf

    def __post_init__(self):
        if self.R_c <= 0 or self.R_f <= 0 or self.lambda_f < 0 or self.truncation_radius <= 0:
            raise ValueError(f"invalid potential parameters {self}")


@dataclass(frozen=True)
class RdnParams:
    alpha_col: float = math.radians(15.0)

    def __post_init__(self):
        if not 0 < self.alpha_col < math.pi / 2:
            raise ValueError("alpha_col must lie in (0, pi/2)")

    @property
    def beta(self) -> float:
        return (math.cos(self.alpha_col) - 1.0) ** -2


@dataclass(frozen=True)
class EnergyConfig:
    potential: PotentialParams = field(default_factory=PotentialParams)
    rdn: RdnParams = field(default_factory=RdnParams)
    lambda_pos: float = 4.0
    fill_threshold: float = 0.5
    supersample: int = 4
    # chord tolerance of the close-range polyline; the wide far-range Gaussian
    # converges on a much coarser one
    flatten_tol: float = 0.01
    far_flatten_tol: float = 0.25
    # collinear term interacts only within this many R_c of the stroke
    rdn_truncation: float = 3.0


def potential(r, params: PotentialParams = PotentialParams()):
    r = np.asarray(r, dtype=float)
    val = np.exp(-(r * r) / params.R_c**2) + params.lambda_f * np.exp(-(r * r) / params.R_f**2)
    val = np.where(r > params.truncation_radius, 0.0, val)
    return float(val) if val.ndim == 0 else val


# -- analytic rectangle integrals ----------------------------------------------


def _rect_integral_points(center, cos_t, sin_t, hl, hw, R, pts) -> np.ndarray:
    d = np.asarray(pts, dtype=float).reshape(-1, 2) - np.asarray(center, dtype=float)
    u0 = d[:, 0] * cos_t + d[:, 1] * sin_t
    v0 = -d[:, 0] * sin_t + d[:, 1] * cos_t
    A = erf((hl - u0) / R) + erf((hl + u0) / R)
    B = erf((hw - v0) / R) + erf((hw + v0) / R)
    return math.pi * R * R / 4.0 * A * B


def _segment_frame(p, q):
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    L = math.hypot(d[0], d[1])
    if L == 0:
        return 0.5 * (np.asarray(p) + np.asarray(q)), 1.0, 0.0, 0.0
    return 0.5 * (np.asarray(p) + np.asarray(q)), d[0] / L, d[1] / L, L / 2


def line_cell_interaction(line: Line, charge_at, params: PotentialParams = PotentialParams()) -> float:
    """Integral of the potential between a unit charge and the line's stroke rectangle."""
    center, c, s, hl = _segment_frame(line.p1, line.p2)
    hw = line.width / 2
    q = np.asarray(charge_at, dtype=float)
    if math.isfinite(params.truncation_radius) and _rect_distance(center, c, s, hl, hw, q[None])[0] > params.truncation_radius:
        return 0.0
    val = _rect_integral_points(center, c, s, hl, hw, params.R_c, q)
    if params.lambda_f:
        val = val + params.lambda_f * _rect_integral_points(center, c, s, hl, hw, params.R_f, q)
    return float(val[0])


def curve_cell_interaction(
    curve: Curve, charge_at, params: PotentialParams = PotentialParams(), flatten_tol: float = 0.01
) -> float:
    pts = eval_bezier(curve, flatten_params(curve, flatten_tol))
    return sum(
        line_cell_interaction(Line(pts[j], pts[j + 1], curve.width), charge_at, params) for j in range(len(pts) - 1)
    )


def _rect_distance(center, c, s, hl, hw, pts) -> np.ndarray:
    d = np.asarray(pts, dtype=float) - np.asarray(center, dtype=float)
    u = np.abs(d[..., 0] * c + d[..., 1] * s) - hl
    v = np.abs(-d[..., 0] * s + d[..., 1] * c) - hw
    return np.hypot(np.maximum(u, 0), np.maximum(v, 0))


@functools.lru_cache(maxsize=8)
def _pixel_centers(dims) -> np.ndarray:
    width, height = dims
    ys, xs = np.mgrid[0:height, 0:width]
    out = np.stack([xs + 0.5, ys + 0.5], axis=-1)
    out.setflags(write=False)
    return out


def _stroke_vertices(prim: Primitive, flatten_tol: float, ts=None) -> np.ndarray:
    if isinstance(prim, Line):
        return prim.points
    if ts is None:
        ts = flatten_params(prim, flatten_tol)
    return eval_bezier(prim, ts)


def stroke_distance(prim: Primitive, dims, flatten_tol: float = 0.25, region=None) -> np.ndarray:
    """Per-pixel distance from the pixel center to the primitive's stroke rectangles.

    With a boolean ``region`` only those pixels are evaluated (others are inf).
    """
    pts = _stroke_vertices(prim, flatten_tol)
    centers = _pixel_centers(dims)
    if region is not None:
        out = np.full(centers.shape[:2], np.inf)
        if region.any():
            out[region] = _stroke_distance_at(pts, prim.width / 2, centers[region])
        return out
    return _stroke_distance_at(pts, prim.width / 2, centers)


def _stroke_distance_at(pts, hw, centers) -> np.ndarray:
    best = np.full(centers.shape[:-1], np.inf)
    for j in range(len(pts) - 1):
        center, c, s, hl = _segment_frame(pts[j], pts[j + 1])
        np.minimum(best, _rect_distance(center, c, s, hl, hw, centers), out=best)
    return best


def interaction_energy(
    prim: Primitive,
    charges,
    params: PotentialParams = PotentialParams(),
    flatten_tol: float = 0.01,
    far_flatten_tol: float | None = None,
) -> float:
    """``sum_i q_i * cell_interaction(prim, center_i)`` over the charge grid (linear in charges).

    ``far_flatten_tol`` (defaults to ``flatten_tol``) discretizes curves for the wide Gaussian.
    """
    charges = np.asarray(charges, dtype=float)
    height, width = charges.shape
    if math.isfinite(params.truncation_radius):
        charges = np.where(stroke_distance(prim, (width, height), flatten_tol) > params.truncation_radius, 0.0, charges)
    w = charges.reshape(1, -1)
    hw = prim.width / 2
    total = 0.0
    pts = _stroke_vertices(prim, flatten_tol)
    for j in range(len(pts) - 1):
        center, c, s, hl = _segment_frame(pts[j], pts[j + 1])
        total += kernels.rect_moments(width, height, center[0], center[1], c, s, hl, hw, params.R_c, w, _CUTOFF)[0, 0]
    if params.lambda_f:
        pts = _stroke_vertices(prim, flatten_tol if far_flatten_tol is None else far_flatten_tol)
        for j in range(len(pts) - 1):
            center, c, s, hl = _segment_frame(pts[j], pts[j + 1])
            far = kernels.rect_moments(width, height, center[0], center[1], c, s, hl, hw, params.R_f, w, 0.0)
            total += params.lambda_f * far[0, 0]
    return float(total)


# -- connected-area masks --------------------------------------------------------


class _Frame:
    """Along/across coordinates of a primitive's supporting line or parabola."""

    def __init__(self, prim: Primitive, dims):
        self.prim = prim
        self.reach = float(np.hypot(*dims))
        if isinstance(prim, Line):
            center, c, s, _ = _segment_frame(prim.p1, prim.p2)
            self.center = center
            self.d = np.array([c, s])
            self.is_line = True
        else:
            self.is_line = False
            t_b = curve_midpoint(prim).t
            ts = np.linspace(-1.5, 2.5, 4001)
            pts = eval_bezier(prim, ts)
            seg = np.hypot(*np.diff(pts, axis=0).T)
            arc = np.concatenate([[0.0], np.cumsum(seg)])
            arc -= np.interp(t_b, ts, arc)
            self.ts, self.arc = ts, arc

    def centerline(self, s: np.ndarray):
        if self.is_line:
            pts = self.center + s[:, None] * self.d
            n = np.broadcast_to(np.array([-self.d[1], self.d[0]]), pts.shape)
            return pts, n
        t = np.interp(s, self.arc, self.ts)
        pts = eval_bezier(self.prim, t)
        tan = bezier_derivative(self.prim, t)
        norm = np.hypot(*tan.T)[:, None]
        tan = np.where(norm > 0, tan / np.where(norm > 0, norm, 1.0), np.array([1.0, 0.0]))
        return pts, np.stack([-tan[:, 1], tan[:, 0]], axis=1)

    def coords(self, pts: np.ndarray, s_lo: float, s_hi: float):
        if self.is_line:
            d = pts - self.center
            return d @ self.d, d @ np.array([-self.d[1], self.d[0]])
        t_lo = np.interp(s_lo - 2.0, self.arc, self.ts)
        t_hi = np.interp(s_hi + 2.0, self.arc, self.ts)
        t = closest_params(self.prim, pts, (t_lo, t_hi))
        s = np.interp(t, self.ts, self.arc)
        foot = eval_bezier(self.prim, t).reshape(-1, 2)
        tan = bezier_derivative(self.prim, t).reshape(-1, 2)
        norm = np.hypot(*tan.T)
        norm = np.where(norm > 0, norm, 1.0)
        v = ((pts - foot) * np.stack([-tan[:, 1], tan[:, 0]], axis=1)).sum(-1) / norm
        # feet clamped to the search range are not perpendicular projections
        s = np.where((t <= t_lo) | (t >= t_hi), np.inf, s)
        return s, v


def compute_mask(
    prim: Primitive, raster, fill_threshold: float = 0.5, step: float = 0.5, fringe_rings: int = 3
) -> np.ndarray:
    """Largest filled region aligned with ``prim`` (boolean grid), plus one pixel ring.

    Scans the centerline from the primitive's midpoint in both directions to
    the first unfilled sample, then scans perpendicular from every sample in
    that range to the nearest unfilled sample on each side; each side of the
    region sits at the median of those row extents (thin cap rows and wide
    rows at crossings do not set it).  The region is grown by one pixel ring
    and by up to ``fringe_rings`` rings into partially inked pixels.
    """
    raster = np.asarray(raster, dtype=float)
    if not 0 < fill_threshold < 1:
        raise ValueError("fill_threshold must lie in (0, 1)")
    h, w = raster.shape
    mask = np.zeros((h, w), dtype=bool)
    frame = _Frame(prim, (w, h))
    side_reach = max(w, h) / 2
    if frame.is_line:
        found = kernels.line_scan(
            raster, frame.center[0], frame.center[1], frame.d[0], frame.d[1], step, frame.reach, side_reach, fill_threshold
        )
    else:
        found = scan_region(raster, frame.centerline, frame.reach, side_reach, step, fill_threshold)
    if found is None:
        return mask
    s_lo, s_hi, d_pos, d_neg = found

    # candidate pixels: bounding box of the region
    lo_s = np.linspace(s_lo, s_hi, max(int((s_hi - s_lo) / step) + 1, 2))
    cl, _ = frame.centerline(lo_s)
    reach = max(d_pos, d_neg)
    x0 = max(int(math.floor(cl[:, 0].min() - reach - 1)), 0)
    x1 = min(int(math.ceil(cl[:, 0].max() + reach + 1)), w)
    y0 = max(int(math.floor(cl[:, 1].min() - reach - 1)), 0)
    y1 = min(int(math.ceil(cl[:, 1].max() + reach + 1)), h)
    if x1 <= x0 or y1 <= y0:
        return mask
    ys, xs = np.mgrid[y0:y1, x0:x1]
    pc = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=1)
    s, v = frame.coords(pc, s_lo, s_hi)
    inside = (s > s_lo) & (s < s_hi) & (v < d_pos) & (v > -d_neg)
    mask[y0:y1, x0:x1] = inside.reshape(y1 - y0, x1 - x0)
    # grow inside a window around the region only
    g = fringe_rings + 1
    win = (slice(max(y0 - g, 0), min(y1 + g, h)), slice(max(x0 - g, 0), min(x1 + g, w)))
    core = mask[win]
    ring = np.ones((3, 3), dtype=bool)
    # pick up the antialiased fringe (caps included) of the same ink
    fringe = ndimage.binary_dilation(core, structure=ring, iterations=fringe_rings, mask=raster[win] > 0)
    mask[win] = fringe | ndimage.binary_dilation(core, structure=ring)
    return mask


# -- derived charges -------------------------------------------------------------


def charges_size(union_q, raster, own_q, mask) -> np.ndarray:
    return np.where(mask, union_q - raster, own_q)


def charges_pos(union_q, raster, own_q, mask, lambda_pos: float = 4.0) -> np.ndarray:
    if lambda_pos < 1:
        raise ValueError("lambda_pos must be >= 1")
    return (union_q - own_q - raster) * np.where(mask, lambda_pos, 1.0)


def tangent_field(prim: Primitive, dims, region=None) -> np.ndarray:
    """Canonically oriented unit tangent at each pixel's closest point, ``(h, w, 2)``.

    Only pixels where ``region`` is true are evaluated (all when None).
    """
    width, height = dims
    out = np.zeros((height, width, 2))
    if isinstance(prim, Line):
        d = np.asarray(prim.p2) - np.asarray(prim.p1)
        n = math.hypot(*d)
        d = np.array([1.0, 0.0]) if n == 0 else d / n
        d = canonical_direction(d)
        if region is None:
            out[...] = d
        else:
            out[region] = d
        return out
    centers = _pixel_centers(dims)
    sel = np.ones((height, width), dtype=bool) if region is None else region
    if not sel.any():
        return out
    t = closest_params(prim, centers[sel])
    tan = bezier_derivative(prim, t).reshape(-1, 2)
    norm = np.hypot(*tan.T)[:, None]
    chord = np.asarray(prim.c2) - np.asarray(prim.c0)
    fallback = chord / (np.hypot(*chord) or 1.0)
    tan = np.where(norm > 0, tan / np.where(norm > 0, norm, 1.0), fallback)
    out[sel] = canonical_direction(tan)
    return out


def _doubled(t: np.ndarray) -> np.ndarray:
    # undirected tangents as doubled-angle vectors: sign- and frame-independent sums
    return np.stack([t[..., 0] ** 2 - t[..., 1] ** 2, 2 * t[..., 0] * t[..., 1]], axis=-1)


def _rdn_from_field(lk: np.ndarray, m: np.ndarray, norm: np.ndarray, beta: float) -> np.ndarray:
    # |cos| of the angle between l_k and the mean direction of m, via cos^2 = (1 + cos 2a) / 2
    cos2 = (_doubled(lk) * m).sum(-1) / norm
    cos = np.sqrt(np.clip(0.5 * (1.0 + cos2), 0.0, 1.0))
    return np.exp(-((cos - 1.0) ** 2) * beta) * norm


def charges_rdn(k: int, prims: Sequence[Primitive], coverages: Sequence[np.ndarray], rdn: RdnParams = RdnParams()):
    """Collinear-redundancy charges of primitive ``k`` against the others' tangent field."""
    height, width = coverages[k].shape
    dims = (width, height)
    m = np.zeros((height, width, 2))
    for j, (p, q) in enumerate(zip(prims, coverages)):
        if j == k:
            continue
        sel = q > 0
        if sel.any():
            m[sel] += _doubled(tangent_field(p, dims, sel)[sel]) * q[sel][:, None]
    norm = np.hypot(m[..., 0], m[..., 1])
    out = np.zeros((height, width))
    sel = norm > 1e-12
    if not sel.any():
        return out
    lk = tangent_field(prims[k], dims, sel)
    out[sel] = _rdn_from_field(lk[sel], m[sel], norm[sel], rdn.beta)
    return out


# -- parameter vectors -------------------------------------------------------------


def prim_to_params(prim: Primitive) -> np.ndarray:
    if isinstance(prim, Line):
        ps = line_to_possize(prim)
        return np.array([ps.midpoint[0], ps.midpoint[1], ps.angle, ps.length, ps.width])
    ps = curve_to_possize(prim)
    return np.array([ps.midpoint[0], ps.midpoint[1], ps.arm_angle1, ps.arm_angle2, ps.arm_len1, ps.arm_len2, ps.width])


def params_to_prim(kind: str, params, hint=None) -> Primitive:
    p = [float(x) for x in params]
    if kind == "line":
        return possize_to_line(LinePosSize((p[0], p[1]), p[2], p[3], p[4]))
    return possize_to_curve(CurvePosSize((p[0], p[1]), p[4], p[5], p[2], p[3], p[6]), hint=hint)


def pos_size_indices(kind: str):
    return (LINE_POS, LINE_SIZE) if kind == "line" else (CURVE_POS, CURVE_SIZE)


# -- frozen mean field -------------------------------------------------------------


@dataclass
class FrozenField:
    """Charges, mask and discretization of one primitive, fixed at an iteration barrier."""

    kind: str
    q_pos: np.ndarray
    q_size: np.ndarray
    q_rdn: np.ndarray
    mask: np.ndarray
    ts: np.ndarray | None = None
    hint: np.ndarray | None = None
    ts_far: np.ndarray | None = None


@dataclass
class EnergyTerms:
    e_size: np.ndarray
    e_pos: np.ndarray
    e_rdn: np.ndarray

    @property
    def total_size(self) -> float:
        return float(self.e_size.sum())

    @property
    def total_pos(self) -> float:
        return float(self.e_pos.sum())

    @property
    def total_rdn(self) -> float:
        return float(self.e_rdn.sum())

    @property
    def total(self) -> float:
        return self.total_size + self.total_pos + self.total_rdn


def mean_field(prims: Sequence[Primitive], raster, config: EnergyConfig = EnergyConfig(), coverages=None):
    """Derived charges for every primitive against the current union rendering."""
    raster = np.asarray(raster, dtype=float)
    height, width = raster.shape
    dims = (width, height)
    if coverages is None:
        coverages = [render_primitive(p, dims, config.supersample) for p in prims]
    union = np.zeros((height, width))
    for q in coverages:
        np.maximum(union, q, out=union)
    # other-primitive tangent sums, built once and reduced per primitive
    fields = []
    m_all = np.zeros((height, width, 2))
    m_own = []
    for p, q in zip(prims, coverages):
        sel = q > 0
        mk = np.zeros((height, width, 2))
        if sel.any():
            mk[sel] = _doubled(tangent_field(p, dims, sel)[sel]) * q[sel][:, None]
        m_own.append(mk)
        m_all += mk
    beta = config.rdn.beta
    rdn_reach = config.rdn_truncation * config.potential.R_c
    for k, (p, q) in enumerate(zip(prims, coverages)):
        mask = compute_mask(p, raster, config.fill_threshold)
        q_size = charges_size(union, raster, q, mask)
        q_pos = charges_pos(union, raster, q, mask, config.lambda_pos)
        m = m_all - m_own[k]
        norm = np.hypot(m[..., 0], m[..., 1])
        q_rdn = np.zeros((height, width))
        sel = norm > 1e-12
        if sel.any():
            sel &= stroke_distance(p, dims, config.flatten_tol, sel) <= rdn_reach
        if sel.any():
            lk = tangent_field(p, dims, sel)
            q_rdn[sel] = _rdn_from_field(lk[sel], m[sel], norm[sel], beta)
        if isinstance(p, Curve):
            ts = flatten_params(p, config.flatten_tol)
            ts_far = flatten_params(p, config.far_flatten_tol)
            fields.append(FrozenField("qbezier", q_pos, q_size, q_rdn, mask, ts, np.array(p.c1), ts_far))
        else:
            fields.append(FrozenField("line", q_pos, q_size, q_rdn, mask))
    return fields, coverages, union


def _close_moments(p, q, hw, ff: FrozenField, config: EnergyConfig, dims):
    """Close-range moments of one stroke rectangle; rows pos, size, rdn."""
    width, height = dims
    center, c, s, hl = _segment_frame(p, q)
    # columns: E, d/dcx, d/dcy, d/dtheta, d/dhl, d/dhw
    return kernels.rect_moments(
        width, height, center[0], center[1], c, s, hl, hw, config.potential.R_c,
        np.stack([ff.q_pos.ravel(), ff.q_size.ravel(), ff.q_rdn.ravel()]), _CUTOFF,
    ), (center, c, s, hl)


def _far_moments(p, q, hw, ff: FrozenField, config: EnergyConfig, dims):
    """Far-range moments scaled by lambda_f; rows pos, size."""
    width, height = dims
    center, c, s, hl = _segment_frame(p, q)
    far = kernels.rect_moments(
        width, height, center[0], center[1], c, s, hl, hw, config.potential.R_f,
        np.stack([ff.q_pos.ravel(), ff.q_size.ravel()]), 0.0,
    )
    return config.potential.lambda_f * far, (center, c, s, hl)


def _chains(prim: Primitive, ff: FrozenField, config: EnergyConfig):
    """``(vertices, ts, moment function)`` per range; lines share one segment."""
    if isinstance(prim, Line):
        pts = prim.points
        out = [(pts, None, _close_moments)]
        if config.potential.lambda_f:
            out.append((pts, None, _far_moments))
        return out
    ts = flatten_params(prim, config.flatten_tol) if ff.ts is None else ff.ts
    out = [(eval_bezier(prim, ts), ts, _close_moments)]
    if config.potential.lambda_f:
        tf = flatten_params(prim, config.far_flatten_tol) if ff.ts_far is None else ff.ts_far
        out.append((eval_bezier(prim, tf), tf, _far_moments))
    return out


def frozen_energy(params, ff: FrozenField, config: EnergyConfig, dims) -> tuple[float, float, float]:
    """``(e_size, e_pos, e_rdn)`` of one primitive with its charges held fixed."""
    prim = params_to_prim(ff.kind, params, ff.hint)
    hw = prim.width / 2
    tot = np.zeros(3)
    for pts, _, moments in _chains(prim, ff, config):
        for j in range(len(pts) - 1):
            mom, _ = moments(pts[j], pts[j + 1], hw, ff, config, dims)
            tot[: len(mom)] += mom[:, 0]
    return float(tot[1]), float(tot[0]), float(tot[2])


def frozen_gradient(params, ff: FrozenField, config: EnergyConfig, dims) -> np.ndarray:
    """Exact partials of the frozen energy: position from E_pos, size from E_size + E_rdn."""
    params = np.asarray(params, dtype=float)
    if ff.kind == "line":
        p, q = _line_ends(params)
        mom, _ = _close_moments(p, q, params[4] / 2, ff, config, dims)
        pos, size = mom[0].copy(), mom[1] + mom[2]
        if config.potential.lambda_f:
            far, _ = _far_moments(p, q, params[4] / 2, ff, config, dims)
            pos += far[0]
            size += far[1]
        return np.array([pos[1], pos[2], pos[3], 0.5 * size[4], 0.5 * size[5]])

    prim = params_to_prim(ff.kind, params, ff.hint)
    hw = prim.width / 2
    g_ctrl = np.zeros((2, 6))
    g_w = 0.0
    for pts, ts, moments in _chains(prim, ff, config):
        n = len(pts)
        g_vert = np.zeros((2, n, 2))  # [pos-energy, size-energy] x vertex x xy
        for j in range(n - 1):
            mom, (_, c, s, hl) = moments(pts[j], pts[j + 1], hw, ff, config, dims)
            size = mom[1] + mom[2] if len(mom) > 2 else mom[1]
            d = np.array([c, s])
            nrm = np.array([-s, c])
            L = 2 * hl
            for row, e in ((0, mom[0]), (1, size)):
                gc = e[1:3]
                gt = e[3] * nrm / L if L > 0 else np.zeros(2)
                g_vert[row, j] += 0.5 * gc - 0.5 * e[4] * d - gt
                g_vert[row, j + 1] += 0.5 * gc + 0.5 * e[4] * d + gt
            g_w += 0.5 * size[5]
        u = 1 - ts
        basis = np.stack([u * u, 2 * ts * u, ts * ts])  # control point x vertex
        g_ctrl += np.einsum("mv,rvx->rmx", basis, g_vert).reshape(2, 6)
    J = curve_possize_jacobian(prim)
    g_geo = np.linalg.lstsq(J.T, g_ctrl.T, rcond=None)[0].T  # rows: pos energy, size energy
    return np.array([g_geo[0, 0], g_geo[0, 1], g_geo[0, 2], g_geo[0, 3], g_geo[1, 4], g_geo[1, 5], g_w])


def _line_ends(params):
    mx, my, th, L = params[:4]
    c, s = math.cos(th), math.sin(th)
    h = L / 2
    return np.array([mx - h * c, my - h * s]), np.array([mx + h * c, my + h * s])


def total_energy(prims: Sequence[Primitive], raster, config: EnergyConfig = EnergyConfig()) -> EnergyTerms:
    raster = np.asarray(raster, dtype=float)
    dims = (raster.shape[1], raster.shape[0])
    fields, _, _ = mean_field(prims, raster, config)
    vals = np.array([frozen_energy(prim_to_params(p), ff, config, dims) for p, ff in zip(prims, fields)]).reshape(-1, 3)
    return EnergyTerms(vals[:, 0], vals[:, 1], vals[:, 2])


def gradient(k: int, prims: Sequence[Primitive], raster, config: EnergyConfig = EnergyConfig()) -> np.ndarray:
    raster = np.asarray(raster, dtype=float)
    dims = (raster.shape[1], raster.shape[0])
    fields, _, _ = mean_field(prims, raster, config)
    return frozen_gradient(prim_to_params(prims[k]), fields[k], config, dims)
