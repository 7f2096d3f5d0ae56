"""Primitive geometry: lines and quadratic Bezier curves.

Primitives are immutable values.  Points are plain ``(x, y)`` float tuples in
pixel units; the pixel with column ``i`` and row ``j`` has its center at
``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy.optimize import brentq

Point = tuple[float, float]


def _pt(p) -> Point:
    return (float(p[0]), float(p[1]))


@dataclass(frozen=True)
class Line:
    p1: Point
    p2: Point
    width: float

    kind = "line"

    def __post_init__(self):
        object.__setattr__(self, "p1", _pt(self.p1))
        object.__setattr__(self, "p2", _pt(self.p2))
        object.__setattr__(self, "width", float(self.width))

    @property
    def points(self) -> np.ndarray:
        return np.array([self.p1, self.p2])

    @property
    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])

    def translated(self, dx: float, dy: float) -> "Line":
        return Line((self.p1[0] + dx, self.p1[1] + dy), (self.p2[0] + dx, self.p2[1] + dy), self.width)

    def reversed(self) -> "Line":
        return Line(self.p2, self.p1, self.width)

    def with_width(self, width: float) -> "Line":
        return Line(self.p1, self.p2, width)


@dataclass(frozen=True)
class Curve:
    """Quadratic Bezier ``c0 -> c2`` with middle control point ``c1``."""

    c0: Point
    c1: Point
    c2: Point
    width: float

    kind = "qbezier"

    def __post_init__(self):
        for name in ("c0", "c1", "c2"):
            object.__setattr__(self, name, _pt(getattr(self, name)))
        object.__setattr__(self, "width", float(self.width))

    @property
    def points(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(flatten_curve(self, 0.01), axis=0), axis=1)))

    def translated(self, dx: float, dy: float) -> "Curve":
        return Curve(*[(p[0] + dx, p[1] + dy) for p in (self.c0, self.c1, self.c2)], self.width)

    def reversed(self) -> "Curve":
        return Curve(self.c2, self.c1, self.c0, self.width)

    def with_width(self, width: float) -> "Curve":
        return Curve(self.c0, self.c1, self.c2, width)


Primitive = Union[Line, Curve]


@dataclass(frozen=True)
class VectorScene:
    """Primitives in global image coordinates on a ``width x height`` canvas."""

    width: int
    height: int
    primitives: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def __len__(self) -> int:
        return len(self.primitives)

    def replace(self, primitives: Sequence[Primitive]) -> "VectorScene":
        return VectorScene(self.width, self.height, tuple(primitives))


def primitive_from_points(kind: str, points, width: float) -> Primitive:
    if kind == "line":
        return Line(points[0], points[1], width)
    if kind == "qbezier":
        return Curve(points[0], points[1], points[2], width)
    raise ValueError(f"unknown primitive kind {kind!r}")


# -- line position/size parameterization ------------------------------------


class LinePosSize(NamedTuple):
    midpoint: Point
    angle: float
    length: float
    width: float


def normalize_angle(angle: float) -> float:
    """Map an undirected line angle to ``[-pi/2, pi/2)``."""
    a = math.fmod(angle + math.pi / 2, math.pi)
    if a < 0:
        a += math.pi
    a -= math.pi / 2
    if a >= math.pi / 2:  # fmod rounding at the upper edge
        a -= math.pi
    return a


def canonical_direction(d) -> np.ndarray:
    """Unit direction with angle in ``[-pi/2, pi/2)``: ``dx > 0``, or ``dx == 0`` and ``dy < 0``."""
    d = np.asarray(d, dtype=float)
    flip = (d[..., 0] < 0) | ((d[..., 0] == 0) & (d[..., 1] > 0))
    return np.where(flip[..., None], -d, d)


def line_to_possize(line: Line) -> LinePosSize:
    dx = line.p2[0] - line.p1[0]
    dy = line.p2[1] - line.p1[1]
    length = math.hypot(dx, dy)
    mid = ((line.p1[0] + line.p2[0]) / 2, (line.p1[1] + line.p2[1]) / 2)
    angle = normalize_angle(math.atan2(dy, dx)) if length > 0 else 0.0
    return LinePosSize(mid, angle, length, line.width)


def possize_to_line(ps: LinePosSize) -> Line:
    c, s = math.cos(ps.angle), math.sin(ps.angle)
    h = ps.length / 2
    mx, my = ps.midpoint
    return Line((mx - h * c, my - h * s), (mx + h * c, my + h * s), ps.width)


# -- Bezier evaluation -------------------------------------------------------


def eval_bezier(curve: Curve, t):
    """Point(s) on the curve at parameter(s) ``t``; scalar t gives a tuple."""
    c0, c1, c2 = curve.points
    tt = np.asarray(t, dtype=float)
    u = 1.0 - tt
    pts = (u * u)[..., None] * c0 + (2 * u * tt)[..., None] * c1 + (tt * tt)[..., None] * c2
    if pts.ndim == 1:
        return (float(pts[0]), float(pts[1]))
    return pts


def bezier_derivative(curve: Curve, t) -> np.ndarray:
    c0, c1, c2 = curve.points
    tt = np.asarray(t, dtype=float)[..., None]
    return 2 * (1 - tt) * (c1 - c0) + 2 * tt * (c2 - c1)


def split_bezier(curve: Curve, t: float) -> tuple[Curve, Curve]:
    """de Casteljau subdivision at ``t``."""
    c0, c1, c2 = curve.points
    a = (1 - t) * c0 + t * c1
    b = (1 - t) * c1 + t * c2
    m = (1 - t) * a + t * b
    return Curve(c0, a, m, curve.width), Curve(m, b, c2, curve.width)


def bezier_segment(curve: Curve, t0: float, t1: float) -> Curve:
    """The piece of the curve's parabola on ``[t0, t1]`` as a Bezier over ``[0, 1]``."""
    p0 = np.array(eval_bezier(curve, t0))
    p2 = np.array(eval_bezier(curve, t1))
    # control point: intersection of end tangents, via the blossom
    c0, c1, c2 = curve.points

    def blossom(a, b):
        return (1 - a) * (1 - b) * c0 + ((1 - a) * b + a * (1 - b)) * c1 + a * b * c2

    return Curve(p0, blossom(t0, t1), p2, curve.width)


# -- curve "midpoint" --------------------------------------------------------


class CurveMidpoint(NamedTuple):
    point: Point
    t: float
    degenerate: bool


def _midpoint_param(c0, c1, c2) -> tuple[float, bool]:
    a = c0 - c1
    b = c2 - c1
    na = math.hypot(*a)
    nb = math.hypot(*b)
    if na == 0 and nb == 0:
        return 0.5, True
    # P(t) - c1 = (1-t)^2 a + t^2 b is parallel to the bisector a/|a| + b/|b|
    # exactly when (1-t)^2 |a| = t^2 |b|.
    sa, sb = math.sqrt(na), math.sqrt(nb)
    t = sa / (sa + sb)
    cross = a[0] * b[1] - a[1] * b[0]
    degenerate = bool(abs(cross) <= 1e-12 * max(na * nb, 1e-300) and float(a @ b) < 0)
    return t, degenerate


def curve_midpoint(curve: Curve) -> CurveMidpoint:
    """On-curve point where the interior bisector of the angle at ``c1`` meets the curve.

    When ``c1`` lies on the chord the bisector gives no intersection; the
    curve point nearest to ``c1`` is returned instead and flagged degenerate
    (the closed form lands on that point too).
    """
    c0, c1, c2 = curve.points
    t, degenerate = _midpoint_param(c0, c1, c2)
    return CurveMidpoint(eval_bezier(curve, t), t, degenerate)


class CurvePosSize(NamedTuple):
    midpoint: Point
    arm_len1: float
    arm_len2: float
    arm_angle1: float
    arm_angle2: float
    width: float


def curve_to_possize(curve: Curve) -> CurvePosSize:
    mid = curve_midpoint(curve)
    bx, by = mid.point
    e1 = (curve.c0[0] - bx, curve.c0[1] - by)
    e2 = (curve.c2[0] - bx, curve.c2[1] - by)
    return CurvePosSize(
        mid.point,
        math.hypot(*e1),
        math.hypot(*e2),
        math.atan2(e1[1], e1[0]),
        math.atan2(e2[1], e2[0]),
        curve.width,
    )


def _control_from_midpoint(c0: np.ndarray, c2: np.ndarray, mid: np.ndarray, hint=None) -> np.ndarray:
    e1 = c0 - mid
    d = c2 - c0
    e2 = c2 - mid

    def residual(t):
        u = 1 - t
        return u * u * np.hypot(*(e1 + t * t * d)) - t * t * np.hypot(*(e2 - u * u * d))

    def control(t):
        u = 1 - t
        return (mid - u * u * c0 - t * t * c2) / (2 * t * u)

    # Strongly lopsided curves can share one position/size tuple; scan for every root.
    eps = 1e-12
    grid = np.linspace(eps, 1 - eps, 65)
    u = 1 - grid
    vals = u * u * np.hypot(*(e1[:, None] + grid * grid * d[:, None])) - grid * grid * np.hypot(
        *(e2[:, None] - u * u * d[:, None])
    )
    roots = [float(grid[i]) for i in np.flatnonzero(vals == 0)]
    for i in np.flatnonzero(vals[:-1] * vals[1:] < 0):
        roots.append(brentq(residual, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    if not roots:
        return control(0.5)
    if hint is not None:
        hint = np.asarray(hint, dtype=float)
        return min((control(t) for t in roots), key=lambda c: float(np.hypot(*(c - hint))))
    return control(min(roots, key=lambda t: abs(t - 0.5)))


def possize_to_curve(ps: CurvePosSize, hint=None) -> Curve:
    """Inverse of :func:`curve_to_possize`; ``hint`` picks among ambiguous middle control points."""
    mid = np.asarray(ps.midpoint, dtype=float)
    c0 = mid + ps.arm_len1 * np.array([math.cos(ps.arm_angle1), math.sin(ps.arm_angle1)])
    c2 = mid + ps.arm_len2 * np.array([math.cos(ps.arm_angle2), math.sin(ps.arm_angle2)])
    c1 = _control_from_midpoint(c0, c2, mid, hint)
    return Curve(c0, c1, c2, ps.width)


def curve_possize_jacobian(curve: Curve) -> np.ndarray:
    """d(Bx, By, angle1, angle2, len1, len2) / d(c0x, c0y, c1x, c1y, c2x, c2y)."""
    c0, c1, c2 = curve.points
    a = c0 - c1
    b = c2 - c1
    na, nb = np.hypot(*a), np.hypot(*b)
    sa, sb = math.sqrt(na), math.sqrt(nb)
    t = sa / (sa + sb)
    u = 1 - t
    ahat = a / na
    bhat = b / nb
    # dt = (sb dsa - sa dsb) / (sa + sb)^2, dsa = ahat.(dc0 - dc1) / (2 sa)
    dsa = np.zeros(6)
    dsa[0:2] = ahat / (2 * sa)
    dsa[2:4] = -ahat / (2 * sa)
    dsb = np.zeros(6)
    dsb[4:6] = bhat / (2 * sb)
    dsb[2:4] = -bhat / (2 * sb)
    dt = (sb * dsa - sa * dsb) / (sa + sb) ** 2
    deriv = 2 * (u * (c1 - c0) + t * (c2 - c1))
    dB = np.zeros((2, 6))
    dB[:, 0:2] = u * u * np.eye(2)
    dB[:, 2:4] = 2 * t * u * np.eye(2)
    dB[:, 4:6] = t * t * np.eye(2)
    dB += np.outer(deriv, dt)
    B = u * u * c0 + 2 * t * u * c1 + t * t * c2
    rows = [dB[0], dB[1]]
    arms = []
    for e, sl in ((c0 - B, slice(0, 2)), (c2 - B, slice(4, 6))):
        de = -dB.copy()
        de[:, sl] += np.eye(2)
        ne2 = float(e @ e)
        arms.append(((e[0] * de[1] - e[1] * de[0]) / ne2, (e @ de) / math.sqrt(ne2)))
    rows += [arms[0][0], arms[1][0], arms[0][1], arms[1][1]]
    return np.array(rows)


# -- flattening --------------------------------------------------------------


def _flatness(c0, c1, c2) -> np.ndarray:
    """Per-piece flatness of stacked control points ``(n, 2)``."""
    mid = 0.5 * (c0 + c2)
    half_dev = 0.5 * np.hypot(*(c1 - mid).T)
    chord = c2 - c0
    cl2 = (chord * chord).sum(-1)
    s = np.clip(((c1 - c0) * chord).sum(-1) / np.where(cl2 > 0, cl2, 1.0), 0.0, 1.0)
    seg = np.hypot(*(c1 - c0 - np.where(cl2 > 0, s, 0.0)[:, None] * chord).T)
    return np.minimum(half_dev, seg)


def flatten_params(curve: Curve, tol: float, max_depth: int = 16) -> np.ndarray:
    """Parameter values of a polyline within ``tol`` px of the curve."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    p0, p1, p2 = (np.asarray(c, dtype=float)[None] for c in curve.points)
    t1 = np.array([1.0])
    h = 1.0
    ends = []
    # de Casteljau halving, one depth level at a time
    for depth in range(max_depth + 1):
        done = (_flatness(p0, p1, p2) <= tol) | (depth >= max_depth)
        ends.append(t1[done])
        if done.all():
            break
        keep = ~done
        p0, p1, p2, t1 = p0[keep], p1[keep], p2[keep], t1[keep]
        a = 0.5 * (p0 + p1)
        b = 0.5 * (p1 + p2)
        m = 0.5 * (a + b)
        h *= 0.5
        p0, p1, p2 = np.concatenate([p0, m]), np.concatenate([a, b]), np.concatenate([m, p2])
        t1 = np.concatenate([t1 - h, t1])
    return np.concatenate([[0.0], np.sort(np.concatenate(ends))])


def flatten_curve(curve: Curve, tol: float) -> np.ndarray:
    """Polyline vertices (n, 2) with both endpoints preserved exactly."""
    ts = flatten_params(curve, tol)
    pts = eval_bezier(curve, ts)
    pts[0] = curve.c0
    pts[-1] = curve.c2
    return pts


def centerline(prim: Primitive, tol: float = 0.05) -> np.ndarray:
    if isinstance(prim, Line):
        return prim.points
    return flatten_curve(prim, tol)


# -- closest point queries ---------------------------------------------------


class ClosestPoint(NamedTuple):
    point: Point
    param: float
    dir: Point


def _unit(v, fallback=(1.0, 0.0)) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    if n == 0:
        return np.asarray(fallback, dtype=float)
    return np.asarray(v, dtype=float) / n


def closest_point(prim: Primitive, q) -> ClosestPoint:
    q = np.asarray(q, dtype=float)
    if isinstance(prim, Line):
        p1, p2 = prim.points
        d = p2 - p1
        l2 = float(d @ d)
        t = 0.0 if l2 == 0 else min(max(float((q - p1) @ d) / l2, 0.0), 1.0)
        p = p1 + t * d
        return ClosestPoint(_pt(p), t, _pt(_unit(d)))
    c0, c1, c2 = prim.points
    # |P(t) - q|^2 has derivative A t^3 + B t^2 + C t + D
    a = c0 - 2 * c1 + c2
    b = c1 - c0
    r = c0 - q
    coeffs = [float(a @ a), 3 * float(a @ b), 2 * float(b @ b) + float(a @ r), float(b @ r)]
    cands = [0.0, 1.0]
    if any(abs(c) > 0 for c in coeffs):
        for root in np.roots(np.trim_zeros(coeffs, "f") or [0.0]):
            if abs(root.imag) < 1e-9 and 0.0 <= root.real <= 1.0:
                cands.append(float(root.real))
    ts = np.array(cands)
    pts = eval_bezier(prim, ts)
    dist = np.hypot(*(pts - q).T)
    i = int(np.argmin(dist))
    t = float(ts[i])
    tangent = bezier_derivative(prim, t)
    return ClosestPoint(_pt(pts[i]), t, _pt(_unit(tangent, prim.points[2] - prim.points[0])))


def closest_params(curve: Curve, pts: np.ndarray, t_range=(0.0, 1.0), n_coarse: int = 33) -> np.ndarray:
    """Vectorized closest-parameter search over ``t_range`` (may extend past [0, 1])."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    lo, hi = t_range
    ts = np.linspace(lo, hi, n_coarse)
    samples = eval_bezier(curve, ts)
    d2 = ((pts[:, None, :] - samples[None, :, :]) ** 2).sum(-1)
    t = ts[np.argmin(d2, axis=1)]
    c0, c1, c2 = curve.points
    acc = 2 * (c0 - 2 * c1 + c2)
    for _ in range(8):
        p = eval_bezier(curve, t).reshape(-1, 2)
        dp = bezier_derivative(curve, t).reshape(-1, 2)
        r = p - pts
        g = (r * dp).sum(-1)
        h = (dp * dp).sum(-1) + (r * acc).sum(-1)
        step = np.where(h > 1e-12, g / np.where(h > 1e-12, h, 1.0), 0.0)
        t = np.clip(t - step, lo, hi)
    return t


def segment_distance(a1, a2, b1, b2) -> float:
    """Minimum distance between segments ``a1a2`` and ``b1b2``."""
    a1, a2, b1, b2 = (np.asarray(p, dtype=float) for p in (a1, a2, b1, b2))
    if segment_intersection(a1, a2, b1, b2) is not None:
        return 0.0

    def pt_seg(p, s1, s2):
        d = s2 - s1
        l2 = float(d @ d)
        t = 0.0 if l2 == 0 else min(max(float((p - s1) @ d) / l2, 0.0), 1.0)
        return float(np.hypot(*(p - s1 - t * d)))

    return min(pt_seg(a1, b1, b2), pt_seg(a2, b1, b2), pt_seg(b1, a1, a2), pt_seg(b2, a1, a2))


def segment_intersection(a1, a2, b1, b2):
    """Intersection ``(point, ta, tb)`` of two segments, or None (parallel pairs never intersect)."""
    a1, a2, b1, b2 = (np.asarray(p, dtype=float) for p in (a1, a2, b1, b2))
    da = a2 - a1
    db = b2 - b1
    den = da[0] * db[1] - da[1] * db[0]
    if abs(den) < 1e-12:
        return None
    w = b1 - a1
    ta = (w[0] * db[1] - w[1] * db[0]) / den
    tb = (w[0] * da[1] - w[1] * da[0]) / den
    if -1e-12 <= ta <= 1 + 1e-12 and -1e-12 <= tb <= 1 + 1e-12:
        return a1 + ta * da, ta, tb
    return None
