"""Scene-level merging: line graph components, endpoint snapping, pairwise curve merging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geom import (
    Curve,
    Line,
    VectorScene,
    closest_params,
    closest_point,
    curve_midpoint,
    eval_bezier,
    segment_distance,
    segment_intersection,
)


@dataclass(frozen=True)
class MergeConfig:
    # None selects the width-based default (2x and 0.5x the mean width)
    link_max_gap: Optional[float] = None
    link_max_angle: float = math.radians(5.0)
    link_max_offset: Optional[float] = None
    link_width_ratio: float = 0.5
    snap_fraction: float = 0.05
    curve_width_tol: float = 0.3
    curve_fit_tol: float = 1.0
    u_q1_samples: int = 33
    refine_u_q1: bool = True

    def __post_init__(self):
        if not 0 < self.snap_fraction < 0.2:
            raise ValueError("snap_fraction must lie in (0, 0.2)")
        if self.u_q1_samples < 3:
            raise ValueError("u_q1_samples must be >= 3")


# -- lines -----------------------------------------------------------------------


def _direction(line: Line):
    d = np.subtract(line.p2, line.p1)
    n = math.hypot(d[0], d[1])
    return (d / n if n > 0 else None), n


def _line_offset(line: Line, d: np.ndarray, q) -> float:
    r = np.asarray(q, dtype=float) - np.asarray(line.p1)
    return abs(float(r[0] * d[1] - r[1] * d[0]))


def link_predicate(a: Line, b: Line, config: MergeConfig = MergeConfig()) -> bool:
    """Whether two lines are close, collinear and not side by side."""
    da, la = _direction(a)
    db, lb = _direction(b)
    if da is None or db is None:
        return False
    mean_w = 0.5 * (a.width + b.width)
    max_gap = 2.0 * mean_w if config.link_max_gap is None else config.link_max_gap
    max_off = 0.5 * mean_w if config.link_max_offset is None else config.link_max_offset
    if abs(a.width - b.width) > config.link_width_ratio * max(a.width, b.width):
        return False
    if abs(float(da @ db)) < math.cos(config.link_max_angle):
        return False
    mid_a = 0.5 * (np.asarray(a.p1) + a.p2)
    mid_b = 0.5 * (np.asarray(b.p1) + b.p2)
    if _line_offset(a, da, mid_b) > max_off or _line_offset(b, db, mid_a) > max_off:
        return False
    return segment_distance(a.p1, a.p2, b.p1, b.p2) <= max_gap


def _bbox(prim, pad: float) -> np.ndarray:
    pts = prim.points
    return np.concatenate([pts.min(axis=0) - pad, pts.max(axis=0) + pad])


def _overlapping_pairs(boxes: np.ndarray):
    """Index pairs ``i < j`` whose boxes intersect, in sorted order."""
    pairs = []
    order = np.argsort(boxes[:, 0], kind="stable")
    for pos, i in enumerate(order):
        for j in order[pos + 1 :]:
            if boxes[j, 0] > boxes[i, 2]:
                break
            if boxes[j, 1] <= boxes[i, 3] and boxes[i, 1] <= boxes[j, 3]:
                pairs.append((min(i, j), max(i, j)))
    return sorted(pairs)


def link_graph(lines: Sequence[Line], config: MergeConfig = MergeConfig()):
    """Undirected edge list ``(i, j)``, ``i < j``, of linked lines."""
    if not lines:
        return []
    pads = [2.0 * max(l.width for l in lines) if config.link_max_gap is None else config.link_max_gap]
    boxes = np.array([_bbox(l, pads[0]) for l in lines])
    return [(i, j) for i, j in _overlapping_pairs(boxes) if link_predicate(lines[i], lines[j], config)]


def fit_line(members: Sequence[Line]) -> Line:
    """Total-least-squares line through the members' endpoints, spanning their projections."""
    pts = np.concatenate([m.points for m in members])
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    d = vt[0]
    t = (pts - c) @ d
    lengths = np.array([m.length for m in members])
    widths = np.array([m.width for m in members])
    width = float((lengths * widths).sum() / lengths.sum()) if lengths.sum() > 0 else float(widths.mean())
    p1, p2 = c + t.min() * d, c + t.max() * d
    # keep the orientation of the first member
    if float(np.subtract(p2, p1) @ np.subtract(members[0].p2, members[0].p1)) < 0:
        p1, p2 = p2, p1
    return Line(p1, p2, width)


def merge_lines(scene: VectorScene, config: MergeConfig = MergeConfig()) -> VectorScene:
    prims = list(scene.primitives)
    idx = [k for k, p in enumerate(prims) if isinstance(p, Line)]
    lines = [prims[k] for k in idx]
    edges = link_graph(lines, config)
    if not edges:
        return scene
    n = len(lines)
    e = np.array(edges)
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    out = list(prims)
    drop = set()
    for members in groups.values():
        if len(members) == 1:
            continue
        out[idx[members[0]]] = fit_line([lines[i] for i in members])
        drop.update(idx[i] for i in members[1:])
    return scene.replace([p for k, p in enumerate(out) if k not in drop])


def snap_endpoints(scene: VectorScene, config: MergeConfig = MergeConfig()) -> VectorScene:
    """Trim dangling ends shorter than ``snap_fraction`` of their segment at intersections."""
    prims = list(scene.primitives)
    idx = [k for k, p in enumerate(prims) if isinstance(p, Line)]
    if len(idx) < 2:
        return scene
    boxes = np.array([_bbox(prims[k], 0.0) for k in idx])
    for a, b in _overlapping_pairs(boxes):
        ka, kb = idx[a], idx[b]
        A, B = prims[ka], prims[kb]
        hit = segment_intersection(A.p1, A.p2, B.p1, B.p2)
        if hit is None:
            continue
        x, ta, tb = hit
        prims[ka] = _trim(A, x, ta, config.snap_fraction)
        prims[kb] = _trim(B, x, tb, config.snap_fraction)
    return scene.replace(prims)


def _trim(line: Line, x, t: float, fraction: float) -> Line:
    t = min(max(t, 0.0), 1.0)
    if 0 < t < fraction:
        return Line(x, line.p2, line.width)
    if 0 < 1 - t < fraction:
        return Line(line.p1, x, line.width)
    return line


# parameter range of P's parabola searched for Q's points (P may be the short piece)
_EXTENDED = (-12.0, 13.0)


# -- curves ------------------------------------------------------------------------


def curve_midpoint_correspondence(P: Curve, Q: Curve):
    """``(t_b, s_b, t_q1)``: midpoint parameters of P and Q, and Q(0) projected onto P."""
    mp = curve_midpoint(P)
    mq = curve_midpoint(Q)
    if mp.degenerate or mq.degenerate:
        raise ValueError("degenerate curve has no midpoint correspondence")
    t_q1 = closest_point(P, Q.c0).param
    return mp.t, mq.t, t_q1


def _bernstein(u: np.ndarray) -> np.ndarray:
    v = 1 - u
    return np.stack([v * v, 2 * u * v, u * u], axis=1)


def _fit(targets: np.ndarray, t_b: float, s_b: float, t_q1: float, u_q1: float):
    us = np.array(
        [0.0, t_b * u_q1 / t_q1, u_q1 / t_q1, u_q1, 1 - (1 - s_b) * (1 - u_q1), 1.0]
    )
    A = _bernstein(us)
    ctrl, *_ = np.linalg.lstsq(A, targets, rcond=None)
    res = np.hypot(*(A @ ctrl - targets).T)
    return float((res * res).sum()), float(res.max()), ctrl


def _fit_oriented(P: Curve, Q: Curve, config: MergeConfig):
    try:
        t_b, s_b, t_q1 = curve_midpoint_correspondence(P, Q)
    except ValueError:
        return None
    if t_q1 <= 0:
        return None
    tol = config.curve_fit_tol
    # Q must start on P's stroke and run along P's parabola
    if math.dist(closest_point(P, Q.c0).point, Q.c0) > tol + P.width / 2:
        return None
    probe = np.array([eval_bezier(Q, s_b), Q.c2])
    t = closest_params(P, probe, _EXTENDED, n_coarse=257)
    if np.hypot(*(eval_bezier(P, t) - probe).T).max() > tol:
        return None
    targets = np.array([P.c0, eval_bezier(P, t_b), P.c2, Q.c0, eval_bezier(Q, s_b), Q.c2])
    n = config.u_q1_samples
    grid = [k / (n + 1) for k in range(1, n + 1) if k / (n + 1) <= t_q1]
    if not grid:
        return None
    fits = [(_fit(targets, t_b, s_b, t_q1, u)[0], u) for u in grid]
    best_obj, best_u = min(fits)
    if config.refine_u_q1:
        h = 1.0 / (n + 1)
        lo, hi = max(best_u - h, 1e-9), min(best_u + h, t_q1)
        r = minimize_scalar(
            lambda u: _fit(targets, t_b, s_b, t_q1, u)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        if r.fun < best_obj:
            best_u = float(r.x)
    obj, max_res, ctrl = _fit(targets, t_b, s_b, t_q1, best_u)
    if max_res > tol:
        return None
    return obj, ctrl


def merge_curve_pair(P: Curve, Q: Curve, config: MergeConfig = MergeConfig()) -> Optional[Curve]:
    """Single quadratic replacing ``P`` and ``Q``, or None when they do not fit one curve."""
    if abs(P.width - Q.width) > config.curve_width_tol * max(P.width, Q.width):
        return None
    best = None
    for a, b in ((P, Q), (P, Q.reversed()), (P.reversed(), Q), (P.reversed(), Q.reversed())):
        found = _fit_oriented(a, b, config)
        if found is not None and (best is None or found[0] < best[0]):
            best = found
    if best is None:
        return None
    lp, lq = P.length, Q.length
    width = (lp * P.width + lq * Q.width) / (lp + lq) if lp + lq > 0 else 0.5 * (P.width + Q.width)
    c = best[1]
    return Curve(c[0], c[1], c[2], width)


def merge_curves(scene: VectorScene, config: MergeConfig = MergeConfig()) -> VectorScene:
    """Replace curve pairs by single curves until a full pass finds no fit."""
    prims = list(scene.primitives)
    changed = True
    while changed:
        changed = False
        idx = [k for k, p in enumerate(prims) if isinstance(p, Curve)]
        if len(idx) < 2:
            break
        boxes = np.array([_bbox(prims[k], config.curve_fit_tol + prims[k].width / 2) for k in idx])
        for a, b in _overlapping_pairs(boxes):
            merged = merge_curve_pair(prims[idx[a]], prims[idx[b]], config)
            if merged is not None:
                prims[idx[a]] = merged
                del prims[idx[b]]
                changed = True
                break
    return scene.replace(prims)


def merge_scene(scene: VectorScene, config: MergeConfig = MergeConfig()) -> VectorScene:
    return merge_curves(snap_endpoints(merge_lines(scene, config), config), config)
