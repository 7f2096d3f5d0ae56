"""Per-patch refinement: Adam on the charge energy plus join/relocate maintenance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .energy import (
    EnergyConfig,
    frozen_gradient,
    mean_field,
    params_to_prim,
    pos_size_indices,
    prim_to_params,
)
from .geom import Curve, Line, Primitive
from .raster import render_union


@dataclass(frozen=True)
class RefineConfig(EnergyConfig):
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iters: int = 500
    maintenance_period: int = 50
    collapse_length: float = 1.0
    collapse_width: float = 0.05
    join_angle: float = math.radians(5.0)
    join_overlap: float = 1.0
    stop_grad_norm: float = 1e-3
    # uncovered-ink components smaller than this are not relocation targets
    relocate_min_pixels: int = 4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.maintenance_period < 1:
            raise ValueError("maintenance_period must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class RefineState:
    kinds: list
    params: list
    m: list
    v: list
    alive: list
    step: int = 0
    hints: list = field(default_factory=list)
    nonfinite: int = 0

    @classmethod
    def from_prims(cls, prims: Sequence[Primitive]) -> "RefineState":
        params = [prim_to_params(p) for p in prims]
        return cls(
            kinds=[p.kind for p in prims],
            params=params,
            m=[np.zeros_like(x) for x in params],
            v=[np.zeros_like(x) for x in params],
            alive=[True] * len(prims),
            hints=[np.array(p.c1) if isinstance(p, Curve) else None for p in prims],
        )

    def prim(self, k: int) -> Primitive:
        return params_to_prim(self.kinds[k], self.params[k], self.hints[k])

    def set_prim(self, k: int, prim: Primitive) -> None:
        self.kinds[k] = prim.kind
        self.params[k] = prim_to_params(prim)
        self.m[k] = np.zeros_like(self.params[k])
        self.v[k] = np.zeros_like(self.params[k])
        self.hints[k] = np.array(prim.c1) if isinstance(prim, Curve) else None

    def live(self) -> list:
        return [k for k, a in enumerate(self.alive) if a]


def _lr_scale(kind: str, params: np.ndarray) -> np.ndarray:
    # angles move endpoints by arm length times the step; keep that near one lr
    if kind == "line":
        return np.array([1.0, 1.0, 1.0 / max(params[3] / 2, 1.0), 1.0, 1.0])
    return np.array([1.0, 1.0, 1.0 / max(params[4], 1.0), 1.0 / max(params[5], 1.0), 1.0, 1.0, 1.0])


def adam_step(state: RefineState, grads: Sequence, config: RefineConfig) -> RefineState:
    """One bias-corrected Adam update of every live primitive, in place."""
    state.step += 1
    t = state.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    for k in state.live():
        g = np.asarray(grads[k], dtype=float)
        if not np.all(np.isfinite(g)):
            state.nonfinite += 1
            continue
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        mhat = state.m[k] / (1 - b1**t)
        vhat = state.v[k] / (1 - b2**t)
        lr = config.learning_rate * _lr_scale(state.kinds[k], state.params[k])
        p = state.params[k] - lr * mhat / (np.sqrt(vhat) + config.adam_eps)
        _, size = pos_size_indices(state.kinds[k])
        p[list(size)] = np.maximum(p[list(size)], 0.0)
        state.params[k] = p
        if state.kinds[k] == "qbezier":
            state.hints[k] = np.array(state.prim(k).c1)
    return state


def _extent(prim: Primitive) -> float:
    if isinstance(prim, Line):
        return prim.length
    p = prim_to_params(prim)
    return float(p[4] + p[5])


def _is_collapsed(prim: Primitive, config: RefineConfig) -> bool:
    return _extent(prim) < config.collapse_length or prim.width < config.collapse_width


# -- maintenance -----------------------------------------------------------------


def _axis(line: Line):
    d = np.subtract(line.p2, line.p1)
    L = float(np.hypot(*d))
    return (d / L if L > 0 else np.array([1.0, 0.0])), L


def _lined_up(a: Line, b: Line, config: RefineConfig) -> bool:
    da, la = _axis(a)
    db, lb = _axis(b)
    if la <= 0 or lb <= 0:
        return False
    if abs(float(da @ db)) < math.cos(config.join_angle):
        return False
    ref, base = (a, da) if la >= lb else (b, db)
    other = b if ref is a else a
    n = np.array([-base[1], base[0]])
    o = np.asarray(ref.p1)
    lateral = max(abs(float((np.asarray(p) - o) @ n)) for p in other.points)
    if lateral > max(a.width, b.width) / 2:
        return False
    ia = sorted(float((np.asarray(p) - o) @ base) for p in a.points)
    ib = sorted(float((np.asarray(p) - o) @ base) for p in b.points)
    gap = max(ia[0], ib[0]) - min(ia[1], ib[1])
    return gap <= config.join_overlap


def _join_groups(prims: Sequence[Primitive], config: RefineConfig):
    idx = [k for k, p in enumerate(prims) if isinstance(p, Line) and p.length > 0]
    parent = {k: k for k in idx}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for i_, i in enumerate(idx):
        for j in idx[i_ + 1 :]:
            if find(i) != find(j) and _lined_up(prims[i], prims[j], config):
                parent[find(j)] = find(i)
    groups = {}
    for k in idx:
        groups.setdefault(find(k), []).append(k)
    return [sorted(g) for g in groups.values() if len(g) > 1]


def join_lined_up(prims: Sequence[Primitive], config: RefineConfig = RefineConfig()) -> list:
    """Stretch the longest line of each lined-up group over the group; collapse the rest."""
    out = list(prims)
    for group in _join_groups(prims, config):
        keep = max(group, key=lambda k: (prims[k].length, -k))
        ref = prims[keep]
        d, _ = _axis(ref)
        o = np.asarray(ref.p1)
        proj = [float((np.asarray(p) - o) @ d) for k in group for p in prims[k].points]
        lo, hi = min(proj), max(proj)
        out[keep] = Line(o + lo * d, o + hi * d, ref.width)
        for k in group:
            if k != keep:
                mid = 0.5 * (np.asarray(prims[k].p1) + prims[k].p2)
                out[k] = Line(mid, mid, prims[k].width)
    return out


def uncovered_components(raster, union_q, config: RefineConfig = RefineConfig()):
    """Connected regions of ink (raster >= 0.5) left uncovered (union < 0.25), largest first."""
    target = (np.asarray(raster) >= 0.5) & (np.asarray(union_q) < 0.25)
    labels, n = ndimage.label(target, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    sizes = ndimage.sum_labels(target, labels, index=np.arange(1, n + 1))
    order = sorted(range(n), key=lambda i: (-sizes[i], i))
    return [labels == i + 1 for i in order if sizes[i] >= config.relocate_min_pixels]


def seed_segment(component: np.ndarray) -> Line:
    """2 px line at the component's centroid along its principal axis."""
    ys, xs = np.nonzero(component)
    pts = np.stack([xs + 0.5, ys + 0.5], axis=1)
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T) if len(pts) > 1 else np.eye(2)
    evals, evecs = np.linalg.eigh(cov)
    d = evecs[:, -1]
    extent = float(np.ptp((pts - c) @ d)) + 1.0
    width = float(np.clip(len(pts) / extent, 0.5, extent))
    return Line(c - d, c + d, width)


def _relocation_plan(prims, raster, union_q, config):
    comps = uncovered_components(raster, union_q, config)
    plan = {}
    it = iter(comps)
    for k, p in enumerate(prims):
        if _is_collapsed(p, config):
            comp = next(it, None)
            plan[k] = None if comp is None else seed_segment(comp)
    return plan


def relocate_collapsed(prims: Sequence[Primitive], raster, union_q, config: RefineConfig = RefineConfig()) -> list:
    """Re-seed collapsed primitives on uncovered ink; drop those with nowhere to go."""
    plan = _relocation_plan(prims, raster, union_q, config)
    out = []
    for k, p in enumerate(prims):
        if k not in plan:
            out.append(p)
        elif plan[k] is not None:
            out.append(plan[k])
    return out


# -- driver ----------------------------------------------------------------------


@dataclass
class RefineResult:
    primitives: list
    iterations: int
    grad_norm: float
    nonfinite: int
    history: list


def _clamp(prim: Primitive, width: int, height: int) -> Primitive:
    pts = np.clip(prim.points, [0, 0], [width, height])
    if isinstance(prim, Line):
        return Line(pts[0], pts[1], max(prim.width, 0.0))
    return Curve(pts[0], pts[1], pts[2], max(prim.width, 0.0))


def _maintain(state: RefineState, raster, union, config: RefineConfig) -> None:
    live = state.live()
    prims = [state.prim(k) for k in live]
    joined = join_lined_up(prims, config)
    for k, old, new in zip(live, prims, joined):
        if new is not old:
            state.set_prim(k, new)
    plan = _relocation_plan(joined, raster, union, config)
    for i, seed in plan.items():
        k = live[i]
        if seed is None:
            state.alive[k] = False
        else:
            state.set_prim(k, seed)


def refine_patch(raster, init_prims: Sequence[Primitive], config: RefineConfig = RefineConfig(), trace: bool = False):
    """Minimize the patch energy from ``init_prims``; returns a ``RefineResult``."""
    raster = np.asarray(getattr(raster, "ink", raster), dtype=float)
    height, width = raster.shape
    dims = (width, height)
    if not init_prims or not np.any(raster >= config.fill_threshold):
        return RefineResult([], 0, 0.0, 0, [])
    state = RefineState.from_prims([_clamp(p, width, height) for p in init_prims])
    history = []
    gnorm = math.inf
    it = 0
    while it < config.max_iters:
        live = state.live()
        if not live:
            break
        prims = [state.prim(k) for k in live]
        fields, _, union = mean_field(prims, raster, config)
        grads = [None] * len(state.params)
        for k, ff in zip(live, fields):
            grads[k] = frozen_gradient(state.params[k], ff, config, dims)
        finite = [grads[k] for k in live if np.all(np.isfinite(grads[k]))]
        gnorm = float(np.sqrt(sum(float(g @ g) for g in finite)))
        if trace:
            history.append([(state.kinds[k], state.params[k].copy()) for k in live])
        if gnorm < config.stop_grad_norm:
            break
        adam_step(state, grads, config)
        it += 1
        if it % config.maintenance_period == 0:
            prims = [state.prim(k) for k in state.live()]
            union = render_union(prims, dims, config.supersample)
            _maintain(state, raster, union, config)
    out = []
    for k in state.live():
        p = state.prim(k)
        if not _is_collapsed(p, config):
            out.append(p)
    return RefineResult(out, it, gnorm, state.nonfinite, history)
