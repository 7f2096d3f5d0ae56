"""Synthetic scenes, degradations, perturbations and the moment-based initializer.

All randomness comes from a counter-based Philox stream keyed by the seed, so a
seed fixes every generated value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geom import Curve, Line, Primitive, VectorScene, curve_midpoint
from .raster import GrayImage, render_scene


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    count_range: tuple = (3, 8)
    curve_fraction: float = 0.0
    length_range: tuple = (8.0, 48.0)
    width_range: tuple = (2.0, 4.0)
    # max sideways offset of a curve's control point, as a fraction of its chord
    bend_range: tuple = (0.15, 0.5)
    margin: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("count_range", "length_range", "width_range", "bend_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty")
        if self.count_range[0] < 0 or self.width_range[0] <= 0 or self.length_range[0] <= 0:
            raise ValueError("counts, lengths and widths must be positive")
        if not 0 <= self.curve_fraction <= 1:
            raise ValueError("curve_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DegradeSpec:
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    background_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be non-negative")
        if not 0 <= self.background_gain <= 1:
            raise ValueError("background_gain must lie in [0, 1]")


_MAX_TRIES = 10000


def _inside(points: np.ndarray, pad: float, width: int, height: int) -> bool:
    return bool(
        (points[:, 0] >= pad).all() and (points[:, 0] <= width - pad).all()
        and (points[:, 1] >= pad).all() and (points[:, 1] <= height - pad).all()
    )


def _sample_primitive(rng: np.random.Generator, spec: SceneSpec) -> Primitive:
    for _ in range(_MAX_TRIES):
        curve = rng.random() < spec.curve_fraction
        w = rng.uniform(*spec.width_range)
        length = rng.uniform(*spec.length_range)
        a = rng.uniform(0.0, 2 * math.pi)
        p = rng.uniform([0.0, 0.0], [spec.width, spec.height])
        d = np.array([math.cos(a), math.sin(a)])
        q = p + length * d
        pad = w / 2 + spec.margin
        if curve:
            bend = rng.uniform(*spec.bend_range) * rng.choice([-1.0, 1.0])
            c1 = 0.5 * (p + q) + bend * length * np.array([-d[1], d[0]])
            pts = np.array([p, c1, q])
            # the hull of the control points bounds the curve
            if _inside(pts, pad, spec.width, spec.height):
                c = Curve(p, c1, q, w)
                if not curve_midpoint(c).degenerate:
                    return c
        elif _inside(np.array([p, q]), pad, spec.width, spec.height):
            return Line(p, q, w)
    raise ValueError("could not place a primitive inside the canvas; loosen the ranges")


def gen_scene(spec: SceneSpec) -> VectorScene:
    rng = make_rng(spec.seed)
    n = int(rng.integers(spec.count_range[0], spec.count_range[1] + 1))
    return VectorScene(spec.width, spec.height, tuple(_sample_primitive(rng, spec) for _ in range(n)))


def degrade(img: GrayImage, spec: DegradeSpec) -> GrayImage:
    """Blur, lift the background, add Gaussian noise, clamp to [0, 1]."""
    ink = np.array(img.ink, dtype=float)
    rng = make_rng(spec.seed)
    if spec.blur_sigma > 0:
        ink = ndimage.gaussian_filter(ink, spec.blur_sigma, mode="nearest")
    if spec.background_gain > 0:
        ink = ink + spec.background_gain * (1.0 - ink)
    if spec.noise_sigma > 0:
        ink = ink + rng.normal(0.0, spec.noise_sigma, size=ink.shape)
    return GrayImage(np.clip(ink, 0.0, 1.0))


def perturb_scene(scene: VectorScene, jitter: float, width_jitter: float, seed: int) -> VectorScene:
    if jitter < 0 or width_jitter < 0:
        raise ValueError("jitter must be non-negative")
    rng = make_rng(seed)
    out = []
    for p in scene.primitives:
        pts = p.points + rng.uniform(-jitter, jitter, size=p.points.shape)
        w = p.width * (1.0 + rng.uniform(-width_jitter, width_jitter))
        out.append(Line(pts[0], pts[1], w) if isinstance(p, Line) else Curve(pts[0], pts[1], pts[2], w))
    return scene.replace(out)


def heuristic_init(patch, threshold: float = 0.5, min_pixels: int = 4) -> list:
    """One line per connected ink component, placed by its second moments."""
    ink = np.asarray(getattr(patch, "ink", patch), dtype=float)
    size = max(ink.shape)
    labels, n = ndimage.label(ink >= threshold, structure=np.ones((3, 3), dtype=int))
    out = []
    for lab in range(1, n + 1):
        ys, xs = np.nonzero(labels == lab)
        if len(xs) < min_pixels:
            continue
        pts = np.stack([xs + 0.5, ys + 0.5], axis=1)
        c = pts.mean(axis=0)
        r = pts - c
        _, vecs = np.linalg.eigh(r.T @ r / len(pts))
        d = vecs[:, -1]
        proj = r @ d
        length = float(proj.max() - proj.min())
        if length <= 0:
            continue
        width = float(np.clip(len(pts) / length, 0.5, size / 4))
        out.append(Line(c + proj.min() * d, c + proj.max() * d, width))
    return out


def render_pair(scene: VectorScene, degrade_spec: DegradeSpec, supersample: int = 16):
    """Clean render and its degraded copy."""
    clean = render_scene(scene, supersample)
    return clean, degrade(clean, degrade_spec)


def scenes(spec: SceneSpec, count: int) -> Sequence[VectorScene]:
    """``count`` scenes with consecutive seeds starting at ``spec.seed``."""
    return [gen_scene(replace(spec, seed=spec.seed + i)) for i in range(count)]
