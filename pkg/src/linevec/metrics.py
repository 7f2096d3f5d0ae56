"""Raster and vector comparison metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .geom import VectorScene
from .raster import GrayImage, render_scene

EVAL_SUPERSAMPLE = 16


class EmptySetError(ValueError):
    """A distance metric was asked about an image with no filled pixels."""


def _ink(img) -> np.ndarray:
    return np.asarray(getattr(img, "ink", img), dtype=float)


def _pair(a, b):
    a, b = _ink(a), _ink(b)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape[::-1]} vs {b.shape[::-1]}")
    return a, b


def iou(a, b, threshold: float = 0.5) -> float:
    a, b = _pair(a, b)
    A, B = a >= threshold, b >= threshold
    union = int(np.count_nonzero(A | B))
    if union == 0:
        return 1.0
    return np.count_nonzero(A & B) / union


def filled_points(img, threshold: float = 0.5) -> np.ndarray:
    """Centers ``(x, y)`` of pixels at or above ``threshold``."""
    ys, xs = np.nonzero(_ink(img) >= threshold)
    return np.stack([xs + 0.5, ys + 0.5], axis=1)


def _nearest(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    if len(src) == 0 or len(dst) == 0:
        raise EmptySetError("distance to an empty point set")
    d, _ = cKDTree(dst).query(src, k=1)
    return d


def point_hausdorff(P: np.ndarray, Q: np.ndarray) -> float:
    return float(max(_nearest(P, Q).max(), _nearest(Q, P).max()))


def point_mean_distance(P: np.ndarray, Q: np.ndarray) -> float:
    return float(0.5 * (_nearest(P, Q).mean() + _nearest(Q, P).mean()))


def hausdorff(a, b, threshold: float = 0.5) -> float:
    a, b = _pair(a, b)
    return point_hausdorff(filled_points(a, threshold), filled_points(b, threshold))


def mean_distance(a, b, threshold: float = 0.5) -> float:
    a, b = _pair(a, b)
    return point_mean_distance(filled_points(a, threshold), filled_points(b, threshold))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio for peak 1.0; ``math.inf`` for identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass(frozen=True)
class MetricReport:
    iou: float
    d_h: float
    d_m: float
    prim_count: int
    psnr: Optional[float] = None

    def record(self) -> str:
        s = f"iou={self.iou:.3f} d_h={self.d_h:.2f} d_m={self.d_m:.2f} p={self.prim_count}"
        if self.psnr is not None:
            s += f" psnr={self.psnr:.2f}"
        return s

    def as_text(self) -> str:
        rows = [("iou", f"{self.iou:.6f}"), ("d_h", f"{self.d_h:.6f}"), ("d_m", f"{self.d_m:.6f}"),
                ("prim_count", str(self.prim_count))]
        if self.psnr is not None:
            rows.append(("psnr", f"{self.psnr:.6f}"))
        return "".join(f"{k}: {v}\n" for k, v in rows)


def _as_image(x, supersample: int) -> np.ndarray:
    if isinstance(x, VectorScene):
        return render_scene(x, supersample).ink
    return _ink(x)


def evaluate(
    scene: Union[VectorScene, GrayImage],
    reference: Union[VectorScene, GrayImage],
    supersample: int = EVAL_SUPERSAMPLE,
    threshold: float = 0.5,
    with_psnr: bool = False,
) -> MetricReport:
    """All metrics of ``scene`` against ``reference``; vector inputs are rendered first.

    Distance metrics raise ``EmptySetError`` when either side is blank.
    """
    a = _as_image(scene, supersample)
    b = _as_image(reference, supersample)
    count = len(scene) if isinstance(scene, VectorScene) else 0
    return MetricReport(
        iou=iou(a, b, threshold),
        d_h=hausdorff(a, b, threshold),
        d_m=mean_distance(a, b, threshold),
        prim_count=count,
        psnr=psnr(a, b) if with_psnr else None,
    )
