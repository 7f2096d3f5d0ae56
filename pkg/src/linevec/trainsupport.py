"""Target canonicalization and the confidence/parameter loss for primitive regressors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geom import Curve, Line, Primitive

N_MAX = 10
ROW_LEN = {"line": 5, "qbezier": 7}


@dataclass(frozen=True, eq=False)
class CanonicalTargets:
    params: np.ndarray  # (n_max, row_len), normalized by patch size
    confidences: np.ndarray  # (n_max,), 1 for real rows, 0 for placeholders
    kind: str = "line"

    def __eq__(self, other):
        return (
            isinstance(other, CanonicalTargets)
            and self.kind == other.kind
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.confidences, other.confidences)
        )

    @property
    def count(self) -> int:
        return int(self.confidences.sum())


def _row(prim: Primitive, patch_size: float) -> np.ndarray:
    pts = prim.points / patch_size
    ends = sorted([tuple(pts[0]), tuple(pts[-1])])
    if isinstance(prim, Line):
        row = [*ends[0], *ends[1]]
    else:
        row = [*ends[0], *pts[1], *ends[1]]
    return np.clip(np.array(row + [prim.width / patch_size]), 0.0, 1.0)


def canonicalize(prims: Sequence[Primitive], n_max: int = N_MAX, patch_size: float = 64, kind: str | None = None):
    """Normalized, endpoint-sorted, row-sorted targets padded with zero placeholders."""
    prims = list(prims)
    if len(prims) > n_max:
        raise ValueError(f"{len(prims)} primitives exceed n_max={n_max}")
    kinds = {p.kind for p in prims}
    if kind is None:
        kind = kinds.pop() if len(kinds) == 1 else ("line" if not kinds else None)
        if kind is None:
            raise ValueError("targets must hold a single primitive kind")
    elif kinds - {kind}:
        raise ValueError(f"expected only {kind} primitives")
    rows = sorted((tuple(_row(p, patch_size)) for p in prims))
    params = np.zeros((n_max, ROW_LEN[kind]))
    conf = np.zeros(n_max)
    if rows:
        params[: len(rows)] = rows
        conf[: len(rows)] = 1.0
    return CanonicalTargets(params, conf, kind)


def targets_to_prims(targets: CanonicalTargets, patch_size: float = 64) -> list:
    out = []
    for row, c in zip(targets.params, targets.confidences):
        if c < 0.5:
            continue
        p = row * patch_size
        if targets.kind == "line":
            out.append(Line(p[0:2], p[2:4], p[4]))
        else:
            out.append(Curve(p[0:2], p[2:4], p[4:6], p[6]))
    return out


def loss(pred_conf, target_conf, pred_params, target_params, lam: float = 0.5) -> float:
    """Mean over rows of BCE(confidence) + (1 - lam) * L1 + lam * squared L2 of the parameters."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    pc = np.asarray(pred_conf, dtype=float)
    tc = np.asarray(target_conf, dtype=float)
    pp = np.asarray(pred_params, dtype=float)
    tp = np.asarray(target_params, dtype=float)
    if pc.shape != tc.shape or pp.shape != tp.shape or pp.shape[0] != pc.shape[0]:
        raise ValueError("prediction and target shapes differ")
    diff = (pp - tp).reshape(len(pc), -1)
    loc = (1 - lam) * np.abs(diff).sum(axis=1) + lam * (diff * diff).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos, neg = -np.log(pc), -np.log1p(-pc)
        # exact 0/1 targets skip the other log, so p -> 1 on real rows stays finite
        cls = np.where(tc == 1, pos, np.where(tc == 0, neg, tc * pos + (1 - tc) * neg))
    return float(np.mean(cls + loc))
