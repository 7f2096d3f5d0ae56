"""Grayscale image I/O, patch tiling, and coverage rendering of primitives.

Images are stored as ``ink`` arrays of shape ``(height, width)`` indexed
``[row, col]``, with 1.0 meaning fully inked.  On disk, dark ink on light paper:
``ink = 1 - gray / 255``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .geom import Curve, Primitive, VectorScene, flatten_curve


class ImageError(Exception):
    """Base class for image read/write failures."""


class ImageNotFoundError(ImageError, FileNotFoundError):
    pass


class MalformedImageError(ImageError, ValueError):
    pass


class UnsupportedDepthError(ImageError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    ink: np.ndarray

    def __post_init__(self):
        ink = np.asarray(self.ink, dtype=np.float64)
        if ink.ndim != 2:
            raise ValueError("ink must be a 2-D array")
        if ink.size and (ink.min() < 0 or ink.max() > 1):
            raise ValueError("ink values must lie in [0, 1]")
        ink.setflags(write=False)
        object.__setattr__(self, "ink", ink)

    @property
    def width(self) -> int:
        return self.ink.shape[1]

    @property
    def height(self) -> int:
        return self.ink.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def blank(cls, width: int, height: int) -> "GrayImage":
        return cls(np.zeros((height, width)))


# -- file I/O ------------------------------------------------------------------


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos : pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedImageError("truncated PGM header")
    return data[start:pos], pos


def _parse_pgm(data: bytes) -> np.ndarray:
    if data[:2] != b"P5":
        raise MalformedImageError("not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise MalformedImageError(f"bad PGM header field {tok!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedImageError("PGM dimensions must be positive")
    if maxval != 255:
        raise UnsupportedDepthError(f"only 8-bit PGM is supported (maxval={maxval})")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise MalformedImageError("PGM pixel data is truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def to_gray_bytes(img: GrayImage) -> np.ndarray:
    return np.round((1.0 - img.ink) * 255.0).astype(np.uint8)


def from_gray_bytes(gray: np.ndarray) -> GrayImage:
    return GrayImage(1.0 - gray.astype(np.float64) / 255.0)


def load_image(path) -> GrayImage:
    """Read an 8-bit PGM (P5) or, with Pillow installed, an 8-bit grayscale PNG."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise ImageNotFoundError(f"no such image: {path}") from None
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return from_gray_bytes(_read_png(path))
    return from_gray_bytes(_parse_pgm(data))


def _read_png(path: str) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - Pillow is optional
        raise UnsupportedDepthError("PNG support requires Pillow") from None
    with Image.open(path) as im:
        if im.mode not in ("L", "1", "P", "RGB", "RGBA", "LA"):
            raise UnsupportedDepthError(f"unsupported PNG mode {im.mode}")
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_image(img: GrayImage, path) -> None:
    path = os.fspath(path)
    gray = to_gray_bytes(img)
    if path.lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(gray, mode="L").save(path)
        return
    header = b"P5\n%d %d\n255\n" % (img.width, img.height)
    with open(path, "wb") as fh:
        fh.write(header + gray.tobytes())


def binarize(img: GrayImage, threshold: float = 0.5) -> GrayImage:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return GrayImage((img.ink >= threshold).astype(np.float64))


# -- patches -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Patch:
    origin: tuple[int, int]
    data: GrayImage


def _origins(extent: int, size: int, stride: int) -> list[int]:
    out = [0]
    while out[-1] + size < extent:
        out.append(out[-1] + stride)
    return out


def split_patches(img: GrayImage, patch_size: int = 64, stride: int | None = None) -> list[Patch]:
    """Tile ``img`` into ``patch_size`` squares, padding right/bottom with blank ink.

    Patches are ordered row by row.
    """
    stride = patch_size if stride is None else stride
    if patch_size < 8:
        raise ValueError("patch_size must be at least 8")
    if not 1 <= stride <= patch_size:
        raise ValueError("stride must lie in [1, patch_size]")
    xs = _origins(img.width, patch_size, stride)
    ys = _origins(img.height, patch_size, stride)
    padded = np.zeros((ys[-1] + patch_size, xs[-1] + patch_size))
    padded[: img.height, : img.width] = img.ink
    return [
        Patch((x, y), GrayImage(padded[y : y + patch_size, x : x + patch_size].copy()))
        for y in ys
        for x in xs
    ]


def assemble_patches(patches: Iterable[Patch]) -> GrayImage:
    """Max-blend patches back into the padded canvas they came from."""
    patches = list(patches)
    w = max(p.origin[0] + p.data.width for p in patches)
    h = max(p.origin[1] + p.data.height for p in patches)
    out = np.zeros((h, w))
    for p in patches:
        x, y = p.origin
        view = out[y : y + p.data.height, x : x + p.data.width]
        np.maximum(view, p.data.ink, out=view)
    return GrayImage(out)


# -- rendering -----------------------------------------------------------------

RENDER_FLATTEN_TOL = 0.02


def render_primitive(prim: Primitive, dims: tuple[int, int], supersample: int = 4) -> np.ndarray:
    """Coverage of the round-capped stroke of ``prim`` on a ``dims = (width, height)`` grid."""
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    width, height = dims
    if isinstance(prim, Curve):
        pts = flatten_curve(prim, RENDER_FLATTEN_TOL)
    else:
        pts = prim.points
    r = prim.width / 2.0
    lo = pts.min(axis=0) - r - 1
    hi = pts.max(axis=0) + r + 1
    x0, y0 = int(math.floor(lo[0])), int(math.floor(lo[1]))
    x1, y1 = int(math.ceil(hi[0])), int(math.ceil(hi[1]))
    return kernels.capsule_coverage(width, height, pts, r, supersample, x0, y0, x1, y1)


def render_union(prims: Sequence[Primitive], dims: tuple[int, int], supersample: int = 4) -> np.ndarray:
    width, height = dims
    out = np.zeros((height, width))
    for p in prims:
        np.maximum(out, render_primitive(p, dims, supersample), out=out)
    return out


def render_scene(scene: VectorScene, supersample: int = 16) -> GrayImage:
    return GrayImage(render_union(scene.primitives, (scene.width, scene.height), supersample))

