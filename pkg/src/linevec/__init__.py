"""Vectorization of technical line drawings by charge-energy refinement and merging."""

from .geom import Curve, Line, VectorScene
from .kernels import BACKEND
from .merge import MergeConfig, merge_scene
from .metrics import MetricReport, evaluate
from .raster import GrayImage, load_image, render_scene, save_image
from .refine import RefineConfig, refine_patch

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Curve",
    "GrayImage",
    "Line",
    "MergeConfig",
    "MetricReport",
    "RefineConfig",
    "VectorScene",
    "evaluate",
    "load_image",
    "merge_scene",
    "refine_patch",
    "render_scene",
    "save_image",
]
