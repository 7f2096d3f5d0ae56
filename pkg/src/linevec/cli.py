"""Command line front end: vectorize, refine, merge, metrics, render, synth.

Exit codes: 0 success, 2 unreadable input, 3 invalid scene file, 4 bad config,
5 metric undefined (blank image).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geom import Curve, Line, Primitive, VectorScene, curve_midpoint, primitive_from_points
from .merge import MergeConfig, merge_scene
from .metrics import EmptySetError, evaluate
from .raster import (
    GrayImage,
    ImageError,
    binarize,
    load_image,
    render_scene,
    render_union,
    save_image,
    split_patches,
)
from .refine import RefineConfig, refine_patch, uncovered_components
from .synth import DegradeSpec, SceneSpec, gen_scene, heuristic_init, render_pair

EXIT_INPUT = 2
EXIT_SCENE = 3
EXIT_CONFIG = 4
EXIT_METRIC = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class PipelineConfig:
    patch_size: int = 64
    stride: Optional[int] = None
    threshold: float = 0.5
    workers: int = 1
    seed: int = 0
    render_supersample: int = 16
    # extra seeding passes on uncovered ink after the moment initialization
    reseed_rounds: int = 2
    refine: RefineConfig = field(default_factory=RefineConfig)
    merge: MergeConfig = field(default_factory=MergeConfig)
    synth: SceneSpec = field(default_factory=SceneSpec)
    degrade: DegradeSpec = field(default_factory=DegradeSpec)

    def __post_init__(self):
        if self.patch_size < 8:
            raise ValueError("patch_size must be at least 8")
        if self.stride is not None and not 1 <= self.stride <= self.patch_size:
            raise ValueError("stride must lie in [1, patch_size]")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.reseed_rounds < 0:
            raise ValueError("reseed_rounds must be >= 0")
        if self.render_supersample < 1:
            raise ValueError("render_supersample must be >= 1")


# -- config file -------------------------------------------------------------------

# fields whose default is None, with the type of a set value
_OPTIONAL = {"stride": int, "link_max_gap": float, "link_max_offset": float}


def _sections(cfg, name: str = "pipeline", out=None) -> dict:
    """``{section: {key: value}}``; nested config objects get a section of their own."""
    out = {} if out is None else out
    flat = out.setdefault(name, {})
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            _sections(value, f.name, out)
        elif name == "pipeline" or f.name != "seed":
            flat[f.name] = value
    return out


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    return repr(v)


def _parse_value(key: str, text: str, current):
    text = text.strip()
    if current is None or key in _OPTIONAL:
        if text.lower() in ("none", ""):
            return None
        return _OPTIONAL.get(key, float)(text)
    if isinstance(current, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(current, tuple):
        parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
        if len(parts) != len(current):
            raise ValueError(f"{key}: expected {len(current)} comma-separated values")
        return tuple(_parse_value(key, p, c) for c, p in zip(current, parts))
    if isinstance(current, int):
        value = float(text)
        if value != int(value):
            raise ValueError(f"{key}: expected an integer, got {text!r}")
        return int(value)
    return float(text)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for section, values in _sections(cfg).items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_format_value(v)}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)


def _resolve(key: str, layout: dict):
    """Section holding ``key``, which may be written ``section.key``."""
    if "." in key:
        section, name = key.split(".", 1)
        if section not in layout or name not in layout[section]:
            raise ValueError(f"unknown config key {key!r}")
        return section, name
    hits = [s for s, values in layout.items() if key in values]
    if not hits:
        raise ValueError(f"unknown config key {key!r}")
    if len(hits) > 1:
        raise ValueError(f"ambiguous config key {key!r}; qualify it as one of " + ", ".join(f"{s}.{key}" for s in hits))
    return hits[0], key


def _rebuild(cfg, name: str, updates: dict):
    changes = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            changes[f.name] = _rebuild(value, f.name, updates)
        elif f.name in updates.get(name, {}):
            changes[f.name] = updates[name][f.name]
    return dataclasses.replace(cfg, **changes)


def apply_settings(cfg: PipelineConfig, pairs: Sequence[tuple]) -> PipelineConfig:
    """Apply ``(key, text)`` pairs; keys are bare names or ``section.name``."""
    layout = _sections(cfg)
    updates = {}
    for key, text in pairs:
        section, name = _resolve(key.strip().replace("-", "_"), layout)
        updates.setdefault(section, {})[name] = _parse_value(name, text, layout[section][name])
    return _with_seed(_rebuild(cfg, "pipeline", updates))


def _with_seed(cfg: PipelineConfig) -> PipelineConfig:
    # the global seed drives both random streams, offset so they differ
    return dataclasses.replace(
        cfg,
        synth=dataclasses.replace(cfg.synth, seed=cfg.seed),
        degrade=dataclasses.replace(cfg.degrade, seed=cfg.seed + 1),
    )


def read_config_file(path: str) -> list:
    """``(key, value)`` pairs from a sectioned or flat ``key = value`` file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ValueError(f"cannot read config {path}: {e.strerror}") from None
    parser = configparser.ConfigParser(default_section="__defaults__", interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[__flat__]\n" + text)
    except configparser.Error as e:
        raise ValueError(f"malformed config {path}: {e.message.splitlines()[0]}") from None
    pairs = []
    for section in parser.sections():
        for key, value in parser.items(section):
            pairs.append((key if section == "__flat__" else f"{section}.{key}", value))
    return pairs


def _split_overrides(extra: Sequence[str]) -> list:
    pairs = []
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise ValueError(f"unrecognized argument {arg!r}; overrides take the form --key=value")
        key, value = arg[2:].split("=", 1)
        pairs.append((key, value))
    return pairs


def load_config(config_path: Optional[str], overrides: Sequence[str] = (), seed=None, workers=None) -> PipelineConfig:
    try:
        cfg = _with_seed(PipelineConfig())
        if config_path:
            cfg = apply_settings(cfg, read_config_file(config_path))
        cfg = apply_settings(cfg, _split_overrides(overrides))
        if seed is not None:
            cfg = _with_seed(dataclasses.replace(cfg, seed=seed))
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=workers)
    except (ValueError, TypeError) as e:
        raise CliError(f"bad config: {e}", EXIT_CONFIG) from None
    return cfg


# -- scene files -------------------------------------------------------------------

_NPOINTS = {"line": 2, "qbezier": 3}


def _fmt(x: float) -> float:
    return float(f"{x:.9g}")


def scene_to_dict(scene: VectorScene) -> dict:
    return {
        "canvas": [int(scene.width), int(scene.height)],
        "primitives": [
            {"kind": p.kind, "points": [[_fmt(x), _fmt(y)] for x, y in p.points], "width": _fmt(p.width)}
            for p in scene.primitives
        ],
    }


def scene_to_json(scene: VectorScene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True) + "\n"


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def scene_from_dict(doc) -> VectorScene:
    """Validate a scene document; raises ``ValueError`` naming the first problem."""
    if not isinstance(doc, dict) or set(doc) != {"canvas", "primitives"}:
        raise ValueError("scene must be an object with exactly 'canvas' and 'primitives'")
    canvas = doc["canvas"]
    if (
        not isinstance(canvas, list) or len(canvas) != 2
        or not all(_number(v) and v == int(v) and v > 0 for v in canvas)
    ):
        raise ValueError("canvas must be [width, height] with positive integers")
    if not isinstance(doc["primitives"], list):
        raise ValueError("primitives must be a list")
    prims = []
    for i, rec in enumerate(doc["primitives"]):
        where = f"primitive {i}"
        if not isinstance(rec, dict) or set(rec) != {"kind", "points", "width"}:
            raise ValueError(f"{where}: expected keys kind, points, width")
        kind = rec["kind"]
        if kind not in _NPOINTS:
            raise ValueError(f"{where}: unknown kind {kind!r}")
        pts = rec["points"]
        if not isinstance(pts, list) or len(pts) != _NPOINTS[kind]:
            raise ValueError(f"{where}: {kind} needs {_NPOINTS[kind]} points")
        for p in pts:
            if not isinstance(p, list) or len(p) != 2 or not all(_number(v) for v in p):
                raise ValueError(f"{where}: points must be finite [x, y] pairs")
        if not _number(rec["width"]) or rec["width"] <= 0:
            raise ValueError(f"{where}: width must be a finite positive number")
        prims.append(primitive_from_points(kind, pts, rec["width"]))
    return VectorScene(int(canvas[0]), int(canvas[1]), tuple(prims))


def read_scene(path: str) -> VectorScene:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_INPUT) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})", EXIT_SCENE) from None
    try:
        return scene_from_dict(doc)
    except ValueError as e:
        raise CliError(f"{path}: {e}", EXIT_SCENE) from None


def read_image(path: str) -> GrayImage:
    try:
        return load_image(path)
    except (ImageError, OSError) as e:
        raise CliError(f"cannot read image {path}: {e}", EXIT_INPUT) from None


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def scene_to_svg(scene: VectorScene) -> str:
    w, h = scene.width, scene.height
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
    ]
    for p in scene.primitives:
        pts = [f"{_fmt(x):.9g} {_fmt(y):.9g}" for x, y in p.points]
        d = f"M {pts[0]} L {pts[1]}" if isinstance(p, Line) else f"M {pts[0]} Q {pts[1]} {pts[2]}"
        out.append(
            f'<path d="{d}" fill="none" stroke="black" stroke-width="{_fmt(p.width):.9g}" stroke-linecap="round"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- pipeline ----------------------------------------------------------------------


def _clip_segment(p, q, lo, hi):
    """Part of segment ``p -> q`` inside the box ``[lo, hi]``, or None."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = q - p
    t0, t1 = 0.0, 1.0
    for axis in (0, 1):
        for bound, sign in ((lo[axis], -1.0), (hi[axis], 1.0)):
            num = sign * (bound - p[axis])
            den = sign * d[axis]
            if den == 0:
                if num < 0:
                    return None
                continue
            t = num / den
            if den < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    if t1 <= t0:
        return None
    return p + t0 * d, p + t1 * d


def patch_init(scene: VectorScene, origin, size: int) -> list:
    """Primitives of ``scene`` falling in the patch, in patch coordinates."""
    x0, y0 = origin
    lo, hi = (x0, y0), (x0 + size, y0 + size)
    out = []
    for p in scene.primitives:
        if isinstance(p, Line):
            seg = _clip_segment(p.p1, p.p2, lo, hi)
            if seg is not None and math.dist(seg[0], seg[1]) > 0:
                out.append(Line(seg[0], seg[1], p.width).translated(-x0, -y0))
        else:
            m = curve_midpoint(p).point
            if lo[0] <= m[0] < hi[0] and lo[1] <= m[1] < hi[1]:
                out.append(p.translated(-x0, -y0))
    return out


def _refine_job(job):
    ink, init, config, rounds = job
    prims = refine_patch(ink, init, config).primitives
    # the moment initializer gives one line per component, too few at crossings:
    # seed extra lines on ink still left uncovered and refine again
    for _ in range(rounds):
        union = render_union(prims, (ink.shape[1], ink.shape[0]), config.supersample)
        comps = uncovered_components(ink, union, config)
        if not comps:
            break
        seeds = heuristic_init(np.logical_or.reduce(comps).astype(float), 0.5, config.relocate_min_pixels)
        if not seeds:
            break
        prims = refine_patch(ink, prims + seeds, config).primitives
    return prims


def _run_jobs(jobs: list, workers: int) -> list:
    # map keeps submission order, so results do not depend on the pool size
    if workers <= 1 or len(jobs) <= 1:
        return [_refine_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_refine_job, jobs))


def refine_image(img: GrayImage, cfg: PipelineConfig, init: Optional[VectorScene] = None) -> VectorScene:
    """Binarize, tile, initialize, refine each patch, and gather into one global scene."""
    bw = binarize(img, cfg.threshold)
    patches = split_patches(bw, cfg.patch_size, cfg.stride)
    jobs = []
    for patch in patches:
        if init is not None:
            start, rounds = patch_init(init, patch.origin, cfg.patch_size), 0
        else:
            start, rounds = heuristic_init(patch.data, cfg.threshold), cfg.reseed_rounds
        jobs.append((patch.data.ink, start, cfg.refine, rounds))
    results = _run_jobs(jobs, cfg.workers)
    prims = []
    for patch, found in zip(patches, results):
        x0, y0 = patch.origin
        prims.extend(p.translated(x0, y0) for p in found if p.width > 0)
    return VectorScene(img.width, img.height, tuple(prims))


def vectorize(img: GrayImage, cfg: PipelineConfig, init: Optional[VectorScene] = None) -> VectorScene:
    return merge_scene(refine_image(img, cfg, init), cfg.merge)


def _check_canvas(scene: VectorScene, img: GrayImage, path: str) -> None:
    if (scene.width, scene.height) != img.dims:
        raise CliError(
            f"{path}: canvas {scene.width}x{scene.height} does not match image {img.width}x{img.height}", EXIT_SCENE
        )


# -- subcommands -------------------------------------------------------------------


def _svg_path(args) -> str:
    if args.svg:
        return args.svg
    if args.output == "-":
        return ""
    return os.path.splitext(args.output)[0] + ".svg"


def cmd_vectorize(args, cfg: PipelineConfig) -> int:
    img = read_image(args.input)
    init = None
    if args.init:
        init = read_scene(args.init)
        _check_canvas(init, img, args.init)
    scene = vectorize(img, cfg, init)
    _write(args.output, scene_to_json(scene))
    svg = _svg_path(args)
    if svg:
        _write(svg, scene_to_svg(scene))
    return 0


def cmd_refine(args, cfg: PipelineConfig) -> int:
    img = read_image(args.image)
    init = read_scene(args.scene)
    _check_canvas(init, img, args.scene)
    _write(args.output, scene_to_json(refine_image(img, cfg, init)))
    return 0


def cmd_merge(args, cfg: PipelineConfig) -> int:
    scene = read_scene(args.scene)
    _write(args.output, scene_to_json(merge_scene(scene, cfg.merge)))
    return 0


def _read_either(path: str):
    if path.lower().endswith(".json"):
        return read_scene(path)
    return read_image(path)


def cmd_metrics(args, cfg: PipelineConfig) -> int:
    a = _read_either(args.candidate)
    b = _read_either(args.reference)
    try:
        report = evaluate(a, b, cfg.render_supersample, cfg.threshold, with_psnr=args.psnr)
    except EmptySetError as e:
        raise CliError(f"metric undefined: {e}", EXIT_METRIC) from None
    except ValueError as e:
        raise CliError(str(e), EXIT_INPUT) from None
    _write(args.output, report.as_text() if args.text else report.record() + "\n")
    return 0


def cmd_render(args, cfg: PipelineConfig) -> int:
    scene = read_scene(args.scene)
    save_image(render_scene(scene, cfg.render_supersample), args.output)
    return 0


def cmd_synth(args, cfg: PipelineConfig) -> int:
    scene = gen_scene(cfg.synth)
    clean, degraded = render_pair(scene, cfg.degrade, cfg.render_supersample)
    prefix = args.prefix
    _write(prefix + ".json", scene_to_json(scene))
    save_image(clean, prefix + "_clean.pgm")
    save_image(degraded, prefix + "_degraded.pgm")
    return 0


def cmd_config(args, cfg: PipelineConfig) -> int:
    _write(args.output, dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linevec",
        allow_abbrev=False,
        description="Vectorize line drawings by charge-energy refinement and merging.",
        epilog="Any config key can be overridden with --key=value or --section.key=value.",
    )
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", metavar="<path>", help="sectioned or flat key = value config file")
    common.add_argument("--seed", type=int, help="global seed for the random streams")
    common.add_argument("--workers", type=int, help="worker processes for per-patch refinement")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vectorize", parents=[common], allow_abbrev=False, help="image -> vector scene (JSON + SVG)")
    p.add_argument("input", help="PGM or PNG drawing")
    p.add_argument("-o", "--output", required=True, help="scene JSON path, or - for stdout")
    p.add_argument("--svg", help="SVG path (default: output with .svg suffix)")
    p.add_argument("--init", help="scene JSON used instead of the moment-based initialization")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("refine", parents=[common], allow_abbrev=False, help="refine a scene against an image")
    p.add_argument("scene")
    p.add_argument("image")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("merge", parents=[common], allow_abbrev=False, help="merge the primitives of a scene")
    p.add_argument("scene")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("metrics", parents=[common], allow_abbrev=False, help="compare two scenes or images")
    p.add_argument("candidate", help="scene JSON or image")
    p.add_argument("reference", help="scene JSON or image")
    p.add_argument("--psnr", action="store_true", help="also report PSNR")
    p.add_argument("--text", action="store_true", help="one key per line instead of a single record")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("render", parents=[common], allow_abbrev=False, help="rasterize a scene to PGM or PNG")
    p.add_argument("scene")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", parents=[common], allow_abbrev=False, help="generate a scene and its clean and degraded renders")
    p.add_argument("prefix", help="writes PREFIX.json, PREFIX_clean.pgm and PREFIX_degraded.pgm")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("config", parents=[common], allow_abbrev=False, help="print the effective config")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, extra, args.seed, args.workers)
        return args.func(args, cfg)
    except CliError as e:
        print(f"linevec: error: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"linevec: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
