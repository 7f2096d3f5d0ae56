"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--refine]
"""

import argparse
import math
import time

import numpy as np

from linevec import _kernels_py
from linevec.geom import Line
from linevec.raster import render_union

try:
    from linevec import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _cases(rng, n):
    out = []
    for _ in range(n):
        cx, cy = rng.uniform(8, 56, 2)
        t = rng.uniform(-math.pi / 2, math.pi / 2)
        out.append((cx, cy, math.cos(t), math.sin(t), rng.uniform(2, 20), rng.uniform(0.5, 2)))
    return out


def _time(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(mod, repeat, size=64):
    rng = np.random.default_rng(0)
    cases = _cases(rng, 50)
    weights = rng.random((3, size * size))
    pts = [np.array([[c[0] - c[4] * c[2], c[1] - c[4] * c[3]], [c[0] + c[4] * c[2], c[1] + c[4] * c[3]]]) for c in cases]
    raster = render_union([Line(p[0], p[1], 2 * c[5]) for p, c in zip(pts, cases[:8])], (size, size), 4)

    def moments_close():
        for cx, cy, c, s, hl, hw in cases:
            mod.rect_moments(size, size, cx, cy, c, s, hl, hw, 1.0, weights, 6.0)

    def moments_far():
        for cx, cy, c, s, hl, hw in cases:
            mod.rect_moments(size, size, cx, cy, c, s, hl, hw, 32.0, weights, 0.0)

    def coverage():
        for p, c in zip(pts, cases):
            lo = np.floor(p.min(axis=0) - c[5] - 1).astype(int)
            hi = np.ceil(p.max(axis=0) + c[5] + 1).astype(int)
            mod.capsule_coverage(size, size, p, c[5], 4, lo[0], lo[1], hi[0], hi[1])

    def scan():
        for cx, cy, c, s, hl, hw in cases[:8]:
            mod.line_scan(raster, cx, cy, c, s, 0.5, float(size), float(size) / 2, 0.5)

    return {
        "rect_moments close": _time(moments_close, repeat) / len(cases),
        "rect_moments far": _time(moments_far, repeat) / len(cases),
        "capsule_coverage": _time(coverage, repeat) / len(cases),
        "line_scan": _time(scan, repeat) / 8,
    }


def bench_refine():
    import os
    import subprocess
    import sys

    code = (
        "import time\n"
        "from linevec.synth import SceneSpec, gen_scene, perturb_scene\n"
        "from linevec.raster import render_scene\n"
        "from linevec.refine import refine_patch, RefineConfig\n"
        "sc = gen_scene(SceneSpec(seed=3)); init = perturb_scene(sc, 2.0, 0.2, seed=4)\n"
        "img = render_scene(sc); t0 = time.perf_counter()\n"
        "refine_patch(img.ink, list(init.primitives), RefineConfig(max_iters=100))\n"
        "print(time.perf_counter() - t0)\n"
    )
    out = {}
    for name, env in (("cython", {}), ("python", {"LINEVEC_PURE_PYTHON": "1"})):
        res = subprocess.run([sys.executable, "-c", code], env={**os.environ, **env}, capture_output=True, text=True)
        out[name] = float(res.stdout.strip())
    return out


def main():
    parser = argparse.ArgumentParser(description="kernel backend benchmark")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--refine", action="store_true", help="also time 100 refinement iterations per backend")
    args = parser.parse_args()
    py = bench(_kernels_py, args.repeat)
    cy = bench(_kernels, args.repeat) if _kernels is not None else None
    print(f"{'kernel':<22}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, t in py.items():
        if cy is None:
            print(f"{name:<22}{t * 1e3:>12.3f}{'n/a':>12}{'':>10}")
        else:
            print(f"{name:<22}{t * 1e3:>12.3f}{cy[name] * 1e3:>12.3f}{t / cy[name]:>9.1f}x")
    if args.refine:
        r = bench_refine()
        print(f"{'refine 100 iters':<22}{r['python'] * 1e3:>12.0f}{r['cython'] * 1e3:>12.0f}{r['python'] / r['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
