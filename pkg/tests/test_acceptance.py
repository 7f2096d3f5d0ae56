"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from _oracles import brute_hausdorff, brute_mean_distance, fd_gradient, quad_line_interaction, random_config
from linevec.cli import main, patch_init
from linevec.energy import (
    EnergyConfig,
    PotentialParams,
    charges_rdn,
    curve_cell_interaction,
    frozen_gradient,
    gradient,
    line_cell_interaction,
    mean_field,
    prim_to_params,
)
from linevec.geom import Curve, Line, VectorScene, segment_distance, split_bezier
from linevec.merge import merge_curve_pair, merge_lines, merge_scene
from linevec.metrics import filled_points, hausdorff, iou, mean_distance, psnr
from linevec.raster import render_primitive, render_scene, render_union
from linevec.refine import RefineConfig, refine_patch
from linevec.synth import SceneSpec, gen_scene, perturb_scene
from linevec.trainsupport import canonicalize, loss, targets_to_prims


@pytest.fixture
def report(capsys):
    def emit(num, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} {name}: {detail}", flush=True)
        assert ok, detail

    return emit


def test_c1_gradient_oracle(report):
    rng = np.random.default_rng(2024)
    cfg = EnergyConfig()
    t0 = time.perf_counter()
    worst = 0.0
    bad = n = 0
    for _ in range(100):
        raster, prims = random_config(rng)
        fields, _, _ = mean_field(prims, raster, cfg)
        for p, ff in zip(prims, fields):
            x = prim_to_params(p)
            g = frozen_gradient(x, ff, cfg, raster.shape)
            fd = fd_gradient(x, ff, cfg, raster.shape)
            big = np.abs(fd) >= 1e-8
            rel = np.abs(g - fd)[big] / np.abs(fd)[big]
            small = np.abs(g - fd)[~big]
            bad += int((rel > 1e-4).sum() + (small > 1e-8).sum())
            worst = max(worst, rel.max(initial=0.0))
            n += len(x)
    dt = time.perf_counter() - t0
    report(1, "gradient oracle", bad == 0 and dt <= 120,
           f"{n} components, {bad} out of tolerance, worst rel {worst:.2e}, {dt:.1f} s")


def test_c2_integral_oracle(report):
    rng = np.random.default_rng(99)
    params = PotentialParams()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        line = Line(rng.uniform(0, 20, 2), rng.uniform(0, 20, 2), rng.uniform(0.5, 4))
        q = rng.uniform(-4, 24, 2)
        ref = quad_line_interaction(line, q, params)
        worst = max(worst, abs(line_cell_interaction(line, q, params) - ref) / abs(ref))
    tol = EnergyConfig().flatten_tol
    worst_curve = 0.0
    for _ in range(50):
        c = Curve(*rng.uniform(0, 20, (3, 2)), rng.uniform(1, 3))
        q = 0.5 * (np.asarray(c.c0) + c.c1) + rng.uniform(-2, 2, 2)
        a = curve_cell_interaction(c, q, params, tol)
        b = curve_cell_interaction(c, q, params, tol / 2)
        worst_curve = max(worst_curve, abs(a - b) / abs(b))
    dt = time.perf_counter() - t0
    report(2, "integral oracle", worst <= 1e-6 and worst_curve < 0.005 and dt <= 60,
           f"line worst rel {worst:.2e}, curve halving change {100 * worst_curve:.3f}%, {dt:.1f} s")


def test_c3_refinement_recovery(report):
    cfg = RefineConfig()
    t0 = time.perf_counter()
    before, after, dms = [], [], []
    for i in range(100):
        sc = gen_scene(SceneSpec(seed=1000 + i))
        init = perturb_scene(sc, 2.0, 0.2, seed=1000 + i + 10**6)
        tgt = render_scene(sc, 16)
        before.append(iou(render_scene(init, 16), tgt))
        r = refine_patch(tgt.ink, list(init.primitives), cfg)
        out = render_union(r.primitives, (sc.height, sc.width), 16)
        after.append(iou(out, tgt))
        dms.append(mean_distance(out, tgt))
    dt = time.perf_counter() - t0
    frac = float(np.mean(np.array(after) >= 0.9))
    ok = np.mean(before) <= 0.85 and frac >= 0.9 and np.mean(dms) <= 0.5 and dt <= 600
    report(3, "refinement recovery", ok,
           f"IoU before {np.mean(before):.3f}, after {np.mean(after):.3f}, "
           f"{100 * frac:.0f}% scenes >= 0.90, mean d_M {np.mean(dms):.3f}, {dt:.0f} s")


def _centerline_distance(a, b, n=200):
    def one_way(p, q):
        pts = np.asarray(p.p1) + np.linspace(0, 1, n)[:, None] * np.subtract(p.p2, p.p1)
        return np.mean([segment_distance(x, x, q.p1, q.p2) for x in pts])

    return 0.5 * (one_way(a, b) + one_way(b, a))


def test_c4_collapse_and_attraction(report):
    cfg = RefineConfig()
    r = refine_patch(np.zeros((64, 64)), [Line((20, 30), (30, 30), 2)], cfg, trace=True)
    final_len = r.history[-1][0][1][3] if r.history else 0.0
    collapsed = r.primitives == [] and final_len < 1.0
    worst = 0.0
    for truth in (Line((16, 32), (48, 32), 3), Line((12, 20), (50, 44), 2.5)):
        ras = render_primitive(truth, (64, 64), 16)
        d = np.subtract(truth.p2, truth.p1)
        n = np.array([-d[1], d[0]]) / np.hypot(*d) * 3.0
        (out,) = refine_patch(ras, [Line(truth.p1 + n, truth.p2 + n, truth.width)], cfg).primitives
        worst = max(worst, _centerline_distance(out, truth))
    truth = Line((16, 32), (48, 32), 3)
    gnorm = float(np.linalg.norm(gradient(0, [truth], render_primitive(truth, (64, 64), cfg.supersample), cfg)))
    report(4, "collapse/attraction", collapsed and worst <= 0.5 and gnorm < 1e-3,
           f"blank-patch final length {final_len:.3f}, offset recovery {worst:.3f} px, fixed-point |g| {gnorm:.1e}")


def test_c5_rdn_collinear_vs_perpendicular(report):
    dims = (32, 32)
    a, b = Line((4, 16), (28, 16), 3), Line((16, 4), (16, 28), 3)
    qa, qb = render_primitive(a, dims), render_primitive(b, dims)
    col = charges_rdn(0, [a, a], [qa, qa]).sum()
    perp = charges_rdn(0, [a, b], [qa, qb]).sum()
    ratio = col / perp if perp > 0 else math.inf
    report(5, "E_rdn collinear vs perpendicular", ratio >= 1e3, f"ratio {ratio:.3g}")


def _cut_on_grid(sc, size=64):
    pieces = []
    for oy in range(0, sc.height, size):
        for ox in range(0, sc.width, size):
            pieces += [p.translated(ox, oy) for p in patch_init(sc, (ox, oy), size)]
    return sc.replace(pieces)


def test_c6_merging(report):
    chains_ok = True
    for k in (2, 3, 5):
        segs = [Line((4 + 10 * i, 20), (14 + 10 * i, 20), 2) for i in range(k)]
        out = merge_lines(VectorScene(64, 64, tuple(segs))).primitives
        ends = np.sort(out[0].points, axis=0) if len(out) == 1 else None
        chains_ok &= ends is not None and np.allclose(ends, [[4, 20], [4 + 10 * k, 20]], rtol=0, atol=1e-9)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        while True:
            pts = rng.uniform(5, 55, (3, 2))
            chord = np.hypot(*(pts[2] - pts[0]))
            if chord > 15 and np.hypot(*(pts[1] - 0.5 * (pts[0] + pts[2]))) < 0.6 * chord:
                break
        c = Curve(*pts, rng.uniform(1, 3))
        m = merge_curve_pair(*split_bezier(c, rng.uniform(0.3, 0.7)))
        err = math.inf if m is None else min(np.abs(m.points - c.points).max(), np.abs(m.points[::-1] - c.points).max())
        worst = max(worst, err)
    # a 256x256 scene cut on the 64 px patch grid, jittered like refined output
    sc = gen_scene(SceneSpec(width=256, height=256, count_range=(60, 60), length_range=(40, 200), seed=6))
    cut = perturb_scene(_cut_on_grid(sc), 0.3, 0.05, seed=7)
    merged = merge_scene(cut)
    ref = render_scene(sc, 16)
    i0, i1 = iou(render_scene(cut, 16), ref), iou(render_scene(merged, 16), ref)
    reduction = 1 - len(merged) / len(cut)
    drop = (i0 - i1) / i0
    ok = chains_ok and worst < 0.5 and reduction >= 0.3 and drop <= 0.05
    report(6, "merging", ok,
           f"chains {'ok' if chains_ok else 'bad'}, remerge worst {worst:.3f} px, "
           f"#P {len(cut)} -> {len(merged)} (-{100 * reduction:.0f}%), IoU {i0:.3f} -> {i1:.3f} (drop {100 * drop:.1f}%)")


def test_c7_metrics_oracles(report):
    rng = np.random.default_rng(77)
    exact = True
    for _ in range(50):
        size = 200
        A = rng.random((size, size)) < rng.integers(1, 1000) / size**2
        B = rng.random((size, size)) < rng.integers(1, 1000) / size**2
        A[rng.integers(size), rng.integers(size)] = True
        B[rng.integers(size), rng.integers(size)] = True
        P, Q = filled_points(A), filled_points(B)
        exact &= hausdorff(A, B) == brute_hausdorff(P, Q)
        exact &= abs(mean_distance(A, B) - brute_mean_distance(P, Q)) <= 1e-12 * max(1.0, brute_mean_distance(P, Q))
    a = np.zeros((8, 8))
    a[2:4, 0:4] = 1
    c = np.zeros((8, 8))
    c[2:4, 2:6] = 1
    half = iou(a, c)
    u = np.full((10, 10), 0.3)
    db = psnr(u, u + 0.1)
    ok = exact and half == pytest.approx(1 / 3, abs=1e-15) and db == pytest.approx(20.0, abs=1e-9)
    report(7, "metrics oracles", ok, f"brute force {'exact' if exact else 'mismatch'}, half-overlap {half:.6f}, psnr {db:.6f} dB")


def test_c8_loss_properties(report):
    rng = np.random.default_rng(8)
    prims = [Line(*rng.uniform(0, 64, (2, 2)), rng.uniform(1, 4)) for _ in range(6)]
    t = canonicalize(prims)
    eps = 1e-12
    limit = loss(np.where(t.confidences == 1, 1 - eps, eps), t.confidences, t.params, t.params)
    shuffled = all(
        canonicalize([prims[j].reversed() if rng.random() < 0.5 else prims[j] for j in rng.permutation(6)]) == t
        for _ in range(20)
    )
    idem = canonicalize(targets_to_prims(t)) == t
    spot = loss(np.array([0.5]), np.array([1.0]), np.zeros((1, 5)), np.zeros((1, 5)))
    ok = limit < 1e-9 and shuffled and idem and spot == pytest.approx(math.log(2))
    report(8, "loss properties", ok,
           f"perfect-limit loss {limit:.1e}, shuffle-invariant {shuffled}, idempotent {idem}, BCE(0.5) {spot:.6f}")


def test_c9_vectorize_determinism(report, tmp_path):
    prefix = tmp_path / "s"
    assert main(["synth", str(prefix), "--seed", "9"]) == 0
    outs = []
    for k, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"v{k}.json"
        assert main(["vectorize", f"{prefix}_clean.pgm", "-o", str(out), "--workers", str(workers), "--patch_size=32"]) == 0
        outs.append(out.read_bytes())
    n = len(json.loads(outs[0])["primitives"])
    same = outs[0] == outs[1] == outs[2]
    report(9, "vectorize determinism", same, f"{n} primitives, runs and workers 1/4 byte-identical: {same}")
