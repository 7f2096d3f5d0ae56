import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from linevec.cli import (
    dump_config,
    load_config,
    main,
    patch_init,
    read_config_file,
    scene_from_dict,
    scene_to_json,
)
from linevec.geom import Curve, Line, VectorScene
from linevec.metrics import iou
from linevec.raster import GrayImage, load_image, render_scene, save_image


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def synth1(tmp_path):
    prefix = tmp_path / "s1"
    assert run("synth", prefix, "--seed", 1, "--count_range=5,5") == 0
    return prefix


def test_metrics_self(synth1, capsys):
    capsys.readouterr()
    assert run("metrics", f"{synth1}.json", f"{synth1}.json") == 0
    n = len(json.loads(open(f"{synth1}.json").read())["primitives"])
    assert capsys.readouterr().out == f"iou=1.000 d_h=0.00 d_m=0.00 p={n}\n"


def test_metrics_text_and_psnr(synth1, capsys):
    capsys.readouterr()
    assert run("metrics", f"{synth1}_clean.pgm", f"{synth1}.json", "--psnr", "--text") == 0
    out = dict(line.split(": ") for line in capsys.readouterr().out.splitlines())
    assert set(out) == {"iou", "d_h", "d_m", "prim_count", "psnr"}


def test_render_then_metrics(synth1, tmp_path, capsys):
    out = tmp_path / "r.pgm"
    assert run("render", f"{synth1}.json", "-o", out) == 0
    capsys.readouterr()
    assert run("metrics", out, f"{synth1}_clean.pgm") == 0
    rec = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    assert float(rec["iou"]) >= 0.99


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth", tmp_path / name, "--seed", 7) == 0
    for suffix in (".json", "_clean.pgm", "_degraded.pgm"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()
    assert run("synth", tmp_path / "c", "--seed", 8) == 0
    assert (tmp_path / "a.json").read_bytes() != (tmp_path / "c.json").read_bytes()


def test_vectorize_recovers_synthetic_scene(synth1, tmp_path):
    out = tmp_path / "v.json"
    assert run("vectorize", f"{synth1}_clean.pgm", "-o", out) == 0
    scene = scene_from_dict(json.loads(out.read_text()))
    assert len(scene) <= 10
    ref = load_image(f"{synth1}_clean.pgm")
    assert iou(render_scene(scene, 16), ref) >= 0.9
    ET.parse(tmp_path / "v.svg")


def test_vectorize_byte_identical(synth1, tmp_path):
    outs = []
    for k, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"v{k}.json"
        assert run("vectorize", f"{synth1}_clean.pgm", "-o", out, "--workers", workers, "--patch_size=32") == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_blank_image(tmp_path):
    img = tmp_path / "blank.pgm"
    save_image(GrayImage(np.zeros((40, 50))), img)
    out = tmp_path / "o.json"
    assert run("vectorize", img, "-o", out, "--svg", tmp_path / "o.svg") == 0
    assert json.loads(out.read_text()) == {"canvas": [50, 40], "primitives": []}
    root = ET.parse(tmp_path / "o.svg").getroot()
    assert root.tag.endswith("svg") and len(root) == 0


def test_vectorize_with_init(synth1, tmp_path):
    out = tmp_path / "i.json"
    assert run("vectorize", f"{synth1}_clean.pgm", "-o", out, "--init", f"{synth1}.json") == 0
    scene = scene_from_dict(json.loads(out.read_text()))
    assert iou(render_scene(scene, 16), load_image(f"{synth1}_clean.pgm")) >= 0.9


def test_refine_and_merge_commands(synth1, tmp_path):
    assert run("refine", f"{synth1}.json", f"{synth1}_clean.pgm", "-o", tmp_path / "r.json") == 0
    assert run("merge", tmp_path / "r.json", "-o", tmp_path / "m.json") == 0
    m = scene_from_dict(json.loads((tmp_path / "m.json").read_text()))
    assert iou(render_scene(m, 16), load_image(f"{synth1}_clean.pgm")) >= 0.9


def test_exit_codes(tmp_path, capsys):
    assert run("vectorize", tmp_path / "missing.pgm", "-o", tmp_path / "o.json") == 2
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"not an image")
    assert run("render", tmp_path / "nope.json", "-o", bad) == 2
    assert run("vectorize", bad, "-o", tmp_path / "o.json") == 2
    img = tmp_path / "img.pgm"
    save_image(GrayImage(np.zeros((16, 16))), img)
    scene = tmp_path / "s.json"
    scene.write_text('{"canvas": [16, 16], "primitives": [{"kind": "line", "points": [[0, 0]], "width": 1}]}')
    assert run("vectorize", img, "-o", tmp_path / "o.json", "--init", scene) == 3
    scene.write_text("{not json")
    assert run("merge", scene) == 3
    assert run("config", "--learning_rate=oops") == 4
    assert run("config", "--no_such_key=1") == 4
    cfg = tmp_path / "c.ini"
    cfg.write_text("[refine]\nlearning_rate = -1\n")
    assert run("config", "--config", cfg) == 4
    empty = tmp_path / "e.json"
    empty.write_text('{"canvas": [16, 16], "primitives": []}')
    assert run("metrics", empty, img) == 5
    err = capsys.readouterr().err
    assert all(line.startswith("linevec: error: ") for line in err.splitlines())


def test_schema_validation():
    ok = {"canvas": [8, 8], "primitives": [{"kind": "qbezier", "points": [[0, 0], [4, 8], [8, 0]], "width": 1.5}]}
    sc = scene_from_dict(ok)
    assert isinstance(sc.primitives[0], Curve)
    for bad in (
        {"canvas": [8, 8]},
        {"canvas": [8, 8], "primitives": [], "extra": 1},
        {"canvas": [8, 8], "primitives": [{"kind": "line", "points": [[0, 0], [1, 1]], "width": 0}]},
        {"canvas": [8, 8], "primitives": [{"kind": "line", "points": [[0, 0], [1, float("nan")]], "width": 1}]},
        {"canvas": [8, 8], "primitives": [{"kind": "arc", "points": [[0, 0], [1, 1]], "width": 1}]},
    ):
        with pytest.raises(Exception):
            scene_from_dict(bad)


def test_json_format_is_stable():
    sc = VectorScene(10, 10, (Line((1 / 3, 2), (5, 7.123456789123), 1.5),))
    text = scene_to_json(sc)
    assert text == scene_to_json(scene_from_dict(json.loads(text)))
    assert "0.333333333" in text and "7.12345679" in text
    doc = json.loads(text)
    assert list(doc) == sorted(doc)


def test_config_roundtrip(tmp_path):
    cfg = load_config(None, ["--learning_rate=0.02", "--merge.snap_fraction=0.1", "--stride=48"], seed=3, workers=2)
    assert cfg.refine.learning_rate == 0.02 and cfg.merge.snap_fraction == 0.1 and cfg.stride == 48
    assert cfg.synth.seed == 3 and cfg.degrade.seed == 4 and cfg.workers == 2
    path = tmp_path / "c.ini"
    path.write_text(dump_config(cfg))
    again = load_config(str(path))
    assert dump_config(again) == dump_config(cfg)
    assert load_config(str(path)) == cfg


def test_flat_config(tmp_path):
    path = tmp_path / "flat.cfg"
    path.write_text("patch_size = 32\nlearning_rate = 0.1\n")
    cfg = load_config(str(path))
    assert cfg.patch_size == 32 and cfg.refine.learning_rate == 0.1
    assert read_config_file(str(path))


def test_qualified_keys():
    cfg = load_config(None, ["--synth.width=48", "--potential.R_c=1.5", "--link_max_gap=3"])
    assert cfg.synth.width == 48 and cfg.refine.potential.R_c == 1.5 and cfg.merge.link_max_gap == 3.0
    for bad in (["--nosuch.width=4"], ["--merge.width=4"], ["positional"]):
        with pytest.raises(Exception):
            load_config(None, bad)


def test_patch_init_clips_to_patch():
    sc = VectorScene(128, 64, (Line((10, 20), (110, 20), 2), Curve((70, 10), (90, 40), (100, 10), 1)))
    left = patch_init(sc, (0, 0), 64)
    right = patch_init(sc, (64, 0), 64)
    (a,) = left
    assert np.allclose(a.points, [[10, 20], [64, 20]])
    assert len(right) == 2 and np.allclose(right[0].points, [[0, 20], [46, 20]])
    assert isinstance(right[1], Curve) and np.allclose(right[1].c0, (6, 10))


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "linevec", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "vectorize" in r.stdout
    r = subprocess.run([sys.executable, "-m", "linevec", "metrics", "a.json"], capture_output=True, text=True)
    assert r.returncode == 2
