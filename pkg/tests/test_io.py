import json
import os

import numpy as np
import pytest

from histocube.grid import Grid, Image, LabelMap, ValueSpace
from histocube.io import (ConfigError, FormatError, RunManifest,
                          config_to_json, parse_model_config,
                          parse_quantize_spec, read_classifier, read_histcube,
                          read_image, read_label_map, read_manifest,
                          sha256_file, write_classifier, write_histcube,
                          write_image, write_label_map, write_manifest)
from histocube.localhist import local_histogram
from histocube.windows import box_window

from conftest import random_image


def test_pgm_roundtrip(tmp_path):
    img = random_image(Grid(6, 8), 5, seed=0)
    path = tmp_path / "a.pgm"
    write_image(path, img)
    back = read_image(path)
    assert back.grid == img.grid
    assert back.values.factors == (5,)
    assert np.array_equal(back.pixels, img.pixels)


def test_pgm_16bit_roundtrip(tmp_path):
    img = random_image(Grid(4, 4), 1000, seed=1)
    path = tmp_path / "wide.pgm"
    write_image(path, img)
    back = read_image(path)
    assert back.values.factors == (1000,)
    assert np.array_equal(back.pixels, img.pixels)


def test_ppm_roundtrip(tmp_path):
    g = Grid(5, 7)
    vs = ValueSpace((256, 256, 256))
    r = np.random.default_rng(2)
    img = Image(g, vs, r.integers(0, vs.size, g.shape))
    path = tmp_path / "c.ppm"
    write_image(path, img)
    back = read_image(path)
    assert back.values.factors == (256, 256, 256)
    assert np.array_equal(back.pixels, img.pixels)


def test_netpbm_comments_and_whitespace(tmp_path):
    raw = b"P5 # format\n# a comment line\n 3 2 #dims\n4\n" + bytes([0, 1, 2, 3, 4, 0])
    path = tmp_path / "messy.pgm"
    path.write_bytes(raw)
    img = read_image(path)
    assert img.grid == Grid(2, 3)
    assert img.values.factors == (5,)
    assert img.pixels[1, 1] == 4


def test_netpbm_rejects_garbage(tmp_path):
    cases = {
        "bad_magic.pgm": b"P4\n2 2\n255\n" + bytes(4),
        "short.pgm": b"P5\n4 4\n255\n" + bytes(3),
        "huge_maxval.pgm": b"P5\n1 1\n70000\n" + bytes(2),
    }
    for name, raw in cases.items():
        path = tmp_path / name
        path.write_bytes(raw)
        with pytest.raises(FormatError):
            read_image(path)


def test_histcube_roundtrip_and_errors(tmp_path):
    img = random_image(Grid(6, 8), 5, seed=3)
    cube = local_histogram(img, box_window(img.grid, 1))
    path = tmp_path / "c.hcube"
    write_histcube(path, cube)
    back = read_histcube(path)
    assert back.data.tobytes() == cube.data.tobytes()
    assert back.grid == img.grid
    structured = read_histcube(path, factors=(5,))
    assert structured.values.factors == (5,)
    with pytest.raises(ValueError):
        read_histcube(path, factors=(2, 2))  # product != 5
    bad = tmp_path / "bad.hcube"
    bad.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(FormatError):
        read_histcube(bad)
    trunc = tmp_path / "trunc.hcube"
    trunc.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_histcube(trunc)


def test_label_map_roundtrip_with_palette(tmp_path):
    g = Grid(4, 4)
    lm = LabelMap(g, 3, np.random.default_rng(4).integers(0, 3, g.shape).astype(np.int32))
    path = tmp_path / "labels.pgm"
    write_label_map(path, lm)
    sidecar = str(path) + ".palette"
    assert os.path.exists(sidecar)
    lines = [l for l in open(sidecar).read().splitlines()
             if l.strip() and not l.startswith("#")]
    assert len(lines) == 3
    back = read_label_map(path)
    assert back.num_labels == 3
    assert np.array_equal(back.labels, lm.labels)
    forced = read_label_map(path, num_labels=5)
    assert forced.num_labels == 5


def test_classifier_roundtrip(tmp_path):
    r = np.random.default_rng(5)
    means = r.random((2, 6))
    dirs = (np.linalg.qr(r.standard_normal((6, 2)))[0].T,
            np.linalg.qr(r.standard_normal((6, 1)))[0].T)
    svals = (np.array([3.0, 1.0]), np.array([2.0]))
    from histocube.classifier import SubspaceClassifier

    clf = SubspaceClassifier(6, means, dirs, svals, window_spec="box:2",
                             quantize_spec="4", mode="direct")
    path = tmp_path / "m.hclf"
    write_classifier(path, clf)
    back = read_classifier(path)
    assert back.num_values == 6
    assert np.array_equal(back.means, clf.means)
    for a, b in zip(back.directions, clf.directions):
        assert np.array_equal(a, b)
    for a, b in zip(back.singular_values, clf.singular_values):
        assert np.array_equal(a, b)
    assert back.window_spec == "box:2"
    assert back.quantize_spec == "4"
    assert back.mode == "direct"
    corrupt = tmp_path / "x.hclf"
    corrupt.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(FormatError):
        read_classifier(corrupt)


def test_parse_quantize_spec():
    vs = ValueSpace((256, 256, 256))
    q = parse_quantize_spec("8,drop,8", vs)
    assert q.target.factors == (8, 8)
    assert parse_quantize_spec("4", ValueSpace((16,))).target.factors == (4,)
    for bad in ("", "8,8", "drop,drop,drop", "a,b,c"):
        with pytest.raises(ValueError):
            parse_quantize_spec(bad, vs)


def test_model_config_roundtrip_all_kinds():
    cfg = {
        "grid": [4, 4],
        "model": {"kind": "overlay",
                  "background": {"kind": "class_table", "num_labels": 2,
                                 "representatives": [[1] + [0] * 15],
                                 "member_probs": [0.0625]},
                  "foreground": {"kind": "expansion",
                                 "seed": {"kind": "iid_spinner",
                                          "probs": [0.9, 0.1]},
                                 "blobs": {"kind": "blob_table",
                                           "blobs": [[[0, 0], [0, 1]]],
                                           "probs": [1.0]}},
                  "selector": {"kind": "iid_spinner", "probs": [0.5, 0.5]}}}
    grid, model = parse_model_config(json.dumps(cfg))
    assert model.num_labels == 4
    text = config_to_json(grid, model)
    grid2, model2 = parse_model_config(text)
    assert config_to_json(grid2, model2) == text


def test_model_config_errors_carry_paths():
    with pytest.raises(ConfigError, match=r"\$\.grid"):
        parse_model_config('{"grid": [4], "model": {}}')
    with pytest.raises(ConfigError, match=r"\$\.model"):
        parse_model_config('{"grid": [2, 2], "model": {"kind": "nope"}}')
    with pytest.raises(ConfigError, match="probs"):
        parse_model_config('{"grid": [2, 2], "model": {"kind": "iid_spinner", '
                           '"probs": "x"}}')
    with pytest.raises(ConfigError, match="foreground"):
        parse_model_config(json.dumps({
            "grid": [2, 2],
            "model": {"kind": "overlay",
                      "background": {"kind": "iid_spinner", "probs": [1.0]},
                      "foreground": {"kind": "iid_spinner", "probs": [0.5]},
                      "selector": {"kind": "iid_spinner", "probs": [0.5, 0.5]}}}))
    with pytest.raises(ConfigError):
        parse_model_config("not json at all {")


def test_manifest_roundtrip(tmp_path):
    src = tmp_path / "in.bin"
    src.write_bytes(b"hello")
    man = RunManifest(command=["histocube", "synth"], seed=3,
                      version="0.1.0", backend="numpy")
    man.add_input(src)
    man.add_output(src)
    man.wall_time_s = 1.25
    path = tmp_path / "manifest.json"
    write_manifest(path, man)
    d = read_manifest(path)
    assert d["seed"] == 3
    assert d["inputs"][0]["sha256"] == sha256_file(src)
    assert d["wall_time_s"] == 1.25
    # canonical serialization: identical content serializes identically
    man2 = RunManifest(command=["histocube", "synth"], seed=3,
                       version="0.1.0", backend="numpy")
    man2.add_input(src)
    man2.add_output(src)
    man2.wall_time_s = 1.25
    assert man.to_json() == man2.to_json()
