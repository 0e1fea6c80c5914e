import numpy as np
import pytest

from histocube.classifier import (SubspaceClassifier, TrainingSet,
                                  build_training_set, classify_image,
                                  classify_pixel, evaluate, histograms_at,
                                  interior_mask, sample_training_points, train)
from histocube.grid import Grid, LabelMap
from histocube.localhist import FilterPlan, local_histogram
from histocube.occlusion import coin_model, synthesize_texture
from histocube.textures import DiskBlobs, ExpansionModel
from histocube.occlusion import IIDSpinnerModel
from histocube.windows import box_window, center_weighted_window

from conftest import random_image


def _two_textures(grid, seed=0):
    """A blobby texture and an iid speckle; noisy sources keep the local
    histograms full rank so N=2 trains without truncation."""
    srcA = [random_image(grid, 6, seed + 31), random_image(grid, 6, seed + 32)]
    srcB = [random_image(grid, 6, seed + 33), random_image(grid, 6, seed + 34)]
    blobby = ExpansionModel(IIDSpinnerModel(grid, [0.95, 0.05]),
                            DiskBlobs(grid, [1], [1.0]))
    texA = synthesize_texture(blobby, srcA, seed=seed + 1)
    texB = synthesize_texture(coin_model(grid, 0.3), srcB, seed=seed + 2)
    return texA, texB


def test_sample_training_points_interior_unique():
    g = Grid(16, 16)
    pts = sample_training_points(g, 40, margin=3, seed=2)
    assert pts.shape == (40, 2)
    assert len({tuple(p) for p in pts}) == 40
    assert pts.min() >= 3
    assert pts[:, 0].max() <= 12 and pts[:, 1].max() <= 12
    with pytest.raises(ValueError):
        sample_training_points(g, 200, margin=3, seed=2)  # only 100 interior
    with pytest.raises(ValueError):
        sample_training_points(Grid(4, 4), 1, margin=2, seed=2)


def test_histograms_at_match_cube_columns():
    img = random_image(Grid(12, 12), 5, seed=4)
    w = box_window(img.grid, 2)
    pts = sample_training_points(img.grid, 10, margin=2, seed=0)
    rows = histograms_at(img, w, pts)
    from histocube.localhist import noncyclic_local_histogram

    cube = noncyclic_local_histogram(img, w)
    for i, (a, b) in enumerate(pts):
        assert np.array_equal(rows[i], cube.data[:, a, b])


def test_build_training_set_shapes():
    g = Grid(24, 24)
    texA, texB = _two_textures(g)
    w = center_weighted_window(g, 2)
    ts = build_training_set([texA, texB], w, count=20, seed=3)
    assert ts.num_classes == 2
    assert ts.histograms[0].shape == (20, 6)
    assert np.allclose(ts.histograms[0].sum(axis=1), 1.0, atol=1e-9)
    # per-class substreams: adding a class leaves earlier draws alone
    ts3 = build_training_set([texA, texB, texA], w, count=20, seed=3)
    assert np.array_equal(ts.locations[0], ts3.locations[0])
    assert np.array_equal(ts.locations[1], ts3.locations[1])


def test_train_shapes_and_orthonormality():
    g = Grid(24, 24)
    texA, texB = _two_textures(g)
    w = center_weighted_window(g, 2)
    ts = build_training_set([texA, texB], w, count=24, seed=5)
    clf = train(ts, 2, window_spec="center-weighted:2", mode="noncyclic")
    assert clf.num_classes == 2
    for dirs in clf.directions:
        gram = dirs @ dirs.T
        assert np.allclose(gram, np.eye(dirs.shape[0]), atol=1e-10)
    for sv in clf.singular_values:
        assert np.all(np.diff(sv) <= 1e-12)  # nonincreasing


def test_train_sign_convention_deterministic():
    g = Grid(24, 24)
    texA, texB = _two_textures(g, seed=8)
    w = box_window(g, 2)
    ts = build_training_set([texA, texB], w, count=24, seed=5)
    a = train(ts, 1)
    b = train(ts, 1)
    for da, db in zip(a.directions, b.directions):
        assert np.array_equal(da, db)
        i = int(np.argmax(np.abs(da[0])))
        assert da[0, i] > 0


def test_train_rejects_excess_components():
    g = Grid(24, 24)
    texA, texB = _two_textures(g)
    w = box_window(g, 1)
    ts = build_training_set([texA, texB], w, count=4, seed=1)
    with pytest.raises(ValueError):
        train(ts, 5)  # > min(M, |Y|) = 4
    with pytest.raises(ValueError):
        train(ts, [1, 2, 3])  # wrong arity


def test_rank_zero_class_degrades_to_mean(recwarn):
    g = Grid(16, 16)
    from histocube.grid import Image, ValueSpace

    vs = ValueSpace((4,))
    flat_img = Image(g, vs, np.full(g.shape, 2))  # constant texture
    tex = random_image(g, 4, seed=2)
    w = box_window(g, 1)
    ts = build_training_set([flat_img, tex], w, count=10, seed=0)
    with pytest.warns(UserWarning):
        clf = train(ts, 2)
    assert clf.directions[0].shape[0] == 0  # all histograms identical
    assert clf.directions[1].shape[0] == 2


def test_classify_pixel_matches_expanded_rule():
    r = np.random.default_rng(9)
    means = r.random((3, 8))
    dirs = []
    svals = []
    for k in range(3):
        q = np.linalg.qr(r.standard_normal((8, 2)))[0].T
        dirs.append(q)
        svals.append(np.array([2.0, 1.0]))
    clf = SubspaceClassifier(8, means, tuple(dirs), tuple(svals))
    for _ in range(50):
        h = r.random(8)
        h /= h.sum()
        scores = []
        for k in range(3):
            d = h - means[k]
            proj = dirs[k].T @ (dirs[k] @ d)
            scores.append(float((d - proj) @ (d - proj)))
        assert classify_pixel(clf, h) == int(np.argmin(scores))


def test_streaming_equals_materialized():
    g = Grid(32, 32)
    texA, texB = _two_textures(g, seed=10)
    w = center_weighted_window(g, 2)
    ts = build_training_set([texA, texB], w, count=24, seed=6)
    clf = train(ts, 2)
    stream = classify_image(texA, w, clf)
    reference = classify_image(texA, w, clf, materialize=True)
    assert np.array_equal(stream.labels, reference.labels)


def test_classify_image_memory_stats():
    g = Grid(32, 32)
    texA, texB = _two_textures(g, seed=11)
    w = box_window(g, 2)
    ts = build_training_set([texA, texB], w, count=24, seed=7)
    clf = train(ts, 2)
    _, stats = classify_image(texA, w, clf, return_stats=True)
    k = clf.num_classes
    total_dirs = sum(d.shape[0] for d in clf.directions)
    assert stats["accumulator_planes_f64"] == k + total_dirs + 3
    # budget from the streaming design: K(N+2)+1 planes at N=2
    assert stats["accumulator_planes_f64"] <= k * (2 + 2) + 1


def test_single_class_classify_shortcut():
    g = Grid(8, 8)
    tex = random_image(g, 4, seed=3)
    w = box_window(g, 1)
    clf = SubspaceClassifier(4, np.full((1, 4), 0.25), (np.zeros((0, 4)),),
                             (np.zeros(0),))
    out, stats = classify_image(tex, w, clf, return_stats=True)
    assert np.all(out.labels == 0)
    assert stats["accumulator_planes_f64"] == 0


def test_evaluate_confusion_matrix():
    g = Grid(4, 4)
    truth = LabelMap(g, 2, np.repeat(np.arange(2, dtype=np.int32), 8).reshape(4, 4))
    pred_labels = truth.labels.copy()
    pred_labels[0, 0] = 1  # one mistake in class 0
    pred = LabelMap(g, 2, pred_labels)
    cm = evaluate(pred, truth)
    assert cm.counts.tolist() == [[7, 1], [0, 8]]
    assert cm.accuracy == pytest.approx(15 / 16)
    pct = cm.percentages
    assert pct[0, 0] == pytest.approx(100 * 7 / 8)
    text = cm.format()
    assert "overall" in text


def test_evaluate_ignore_and_mask():
    g = Grid(4, 4)
    truth = LabelMap(g, 3, np.zeros((4, 4), dtype=np.int32))
    pred = LabelMap(g, 3, np.full((4, 4), 2, dtype=np.int32))
    cm = evaluate(pred, truth, ignore_label=0)
    assert cm.counts.sum() == 0
    mask = interior_mask(g, 1)
    assert mask.sum() == 4
    cm2 = evaluate(pred, truth, mask=mask)
    assert cm2.counts.sum() == 4
