import numpy as np
import pytest

from histocube.grid import (Grid, Image, Quantization, ValueSpace,
                            characteristic_cube, translate_image)
from histocube.localhist import (FilterPlan, LevelFilter, bin_histcube,
                                 local_histogram, local_histogram_level,
                                 noncyclic_local_histogram,
                                 tensor_convolve_check)
from histocube.windows import (box_window, center_weighted_window, delta_window,
                               window_from_spec)

from conftest import random_image, reference_lh_cyclic, reference_lh_noncyclic, sorted_taps


def test_direct_matches_reference_oracle():
    img = random_image(Grid(7, 9), 5, seed=10)
    w = center_weighted_window(img.grid, 2)
    cube = local_histogram(img, w, FilterPlan(mode="direct"))
    ref = reference_lh_cyclic(img, sorted_taps(w))
    assert np.max(np.abs(cube.data - ref)) == 0.0  # same taps, same order


def test_fft_matches_direct():
    img = random_image(Grid(16, 16), 8, seed=1)
    w = box_window(img.grid, 3)
    direct = local_histogram(img, w, FilterPlan(mode="direct"))
    fft = local_histogram(img, w, FilterPlan(mode="cyclic_fft"))
    assert np.max(np.abs(direct.data - fft.data)) <= 1e-9


def test_delta_window_recovers_characteristic():
    img = random_image(Grid(6, 6), 4, seed=2)
    cube = local_histogram(img, delta_window(img.grid), FilterPlan(mode="direct"))
    assert np.array_equal(cube.data, characteristic_cube(img).data)


def test_noncyclic_matches_reference_oracle():
    img = random_image(Grid(8, 7), 4, seed=3)
    w = center_weighted_window(img.grid, 2, 0.3)
    cube = noncyclic_local_histogram(img, w)
    ref = reference_lh_noncyclic(img, sorted_taps(w))
    assert np.max(np.abs(cube.data - ref)) < 1e-12




def test_noncyclic_interior_agrees_with_cyclic():
    img = random_image(Grid(12, 12), 3, seed=4)
    w = box_window(img.grid, 1)
    cyc = local_histogram(img, w, FilterPlan(mode="direct"))
    non = noncyclic_local_histogram(img, w)
    # interior windows have full mass; only the renormalizing division
    # (by a sum that is 1 up to roundoff) separates the two routes
    diff = np.abs(cyc.data[:, 1:-1, 1:-1] - non.data[:, 1:-1, 1:-1])
    assert diff.max() <= 1e-12
    # borders differ unless the wrap happens to agree
    corner_mass = non.data[:, 0, 0].sum()
    assert abs(corner_mass - 1.0) < 1e-9


def test_noncyclic_rejects_oversized_support():
    from histocube.grid import WeightingFunction

    img = random_image(Grid(5, 12), 3, seed=5)
    w = box_window(img.grid, 2)  # extent 5 fits exactly
    noncyclic_local_histogram(img, w)
    # a raw window whose centered support spans 5 rows on a 4-row grid
    # constructs fine but cannot be clipped unambiguously
    img_small = random_image(Grid(4, 12), 3, seed=5)
    weights = np.zeros((4, 12))
    weights[2, 0] = 0.5  # centered offset (-2, 0)
    weights[0, 2] = 0.5
    w_bad = WeightingFunction(img_small.grid, weights, support_radius=2)
    with pytest.raises(ValueError):
        noncyclic_local_histogram(img_small, w_bad)


def test_plan_auto_switches_on_tap_count():
    g = Grid(16, 16)
    plan = FilterPlan()
    assert plan.resolve(box_window(g, 3)) == "cyclic_fft"  # 49 taps
    assert plan.resolve(box_window(g, 2)) == "direct"  # 25 taps
    assert FilterPlan(fft_threshold=10).resolve(box_window(g, 2)) == "cyclic_fft"


def test_level_filter_matches_cube_slices():
    img = random_image(Grid(10, 10), 6, seed=6)
    w = center_weighted_window(img.grid, 1, 0.5)
    for mode in ("direct", "cyclic_fft", "noncyclic"):
        plan = FilterPlan(mode=mode)
        cube = local_histogram(img, w, plan)
        filt = LevelFilter(img, w, plan)
        for y in range(6):
            assert np.array_equal(filt.level(y), cube.data[y]), (mode, y)
        stacked = np.stack([plane for _, plane in filt.levels()])
        assert np.array_equal(stacked, cube.data)


def test_local_histogram_level_slices():
    img = random_image(Grid(9, 9), 4, seed=7)
    w = box_window(img.grid, 1)
    cube = local_histogram(img, w, FilterPlan(mode="direct"))
    for y in (0, 3):
        plane = local_histogram_level(img, w, y, FilterPlan(mode="direct"))
        assert np.array_equal(plane, cube.data[y])


def test_threads_do_not_change_fft_result():
    img = random_image(Grid(16, 16), 8, seed=8)
    w = box_window(img.grid, 3)
    one = local_histogram(img, w, FilterPlan(mode="cyclic_fft", threads=1))
    four = local_histogram(img, w, FilterPlan(mode="cyclic_fft", threads=4))
    assert np.array_equal(one.data, four.data)


def test_binning_commutes_with_transform():
    img = random_image(Grid(8, 8), 12, seed=9)
    w = box_window(img.grid, 2)
    q = Quantization(img.values, (4,))
    a = bin_histcube(local_histogram(img, w, FilterPlan(mode="direct")), q)
    b = local_histogram(
        Image(img.grid, q.target, q.index_map()[img.pixels]), w,
        FilterPlan(mode="direct"))
    assert np.max(np.abs(a.data - b.data)) <= 1e-12


def test_translation_covariance_direct_is_exact():
    img = random_image(Grid(8, 6), 5, seed=11)
    w = center_weighted_window(img.grid, 1, 0.4)
    shift = (3, 2)
    lhs = local_histogram(translate_image(img, shift), w, FilterPlan(mode="direct"))
    rhs = local_histogram(img, w, FilterPlan(mode="direct"))
    rolled = np.roll(rhs.data, shift, axis=(1, 2))
    assert np.array_equal(lhs.data, rolled)


def test_tensor_identity_check_passes():
    img = random_image(Grid(6, 6), 4, seed=12)
    w = center_weighted_window(img.grid, 1, 0.5)
    omega = np.full(4, 0.25)
    report = tensor_convolve_check(img, w, omega)
    assert report.passed
    assert report.max_abs_error <= report.tol


def test_modes_reject_unknown():
    img = random_image(Grid(6, 6), 4, seed=13)
    w = delta_window(img.grid)
    with pytest.raises(ValueError):
        local_histogram(img, w, FilterPlan(mode="spectral"))
