"""Shared helpers: seeded inputs and slow reference oracles.

The oracles here deliberately avoid every fast path in the package
(kernels, FFT, streaming).  They follow the defining sums with plain
Python loops so agreement with the library is evidence, not tautology.
"""
from __future__ import annotations

import numpy as np

from histocube.grid import Grid, Image, ValueSpace


def random_image(grid: Grid, num_values: int, seed: int) -> Image:
    r = np.random.default_rng(seed)
    pix = r.integers(0, num_values, grid.shape)
    return Image(grid, ValueSpace((num_values,)), pix)


def sorted_taps(w) -> list[tuple[tuple[int, int], float]]:
    # mirror the library's lexicographic tap order so direct-mode
    # comparisons can demand bit identity
    offs, wts = w.taps()
    return [((int(a), int(b)), float(wt)) for (a, b), wt in zip(offs, wts)]


def reference_lh_cyclic(image: Image, taps) -> np.ndarray:
    """Triple loop over pixels, taps, levels with toroidal wrap."""
    pix = image.pixels
    width, height = image.grid.shape
    out = np.zeros((image.values.size, width, height))
    for a in range(width):
        for b in range(height):
            for (da, db), wt in taps:
                y = pix[(a + da) % width, (b + db) % height]
                out[y, a, b] += wt
    return out


def reference_lh_noncyclic(image: Image, taps) -> np.ndarray:
    """Clipped window, renormalized by the in-bounds weight mass."""
    pix = image.pixels
    width, height = image.grid.shape
    out = np.zeros((image.values.size, width, height))
    for a in range(width):
        for b in range(height):
            mass = 0.0
            for (da, db), wt in taps:
                aa, bb = a + da, b + db
                if 0 <= aa < width and 0 <= bb < height:
                    out[pix[aa, bb], a, b] += wt
                    mass += wt
            out[:, a, b] /= mass
    return out


def reference_expected_lh(model, sources, w, lh) -> np.ndarray:
    """Support-weighted mean of per-map composite histograms."""
    from histocube.occlusion import occlude

    table = model.pdf_table()
    acc = None
    for i in range(table.maps.shape[0]):
        from histocube.grid import LabelMap

        phi = LabelMap(model.grid, model.num_labels, table.maps[i])
        cube = lh(occlude(sources, phi), w)
        term = table.probs[i] * cube.data
        acc = term if acc is None else acc + term
    return acc
