"""Pure numpy kernels, the fallback when the compiled module is absent.

Both backends accumulate per pixel in the same tap order, so results agree
bit for bit, not just to rounding.  Taps arrive presorted; `t0`/`t1` are
wrapped offsets in [0, n), `c0`/`c1` are centered offsets.
"""
from __future__ import annotations

import numpy as np


def direct_cube(pix, t0, t1, wts, out):
    """out[f(x + t), x] += w(t) for every tap, cyclically."""
    width, height = pix.shape
    flat = out.reshape(out.shape[0], -1)
    cols = np.arange(width * height)
    for k in range(wts.shape[0]):
        g = np.roll(pix, (-int(t0[k]), -int(t1[k])), axis=(0, 1))
        # (row, col) pairs are distinct within a tap, so += is safe
        flat[g.reshape(-1), cols] += wts[k]


def direct_level(pix, t0, t1, wts, y, out):
    """out[x] += w(t) over taps with f(x + t) == y, cyclically."""
    for k in range(wts.shape[0]):
        g = np.roll(pix, (-int(t0[k]), -int(t1[k])), axis=(0, 1))
        out[g == y] += wts[k]


def _tap_bounds(d, n):
    return max(0, -d), min(n, n - d)


def noncyclic_cube(pix, c0, c1, wts, out):
    """Truncated accumulation: only taps landing inside the grid count."""
    width, height = pix.shape
    flat = out.reshape(out.shape[0], -1)
    cols = np.arange(width * height).reshape(width, height)
    for k in range(wts.shape[0]):
        d0, d1 = int(c0[k]), int(c1[k])
        alo, ahi = _tap_bounds(d0, width)
        blo, bhi = _tap_bounds(d1, height)
        if alo >= ahi or blo >= bhi:
            continue
        src = pix[alo + d0:ahi + d0, blo + d1:bhi + d1]
        idx = cols[alo:ahi, blo:bhi]
        flat[src.reshape(-1), idx.reshape(-1)] += wts[k]


def noncyclic_level(pix, c0, c1, wts, y, out):
    width, height = pix.shape
    for k in range(wts.shape[0]):
        d0, d1 = int(c0[k]), int(c1[k])
        alo, ahi = _tap_bounds(d0, width)
        blo, bhi = _tap_bounds(d1, height)
        if alo >= ahi or blo >= bhi:
            continue
        src = pix[alo + d0:ahi + d0, blo + d1:bhi + d1]
        view = out[alo:ahi, blo:bhi]
        view[src == y] += wts[k]


def noncyclic_mass(c0, c1, wts, width, height, mass):
    """In-bounds window mass per pixel, same tap order as the kernels."""
    for k in range(wts.shape[0]):
        d0, d1 = int(c0[k]), int(c1[k])
        alo, ahi = _tap_bounds(d0, width)
        blo, bhi = _tap_bounds(d1, height)
        if alo >= ahi or blo >= bhi:
            continue
        mass[alo:ahi, blo:bhi] += wts[k]
