"""Standard window constructors and the window mini-language.

Window specs accepted everywhere a window can be named:

    delta                   point mass at the origin
    box:R                   uniform over the (2R+1)^2 Chebyshev square
    center-weighted:R       mass c0 at the origin, the rest uniform over the
    center-weighted:R:c0    punctured Euclidean disk of radius R (c0 = 0.5
                            when omitted)
"""
from __future__ import annotations

import numpy as np

from .grid import Grid, WeightingFunction


def _require_fits(grid: Grid, radius: int):
    if 2 * radius + 1 > grid.width or 2 * radius + 1 > grid.height:
        raise ValueError(
            f"window of radius {radius} does not fit on a {grid.width}x{grid.height} grid")


def delta_window(grid: Grid) -> WeightingFunction:
    w = np.zeros(grid.shape)
    w[0, 0] = 1.0
    return WeightingFunction(grid, w, support_radius=0)


def box_window(grid: Grid, radius: int) -> WeightingFunction:
    radius = int(radius)
    if radius < 0:
        raise ValueError("box radius must be >= 0")
    _require_fits(grid, radius)
    w = np.zeros(grid.shape)
    side = 2 * radius + 1
    v = 1.0 / (side * side)
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            w[a % grid.width, b % grid.height] = v
    return WeightingFunction(grid, w, support_radius=radius)


def disk_offsets(radius: int) -> list[tuple[int, int]]:
    """Offsets with 0 < a*a + b*b <= radius**2, lexicographic order."""
    out = []
    r2 = radius * radius
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            if 0 < a * a + b * b <= r2:
                out.append((a, b))
    return out


def center_weighted_window(grid: Grid, radius: int, center_weight: float = 0.5) -> WeightingFunction:
    radius = int(radius)
    if radius < 1:
        raise ValueError("center-weighted radius must be >= 1")
    if not 0.0 <= center_weight <= 1.0:
        raise ValueError("center weight must lie in [0, 1]")
    _require_fits(grid, radius)
    ring = disk_offsets(radius)
    w = np.zeros(grid.shape)
    w[0, 0] = center_weight
    share = (1.0 - center_weight) / len(ring)
    for a, b in ring:
        w[a % grid.width, b % grid.height] = share
    return WeightingFunction(grid, w, support_radius=radius)


def window_from_spec(grid: Grid, spec: str) -> WeightingFunction:
    """Parse a window spec string (see module docstring) for a grid."""
    parts = str(spec).strip().split(":")
    kind = parts[0]
    try:
        if kind == "delta":
            if len(parts) != 1:
                raise ValueError
            return delta_window(grid)
        if kind == "box":
            if len(parts) != 2:
                raise ValueError
            return box_window(grid, int(parts[1]))
        if kind == "center-weighted":
            if len(parts) == 2:
                return center_weighted_window(grid, int(parts[1]))
            if len(parts) == 3:
                return center_weighted_window(grid, int(parts[1]), float(parts[2]))
            raise ValueError
    except ValueError as exc:
        detail = str(exc)
        suffix = f": {detail}" if detail else ""
        raise ValueError(f"bad window spec {spec!r}{suffix}") from None
    raise ValueError(f"unknown window kind {kind!r} in spec {spec!r}")
