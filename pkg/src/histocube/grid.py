"""Core geometry and value types.

Pixel domains are finite toroidal grids Z_W x Z_H; pixel values live in a
flattened product of cyclic groups.  Arrays indexed by the grid always have
shape (W, H) with the first coordinate on axis 0, stored row-major, so
``arr.ravel()`` enumerates points with the second coordinate fastest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WEIGHT_SUM_TOL = 1e-6  # window masses farther than this from 1 are rejected
WEIGHT_SUM_FINAL_TOL = 1e-12

Point = tuple[int, int]


@dataclass(frozen=True)
class Grid:
    """The toroidal pixel domain Z_width x Z_height."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def size(self) -> int:
        return self.width * self.height

    def wrap(self, point) -> Point:
        a, b = point
        return (int(a) % self.width, int(b) % self.height)

    def add(self, p, q) -> Point:
        return ((p[0] + q[0]) % self.width, (p[1] + q[1]) % self.height)

    def neg(self, p) -> Point:
        return ((-p[0]) % self.width, (-p[1]) % self.height)

    def flat_index(self, point) -> int:
        a, b = self.wrap(point)
        return a * self.height + b

    def point_of(self, flat: int) -> Point:
        if not 0 <= flat < self.size:
            raise ValueError(f"flat index {flat} out of range for {self.width}x{self.height} grid")
        return (flat // self.height, flat % self.height)

    def points(self):
        """All points in flat (row-major) order."""
        for a in range(self.width):
            for b in range(self.height):
                yield (a, b)

    def centered(self, point) -> Point:
        """Representative of a point with coordinates in [-n//2, (n-1)//2]."""
        a, b = self.wrap(point)
        w, h = self.width, self.height
        return (a - w if a > (w - 1) // 2 else a, b - h if b > (h - 1) // 2 else b)


@dataclass(frozen=True)
class ValueSpace:
    """Product of cyclic groups Z_f1 x ... x Z_fk, flattened row-major.

    The first factor varies slowest in the flat index, so for factors
    (4, 2) the value (v0, v1) has index v0 * 2 + v1.
    """

    factors: tuple[int, ...]

    def __post_init__(self):
        facs = tuple(int(f) for f in self.factors)
        if not facs or any(f < 1 for f in facs):
            raise ValueError(f"value space factors must be positive integers, got {self.factors}")
        object.__setattr__(self, "factors", facs)

    @property
    def size(self) -> int:
        return math.prod(self.factors)

    def index(self, value) -> int:
        value = tuple(int(v) for v in value)
        if len(value) != len(self.factors):
            raise ValueError(f"value {value} does not match factors {self.factors}")
        for v, f in zip(value, self.factors):
            if not 0 <= v < f:
                raise ValueError(f"component {v} out of range for factor {f}")
        return int(np.ravel_multi_index(value, self.factors))

    def value(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValueError(f"value index {index} out of range for size {self.size}")
        return tuple(int(c) for c in np.unravel_index(index, self.factors))

    def digits(self, indices) -> list[np.ndarray]:
        """Mixed-radix decomposition of flat indices, one array per factor."""
        idx = np.asarray(indices)
        out = []
        for place, f in enumerate(self.factors):
            stride = math.prod(self.factors[place + 1:])
            out.append((idx // stride) % f)
        return out

    def add_index(self, indices, shift_index: int) -> np.ndarray:
        """Componentwise group addition of a constant, on flat indices."""
        shift = self.value(shift_index)
        acc = np.zeros_like(np.asarray(indices))
        for d, s, f in zip(self.digits(indices), shift, self.factors):
            acc = acc * f + (d + s) % f
        return acc


@dataclass(frozen=True)
class Image:
    """A value-index field over a grid.  Pixels are read-only int32."""

    grid: Grid
    values: ValueSpace
    pixels: np.ndarray

    def __post_init__(self):
        pix = np.ascontiguousarray(self.pixels, dtype=np.int32)
        if pix.shape != self.grid.shape:
            raise ValueError(f"pixel shape {pix.shape} does not match grid {self.grid.shape}")
        if pix.size and (pix.min() < 0 or pix.max() >= self.values.size):
            raise ValueError("pixel value index out of range")
        pix.flags.writeable = False
        object.__setattr__(self, "pixels", pix)

    @property
    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)

    @classmethod
    def from_flat(cls, grid: Grid, values: ValueSpace, flat) -> "Image":
        arr = np.asarray(flat).reshape(grid.shape)
        return cls(grid, values, arr)


@dataclass(frozen=True)
class LabelMap:
    """An assignment of a source label to each grid point."""

    grid: Grid
    num_labels: int
    labels: np.ndarray

    def __post_init__(self):
        if self.num_labels < 1:
            raise ValueError("need at least one label")
        lab = np.ascontiguousarray(self.labels, dtype=np.int32)
        if lab.shape != self.grid.shape:
            raise ValueError(f"label shape {lab.shape} does not match grid {self.grid.shape}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.num_labels):
            raise ValueError("label out of range")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)


@dataclass(frozen=True)
class WeightingFunction:
    """Nonnegative weights over grid offsets, summing to 1.

    ``weights`` has shape (W, H): entry (a, b) is the weight of the offset
    congruent to (a, b).  Masses within WEIGHT_SUM_TOL of 1 are renormalized
    exactly to 1; anything farther off is an error, not a warning.
    """

    grid: Grid
    weights: np.ndarray
    support_radius: int | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != self.grid.shape:
            raise ValueError(f"weight shape {w.shape} does not match grid {self.grid.shape}")
        if w.size == 0 or w.min() < 0.0:
            raise ValueError("weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weight mass {total!r} is not within {WEIGHT_SUM_TOL} of 1")
        if total != 1.0:
            w = w / total
        assert abs(w.sum() - 1.0) <= WEIGHT_SUM_FINAL_TOL
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

        nz = np.argwhere(w > 0.0)
        centered = np.array([self.grid.centered((a, b)) for a, b in nz], dtype=np.int64)
        radius = int(np.abs(centered).max()) if centered.size else 0
        if self.support_radius is None:
            object.__setattr__(self, "support_radius", radius)
        elif self.support_radius < radius:
            raise ValueError(
                f"declared support radius {self.support_radius} smaller than actual {radius}")
        # canonical tap order: centered offsets sorted lexicographically
        order = np.lexsort((centered[:, 1], centered[:, 0])) if centered.size else np.array([], int)
        object.__setattr__(self, "_tap_centered", centered[order] if centered.size else
                           np.zeros((0, 2), dtype=np.int64))
        object.__setattr__(self, "_tap_weights",
                           np.ascontiguousarray(w[nz[order, 0], nz[order, 1]])
                           if centered.size else np.zeros(0))

    @property
    def tap_count(self) -> int:
        return self._tap_weights.shape[0]

    def taps(self) -> tuple[np.ndarray, np.ndarray]:
        """(offsets, weights): centered integer offsets (T, 2) and (T,) weights.

        Order is deterministic (lexicographic in the centered offsets) so
        every evaluation strategy accumulates in the same sequence.
        """
        return self._tap_centered, self._tap_weights

    def wrapped_taps(self) -> tuple[np.ndarray, np.ndarray]:
        """Same taps with offsets reduced to [0, W) x [0, H)."""
        offs = self._tap_centered.copy()
        offs[:, 0] %= self.grid.width
        offs[:, 1] %= self.grid.height
        return offs, self._tap_weights

    def weight_at(self, offset) -> float:
        a, b = self.grid.wrap(offset)
        return float(self.weights[a, b])


@dataclass(frozen=True)
class HistCube:
    """A field of distributions over value indices: data[y, a, b].

    Level-major layout: data[y] is the contiguous plane of level y.  Each
    pixel's column is a probability vector.  Tolerances below absorb float
    roundoff from transform-based evaluation paths.
    """

    grid: Grid
    values: ValueSpace
    data: np.ndarray

    ENTRY_TOL = 1e-9
    COLUMN_SUM_TOL = 1e-6

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        expect = (self.values.size,) + self.grid.shape
        if d.shape != expect:
            raise ValueError(f"cube shape {d.shape}, expected {expect}")
        if d.min() < -self.ENTRY_TOL or d.max() > 1.0 + self.ENTRY_TOL:
            raise ValueError("cube entries outside [0, 1]")
        sums = d.sum(axis=0)
        err = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if err > self.COLUMN_SUM_TOL:
            raise ValueError(f"cube columns must sum to 1, worst error {err!r}")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    def level(self, y: int) -> np.ndarray:
        return self.data[y]

    def at(self, point) -> np.ndarray:
        a, b = self.grid.wrap(point)
        return self.data[:, a, b]


def translate_image(f: Image, shift) -> Image:
    """The translate (T^s f)(x) = f(x - s)."""
    s = f.grid.wrap(shift)
    return Image(f.grid, f.values, np.roll(f.pixels, s, axis=(0, 1)))


def translate_labels(phi: LabelMap, shift) -> LabelMap:
    s = phi.grid.wrap(shift)
    return LabelMap(phi.grid, phi.num_labels, np.roll(phi.labels, s, axis=(0, 1)))


def translate_plane(plane: np.ndarray, grid: Grid, shift) -> np.ndarray:
    return np.roll(plane, grid.wrap(shift), axis=(0, 1))


def reverse_weights(w: WeightingFunction) -> WeightingFunction:
    """The reversal r(x) = w(-x)."""
    wi = (-np.arange(w.grid.width)) % w.grid.width
    hi = (-np.arange(w.grid.height)) % w.grid.height
    rev = w.weights[np.ix_(wi, hi)]
    return WeightingFunction(w.grid, rev, support_radius=w.support_radius)


def characteristic_cube(f: Image) -> HistCube:
    """One-hot cube: level y is the indicator of f^-1{y}."""
    data = np.zeros((f.values.size,) + f.grid.shape, dtype=np.float64)
    flat = data.reshape(f.values.size, -1)
    flat[f.flat, np.arange(f.grid.size)] = 1.0
    return HistCube(f.grid, f.values, data)


@dataclass(frozen=True)
class Quantization:
    """Per-factor coarsening of a value space.

    ``spec`` has one entry per source factor: an integer m (quantize that
    factor from f levels down to m by v -> floor(v * m / f)) or None to
    drop the factor entirely.  At least one factor must be retained.
    """

    source: ValueSpace
    spec: tuple[int | None, ...]

    def __post_init__(self):
        spec = tuple(None if s is None else int(s) for s in self.spec)
        if len(spec) != len(self.source.factors):
            raise ValueError(f"spec {spec} does not match factors {self.source.factors}")
        for s, f in zip(spec, self.source.factors):
            if s is not None and not 1 <= s <= f:
                raise ValueError(f"cannot quantize a factor of {f} to {s} levels")
        if all(s is None for s in spec):
            raise ValueError("quantization must retain at least one factor")
        object.__setattr__(self, "spec", spec)

    @property
    def target(self) -> ValueSpace:
        return ValueSpace(tuple(s for s in self.spec if s is not None))

    def index_map(self) -> np.ndarray:
        """Array mapping each source value index to its target index."""
        digs = self.source.digits(np.arange(self.source.size))
        kept = []
        for d, s, f in zip(digs, self.spec, self.source.factors):
            if s is not None:
                kept.append((d * s) // f)
        out = np.zeros(self.source.size, dtype=np.int64)
        for d, m in zip(kept, self.target.factors):
            out = out * m + d
        return out


def quantize_values(f: Image, q: Quantization) -> Image:
    if q.source != f.values:
        raise ValueError("quantization source does not match image values")
    return Image(f.grid, q.target, q.index_map()[f.pixels])
