"""Local histogram transforms.

The transform of an image f under a window w assigns to each pixel x the
distribution over values y:

    LH(x, y) = sum_t w(t) * [f(x + t) == y]

Three evaluation strategies produce the same field:

  direct        per-tap scatter accumulation, cyclic indexing
  cyclic_fft    one transform per level: level y is the cyclic convolution
                of the reversed window with the indicator of f^-1{y}
  noncyclic     taps falling outside the grid are dropped and each pixel's
                histogram is renormalized by its in-bounds window mass

direct and cyclic_fft agree to float tolerance; noncyclic agrees with them
on the interior (deeper than the support radius) and differs near borders,
which is the point: border pixels only see real image content.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import Grid, HistCube, Image, Quantization, ValueSpace, WeightingFunction, reverse_weights

MODES = ("auto", "direct", "cyclic_fft", "noncyclic")
DEFAULT_FFT_THRESHOLD = 49


@dataclass(frozen=True)
class FilterPlan:
    """Evaluation strategy for histogram transforms.

    mode "auto" picks cyclic_fft when the window has at least
    fft_threshold taps, direct otherwise.  threads > 1 computes levels
    concurrently where the strategy allows; results do not depend on it.
    """

    mode: str = "auto"
    fft_threshold: int = DEFAULT_FFT_THRESHOLD
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.fft_threshold < 1:
            raise ValueError("fft_threshold must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolve(self, w: WeightingFunction) -> str:
        if self.mode != "auto":
            return self.mode
        return "cyclic_fft" if w.tap_count >= self.fft_threshold else "direct"


def _check_grid(f: Image, w: WeightingFunction):
    if f.grid != w.grid:
        raise ValueError(f"image grid {f.grid.shape} does not match window grid {w.grid.shape}")


def _map_levels(fn, count: int, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fn, range(count)))
    else:
        for y in range(count):
            fn(y)


class LevelFilter:
    """Per-level evaluator with window state computed once.

    Produces one (W, H) plane at a time so callers can stream over levels
    without ever holding the full |Y| x |X| cube.  Planes are bit-identical
    to the corresponding slices of the full-cube entry points.
    """

    def __init__(self, image: Image, w: WeightingFunction, plan: FilterPlan | None = None):
        plan = plan or FilterPlan()
        _check_grid(image, w)
        self.image = image
        self.window = w
        self.mode = plan.resolve(w)
        self.grid = image.grid
        self.values = image.values
        self._pix = image.pixels
        centered, weights = w.taps()
        self._wts = weights
        if self.mode == "noncyclic":
            _check_noncyclic_support(self.grid, centered)
            self._c0 = np.ascontiguousarray(centered[:, 0])
            self._c1 = np.ascontiguousarray(centered[:, 1])
            mass = np.zeros(self.grid.shape)
            _kernels.noncyclic_mass(self._c0, self._c1, weights,
                                    self.grid.width, self.grid.height, mass)
            if mass.min() <= 0.0:
                raise ValueError("window has no in-bounds mass at some pixel; "
                                 "cannot renormalize")
            self._mass = mass
        elif self.mode == "cyclic_fft":
            rev = reverse_weights(w)
            self._wf = np.fft.rfft2(rev.weights)
        else:
            wrapped, _ = w.wrapped_taps()
            self._t0 = np.ascontiguousarray(wrapped[:, 0])
            self._t1 = np.ascontiguousarray(wrapped[:, 1])

    def level(self, y: int) -> np.ndarray:
        """The plane x -> LH(x, y), freshly allocated."""
        if not 0 <= y < self.values.size:
            raise ValueError(f"level {y} out of range")
        out = np.zeros(self.grid.shape)
        if self.mode == "direct":
            _kernels.direct_level(self._pix, self._t0, self._t1, self._wts, y, out)
        elif self.mode == "noncyclic":
            _kernels.noncyclic_level(self._pix, self._c0, self._c1, self._wts, y, out)
            out /= self._mass
        else:
            ind = (self._pix == y).astype(np.float64)
            out = np.fft.irfft2(np.fft.rfft2(ind) * self._wf, s=self.grid.shape)
        return out

    def levels(self):
        for y in range(self.values.size):
            yield y, self.level(y)


def _check_noncyclic_support(grid: Grid, centered: np.ndarray):
    if centered.size == 0:
        return
    r0 = int(np.abs(centered[:, 0]).max())
    r1 = int(np.abs(centered[:, 1]).max())
    if 2 * r0 + 1 > grid.width or 2 * r1 + 1 > grid.height:
        raise ValueError(
            f"window support {2 * r0 + 1}x{2 * r1 + 1} exceeds the "
            f"{grid.width}x{grid.height} image extent")


def local_histogram(f: Image, w: WeightingFunction, plan: FilterPlan | None = None) -> HistCube:
    """The full transform as a cube, level-major."""
    plan = plan or FilterPlan()
    _check_grid(f, w)
    mode = plan.resolve(w)
    n = f.values.size
    out = np.zeros((n,) + f.grid.shape)
    centered, weights = w.taps()
    if mode == "direct":
        wrapped, _ = w.wrapped_taps()
        _kernels.direct_cube(f.pixels, np.ascontiguousarray(wrapped[:, 0]),
                             np.ascontiguousarray(wrapped[:, 1]), weights, out)
    elif mode == "noncyclic":
        _check_noncyclic_support(f.grid, centered)
        c0 = np.ascontiguousarray(centered[:, 0])
        c1 = np.ascontiguousarray(centered[:, 1])
        mass = np.zeros(f.grid.shape)
        _kernels.noncyclic_mass(c0, c1, weights, f.grid.width, f.grid.height, mass)
        if mass.min() <= 0.0:
            raise ValueError("window has no in-bounds mass at some pixel; cannot renormalize")
        _kernels.noncyclic_cube(f.pixels, c0, c1, weights, out)
        out /= mass
    elif mode == "cyclic_fft":
        wf = np.fft.rfft2(reverse_weights(w).weights)

        def one(y):
            ind = (f.pixels == y).astype(np.float64)
            out[y] = np.fft.irfft2(np.fft.rfft2(ind) * wf, s=f.grid.shape)

        _map_levels(one, n, plan.threads)
    else:  # pragma: no cover
        raise AssertionError(mode)
    return HistCube(f.grid, f.values, out)


def local_histogram_level(f: Image, w: WeightingFunction, y: int,
                          plan: FilterPlan | None = None) -> np.ndarray:
    """One plane of the transform.  For many levels, reuse a LevelFilter."""
    return LevelFilter(f, w, plan).level(y)


def noncyclic_local_histogram(f: Image, w: WeightingFunction,
                              plan: FilterPlan | None = None) -> HistCube:
    """The truncated, renormalized transform (border-aware)."""
    base = plan or FilterPlan()
    forced = FilterPlan(mode="noncyclic", fft_threshold=base.fft_threshold,
                        threads=base.threads)
    return local_histogram(f, w, forced)


def bin_histcube(cube: HistCube, q: Quantization) -> HistCube:
    """Push a cube through a value quantization by summing merged levels."""
    if q.source != cube.values:
        raise ValueError("quantization source does not match cube values")
    target = q.target
    idx = q.index_map()
    out = np.zeros((target.size,) + cube.grid.shape)
    for y in range(cube.values.size):  # ascending y: deterministic fp order
        out[idx[y]] += cube.data[y]
    return HistCube(cube.grid, target, out)


@dataclass(frozen=True)
class TensorCheckReport:
    max_abs_error: float
    tol: float
    passed: bool
    mode: str


def tensor_convolve_check(f: Image, w: WeightingFunction, omega,
                          plan: FilterPlan | None = None,
                          tol: float = 1e-9) -> TensorCheckReport:
    """Compare two routes to the same field over the grid and value group.

    Route A runs the library transform, then convolves along the value
    group with omega.  Route B evaluates the double sum from scratch:
    at (x, z), sum over window taps t and value offsets y' of
    w(t) * omega(y') * [f(x + t) + y' == z].  Their agreement exercises
    the transform against an independent summation.
    """
    plan = plan or FilterPlan()
    _check_grid(f, w)
    values = f.values
    n = values.size
    om = np.ascontiguousarray(omega, dtype=np.float64)
    if om.shape != (n,):
        raise ValueError(f"omega must have shape ({n},)")
    if om.min() < 0.0:
        raise ValueError("omega must be nonnegative")
    total = float(om.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError("omega mass must be within 1e-6 of 1")
    om = om / total

    cube = local_histogram(f, w, plan)
    lhs = np.zeros_like(cube.data)
    base = np.arange(n)
    for yp in range(n):
        lhs[values.add_index(base, yp)] += om[yp] * cube.data

    rhs = np.zeros((n, f.grid.size))
    cols = np.arange(f.grid.size)
    wrapped, weights = w.wrapped_taps()
    for k in range(weights.shape[0]):
        g = np.roll(f.pixels, (-int(wrapped[k, 0]), -int(wrapped[k, 1])), axis=(0, 1)).reshape(-1)
        for yp in range(n):
            rhs[values.add_index(g, yp), cols] += weights[k] * om[yp]
    rhs = rhs.reshape(lhs.shape)

    err = float(np.abs(lhs - rhs).max())
    return TensorCheckReport(max_abs_error=err, tol=tol, passed=err <= tol,
                             mode=plan.resolve(w))
