"""Texture classification by local histogram subspaces.

Training collects local histograms at sampled interior points of one
exemplar image per class, centers them, and keeps the top left singular
vectors as a per-class affine subspace.  A pixel is assigned to the class
whose subspace best explains its local histogram:

    score_k(h) = ||h - mean_k||^2 - sum_n <h - mean_k, u_kn>^2

which equals the squared residual of projecting h - mean_k onto the
span of the class directions.  Classification streams one value level at
a time, so peak extra memory stays O(|X|) regardless of |Y|.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .grid import Grid, Image, LabelMap, WeightingFunction
from .localhist import FilterPlan, LevelFilter, local_histogram

RANK_EPS = 1e-12
RELATIVE_RANK_EPS = 1e-12


@dataclass(frozen=True)
class TrainingSet:
    """Per-class local histograms and where they were sampled."""

    histograms: tuple[np.ndarray, ...]
    locations: tuple[np.ndarray, ...]
    num_values: int

    def __post_init__(self):
        if len(self.histograms) != len(self.locations) or not self.histograms:
            raise ValueError("need matching nonempty histogram and location lists")
        hists = []
        locs = []
        for h, pts in zip(self.histograms, self.locations):
            h = np.ascontiguousarray(h, dtype=np.float64)
            pts = np.ascontiguousarray(pts, dtype=np.int64)
            if h.ndim != 2 or h.shape[1] != self.num_values or h.shape[0] < 1:
                raise ValueError("histogram block must be (M_k, num_values) with M_k >= 1")
            if pts.shape != (h.shape[0], 2):
                raise ValueError("locations must be (M_k, 2)")
            if h.min() < -1e-9 or np.abs(h.sum(axis=1) - 1.0).max() > 1e-6:
                raise ValueError("rows must be probability vectors")
            hists.append(h)
            locs.append(pts)
        object.__setattr__(self, "histograms", tuple(hists))
        object.__setattr__(self, "locations", tuple(locs))

    @property
    def num_classes(self) -> int:
        return len(self.histograms)


def sample_training_points(grid: Grid, count: int, margin: int, seed: int) -> np.ndarray:
    """`count` distinct interior points, uniform without replacement.

    Interior means at least `margin` pixels from every border, so local
    histograms computed there never lean on truncated windows.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    aw = grid.width - 2 * margin
    ah = grid.height - 2 * margin
    if aw < 1 or ah < 1:
        raise ValueError(f"margin {margin} leaves no interior on {grid.width}x{grid.height}")
    if count < 1 or count > aw * ah:
        raise ValueError(f"cannot sample {count} points from {aw * ah} interior pixels")
    order = rng.key_order(seed, aw * ah)[:count]
    return np.column_stack((order // ah + margin, order % ah + margin))


def histograms_at(image: Image, w: WeightingFunction, points,
                  plan: FilterPlan | None = None) -> np.ndarray:
    """Local histograms gathered at given points, one level at a time."""
    pts = np.ascontiguousarray(points, dtype=np.int64)
    lf = LevelFilter(image, w, plan or FilterPlan(mode="noncyclic"))
    out = np.empty((pts.shape[0], image.values.size))
    for y, plane in lf.levels():
        out[:, y] = plane[pts[:, 0], pts[:, 1]]
    return out


def build_training_set(images, w: WeightingFunction, count: int,
                       margin: int | None = None,
                       plan: FilterPlan | None = None, seed: int = 0) -> TrainingSet:
    """Sample `count` interior points per class image and collect histograms.

    margin defaults to the window support radius.  Class k draws from its
    own substream, so adding a class never changes the others' points.
    """
    if margin is None:
        margin = w.support_radius
    hists = []
    locs = []
    for k, image in enumerate(images):
        pts = sample_training_points(image.grid, count, margin, rng.derive(seed, k))
        hists.append(histograms_at(image, w, pts, plan))
        locs.append(pts)
    return TrainingSet(tuple(hists), tuple(locs), images[0].values.size)


@dataclass(frozen=True)
class SubspaceClassifier:
    """Per-class mean and orthonormal direction bundle, plus the
    preprocessing recipe (window / quantize / filter mode) that training
    used, so classification can reproduce it."""

    num_values: int
    means: np.ndarray
    directions: tuple[np.ndarray, ...]
    singular_values: tuple[np.ndarray, ...]
    window_spec: str | None = None
    quantize_spec: str | None = None
    mode: str = "noncyclic"

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        if means.ndim != 2 or means.shape[1] != self.num_values:
            raise ValueError("means must be (K, num_values)")
        if len(self.directions) != means.shape[0]:
            raise ValueError("need one direction bundle per class")
        dirs = []
        svals = []
        for d, s in zip(self.directions, self.singular_values):
            d = np.ascontiguousarray(d, dtype=np.float64)
            s = np.ascontiguousarray(s, dtype=np.float64)
            if d.ndim != 2 or d.shape[1] != self.num_values:
                raise ValueError("directions must be (N_k, num_values)")
            if s.shape != (d.shape[0],):
                raise ValueError("need one singular value per direction")
            dirs.append(d)
            svals.append(s)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "directions", tuple(dirs))
        object.__setattr__(self, "singular_values", tuple(svals))

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """Largest-magnitude coordinate positive; ties take the lowest index."""
    out = u.copy()
    for n in range(out.shape[0]):
        i = int(np.argmax(np.abs(out[n])))
        if out[n, i] < 0:
            out[n] = -out[n]
    return out


def train(ts: TrainingSet, n_components, window_spec: str | None = None,
          quantize_spec: str | None = None, mode: str = "noncyclic") -> SubspaceClassifier:
    """Fit per-class subspaces of the centered training histograms.

    n_components is one int for all classes or a sequence per class; it
    must not exceed min(M_k, num_values).  A class whose centered samples
    are numerically rank zero degrades to the mean-only rule (no
    directions) with a warning.
    """
    k = ts.num_classes
    if np.isscalar(n_components):
        comps = [int(n_components)] * k
    else:
        comps = [int(c) for c in n_components]
        if len(comps) != k:
            raise ValueError("need one component count per class")
    means = np.empty((k, ts.num_values))
    dirs = []
    svals = []
    for i, hist in enumerate(ts.histograms):
        m = hist.shape[0]
        n = comps[i]
        if not 0 <= n <= min(m, ts.num_values):
            raise ValueError(
                f"class {i}: {n} components not in [0, min(M={m}, |Y|={ts.num_values})]")
        means[i] = hist.mean(axis=0)
        centered = (hist - means[i]).T  # columns are centered samples
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        if n > 0 and (s.size == 0 or s[0] <= RANK_EPS):
            warnings.warn(f"class {i}: centered samples have rank 0; "
                          "falling back to the mean-only rule")
            n = 0
        # directions with numerically zero spread are float noise, not
        # structure; keeping them would subtract arbitrary projections
        while n > 0 and s[n - 1] <= s[0] * RELATIVE_RANK_EPS:
            n -= 1
            if n == comps[i] - 1:
                warnings.warn(f"class {i}: dropping trailing components with "
                              "numerically zero singular values")
        dirs.append(_fix_signs(u[:, :n].T))
        svals.append(s[:n].copy())
    return SubspaceClassifier(ts.num_values, means, tuple(dirs), tuple(svals),
                              window_spec=window_spec, quantize_spec=quantize_spec,
                              mode=mode)


def classify_pixel(clf: SubspaceClassifier, hist) -> int:
    """Class with the smallest subspace residual; ties take the lowest."""
    h = np.asarray(hist, dtype=np.float64)
    if h.shape != (clf.num_values,):
        raise ValueError(f"histogram must have shape ({clf.num_values},)")
    best = 0
    best_score = np.inf
    for k in range(clf.num_classes):
        d = h - clf.means[k]
        score = float(d @ d)
        for n in range(clf.directions[k].shape[0]):
            c = float(clf.directions[k][n] @ d)
            score -= c * c
        if score < best_score:
            best = k
            best_score = score
    return best


def _stream_objectives(levels, clf: SubspaceClassifier, size: int):
    """Shared accumulation over (y, plane) pairs.

    Returns (labels_flat, stats).  Persistent accumulators are K + sum N_k
    float planes plus three scratch planes; each incoming level plane is
    the only transient.  Identical arithmetic regardless of how the planes
    were produced, which is what makes the streaming and materialized
    paths agree bit for bit.
    """
    kcls = clf.num_classes
    sq = [np.zeros(size) for _ in range(kcls)]
    coef = [np.zeros((clf.directions[k].shape[0], size)) for k in range(kcls)]
    dbuf = np.empty(size)
    mbuf = np.empty(size)
    for y, plane in levels:
        flat = plane.reshape(-1)
        for k in range(kcls):
            np.subtract(flat, clf.means[k, y], out=dbuf)
            np.multiply(dbuf, dbuf, out=mbuf)
            sq[k] += mbuf
            dk = clf.directions[k]
            for n in range(dk.shape[0]):
                np.multiply(dbuf, dk[n, y], out=mbuf)
                coef[k][n] += mbuf
    best_obj = np.full(size, np.inf)
    best_idx = np.zeros(size, dtype=np.int32)
    mask = np.empty(size, dtype=bool)
    for k in range(kcls):
        obj = sq[k]
        for n in range(coef[k].shape[0]):
            np.multiply(coef[k][n], coef[k][n], out=mbuf)
            obj -= mbuf
        np.less(obj, best_obj, out=mask)
        np.copyto(best_obj, obj, where=mask)
        np.copyto(best_idx, np.int32(k), where=mask)
    planes = kcls + sum(clf.directions[k].shape[0] for k in range(kcls)) + 3
    stats = {"accumulator_planes_f64": planes,
             "accumulator_floats": planes * size,
             "transient_planes": 1,
             "index_planes_i32": 1,
             "mask_planes_bool": 1}
    return best_idx, stats


def classify_image(image: Image, w: WeightingFunction, clf: SubspaceClassifier,
                   plan: FilterPlan | None = None, materialize: bool = False,
                   return_stats: bool = False):
    """Label every pixel.  plan defaults to noncyclic filtering.

    materialize=True computes the full histogram cube first (reference
    path); the default streams levels.  Both give identical label maps.
    """
    if image.values.size != clf.num_values:
        raise ValueError(f"image has {image.values.size} values, classifier "
                         f"expects {clf.num_values}")
    plan = plan or FilterPlan(mode=clf.mode)
    size = image.grid.size
    if clf.num_classes == 1:
        labels = np.zeros(image.grid.shape, dtype=np.int32)
        stats = {"accumulator_planes_f64": 0, "accumulator_floats": 0,
                 "transient_planes": 0, "index_planes_i32": 0, "mask_planes_bool": 0}
    elif materialize:
        cube = local_histogram(image, w, plan)
        flat, stats = _stream_objectives(
            ((y, cube.data[y]) for y in range(cube.values.size)), clf, size)
        labels = flat.reshape(image.grid.shape)
    else:
        lf = LevelFilter(image, w, plan)
        flat, stats = _stream_objectives(lf.levels(), clf, size)
        labels = flat.reshape(image.grid.shape)
    out = LabelMap(image.grid, clf.num_classes, labels)
    return (out, stats) if return_stats else out


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic confusion table: rows are truth, columns predictions."""

    counts: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        k = c.shape[0]
        if c.shape != (k, k) or len(self.names) != k:
            raise ValueError("counts must be square with one name per class")
        object.__setattr__(self, "counts", c)

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def percentages(self) -> np.ndarray:
        sup = self.supports.astype(np.float64)
        safe = np.where(sup > 0, sup, 1.0)
        return 100.0 * self.counts / safe[:, None]

    @property
    def diagonal_percentages(self) -> np.ndarray:
        return np.diag(self.percentages)

    @property
    def accuracy(self) -> float:
        total = int(self.counts.sum())
        return float(np.trace(self.counts)) / total if total else 0.0

    def format(self) -> str:
        k = self.counts.shape[0]
        pct = self.percentages
        widest = max(6, max(len(n) for n in self.names) + 1)
        head = " " * widest + "".join(f"{n:>{widest}}" for n in self.names)
        lines = [head]
        for i in range(k):
            row = f"{self.names[i]:>{widest}}"
            row += "".join(f"{pct[i, j]:>{widest}.1f}" for j in range(k))
            lines.append(row + f"   (n={int(self.supports[i])})")
        lines.append(f"overall accuracy: {100.0 * self.accuracy:.2f}%")
        return "\n".join(lines)


def evaluate(predicted: LabelMap, truth: LabelMap, ignore_label: int | None = None,
             num_classes: int | None = None, mask=None,
             names=None) -> ConfusionMatrix:
    """Confusion counts over pixels where truth is not ignored.

    mask, if given, is a boolean (W, H) array selecting pixels to score
    (border exclusion, for example); it composes with ignore_label.
    """
    if predicted.grid != truth.grid:
        raise ValueError("label map grids differ")
    k = num_classes or max(predicted.num_labels, truth.num_labels)
    valid = np.ones(truth.grid.shape, dtype=bool)
    if ignore_label is not None:
        valid &= truth.labels != ignore_label
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != truth.grid.shape:
            raise ValueError("mask shape does not match grid")
        valid &= m
    t = truth.labels[valid].astype(np.int64)
    p = predicted.labels[valid].astype(np.int64)
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    if names is None:
        names = tuple(str(i) for i in range(k))
    else:
        names = tuple(names)
    return ConfusionMatrix(counts, names)


def interior_mask(grid: Grid, margin: int) -> np.ndarray:
    """True on pixels at least `margin` away from every border."""
    m = np.zeros(grid.shape, dtype=bool)
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if grid.width > 2 * margin and grid.height > 2 * margin:
        m[margin:grid.width - margin, margin:grid.height - margin] = True
    return m
