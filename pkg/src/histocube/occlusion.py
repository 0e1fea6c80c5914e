"""Probabilistic occlusion models over label maps.

A label map assigns one of N source labels to each pixel; compositing
reads each pixel from its assigned source.  An occlusion model is a
distribution over label maps.  The central quantity is the marginal field

    m(x, n) = P(the label at x is n)

and the central property is flatness: m(x, n) = lambda_n independent of x.
For flat models the expected local histogram of a composite is exactly the
lambda-mixture of the sources' local histograms; for non-flat models the
mixture error is controlled by the window-smeared variation of m (see
verify_decomposition_bound).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .grid import Grid, HistCube, Image, LabelMap
from .localhist import FilterPlan, local_histogram

ENUMERATION_CAP = 1 << 20
MASS_TOL = 1e-12

_TAG_TABLE = 0x7AB7E
_TAG_SPIN = 0x591D
_TAG_MC = 0xACE5


class EnumerationCapError(RuntimeError):
    """Raised when an exact computation would exceed the enumeration cap."""


def _check_cap(size, cap: int = ENUMERATION_CAP):
    if size is None or size > cap:
        raise EnumerationCapError(
            f"support size {size} exceeds enumeration cap {cap}; "
            "use a Monte Carlo method instead")


class OcclusionModel:
    """Base for distributions over label maps on a fixed grid."""

    grid: Grid
    num_labels: int

    def sample(self, seed: int) -> LabelMap:
        raise NotImplementedError

    def support_size(self):
        """Number of label maps with positive probability, or None if unknown."""
        raise NotImplementedError

    def support(self, cap: int = ENUMERATION_CAP):
        """Yield (labels, prob) pairs.  Arrays are shared; do not mutate."""
        return self.pdf_table(cap).support(cap)

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> "TableModel":
        """Materialize this model as an explicit table."""
        raise NotImplementedError

    def marginal_probs(self):
        """Closed-form marginal field (num_labels, W, H), or None."""
        return None


class TableModel(OcclusionModel):
    """Explicit sparse distribution: a list of label maps with probabilities.

    Probabilities must be nonnegative and sum to 1 within MASS_TOL; the
    constructor rejects rather than renormalizes.  Map order is preserved.
    """

    def __init__(self, grid: Grid, num_labels: int, maps, probs):
        if num_labels < 1 or num_labels > 127:
            raise ValueError("table models support 1..127 labels")
        maps = np.ascontiguousarray(maps, dtype=np.int8)
        probs = np.ascontiguousarray(probs, dtype=np.float64)
        if maps.ndim != 3 or maps.shape[1:] != grid.shape:
            raise ValueError(f"maps shape {maps.shape} does not match grid {grid.shape}")
        if probs.shape != (maps.shape[0],):
            raise ValueError("need one probability per map")
        if maps.shape[0] == 0:
            raise ValueError("table must contain at least one map")
        if maps.min() < 0 or maps.max() >= num_labels:
            raise ValueError("label out of range in table")
        if probs.min() < 0.0:
            raise ValueError("probabilities must be nonnegative")
        mass = math.fsum(probs.tolist())
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"table mass {mass!r} not within {MASS_TOL} of 1")
        maps.flags.writeable = False
        probs.flags.writeable = False
        self.grid = grid
        self.num_labels = num_labels
        self.maps = maps
        self.probs = probs
        self._cum = np.cumsum(probs)
        self._index = {maps[i].tobytes(): i for i in range(maps.shape[0])}
        if len(self._index) != maps.shape[0]:
            raise ValueError("duplicate maps in table; merge their probabilities")

    @classmethod
    def from_rows(cls, grid: Grid, num_labels: int, rows) -> "TableModel":
        """Build from (labels, prob) pairs, merging duplicates.

        Rows are canonicalized: sorted by map bytes, so two models built
        from the same multiset of rows are identical.
        """
        acc: dict[bytes, float] = {}
        for labels, p in rows:
            key = np.ascontiguousarray(labels, dtype=np.int8).tobytes()
            acc[key] = acc.get(key, 0.0) + float(p)
        keys = sorted(acc)
        maps = np.stack([np.frombuffer(k, dtype=np.int8).reshape(grid.shape) for k in keys])
        probs = np.array([acc[k] for k in keys])
        return cls(grid, num_labels, maps, probs)

    def prob_of(self, labels) -> float:
        key = np.ascontiguousarray(labels, dtype=np.int8).tobytes()
        i = self._index.get(key)
        return float(self.probs[i]) if i is not None else 0.0

    def sample(self, seed: int) -> LabelMap:
        u = rng.uniform(rng.derive(seed, _TAG_TABLE))
        i = min(int(np.searchsorted(self._cum, u, side="right")), self.maps.shape[0] - 1)
        return LabelMap(self.grid, self.num_labels, self.maps[i].astype(np.int32))

    def support_size(self):
        return self.maps.shape[0]

    def support(self, cap: int = ENUMERATION_CAP):
        for i in range(self.maps.shape[0]):
            yield self.maps[i], float(self.probs[i])

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> "TableModel":
        return self

    def exact_marginal(self) -> np.ndarray:
        out = np.zeros((self.num_labels,) + self.grid.shape)
        flat = out.reshape(self.num_labels, -1)
        cols = np.arange(self.grid.size)
        for labels, p in self.support():
            flat[labels.reshape(-1).astype(np.int64), cols] += p
        return out


class IIDSpinnerModel(OcclusionModel):
    """Independent identical per-pixel label draws from one distribution."""

    def __init__(self, grid: Grid, probs):
        probs = np.ascontiguousarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise ValueError("probs must be a nonempty vector")
        if probs.min() < 0.0:
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(probs.tolist()) - 1.0) > MASS_TOL:
            raise ValueError(f"spinner mass not within {MASS_TOL} of 1")
        probs.flags.writeable = False
        self.grid = grid
        self.num_labels = probs.shape[0]
        self.probs = probs
        self._cum = np.cumsum(probs)

    def sample(self, seed: int) -> LabelMap:
        # one counter per pixel: draws are independent of evaluation order
        u = rng.uniforms_at(rng.derive(seed, _TAG_SPIN), np.arange(self.grid.size))
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), self.num_labels - 1)
        return LabelMap(self.grid, self.num_labels, idx.reshape(self.grid.shape).astype(np.int32))

    def support_size(self):
        return self.num_labels ** self.grid.size

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> TableModel:
        size = self.support_size()
        _check_cap(size, cap)
        count = self.grid.size
        idx = np.arange(size)
        digits = np.empty((size, count), dtype=np.int8)
        for j in range(count):
            digits[:, j] = (idx // self.num_labels ** (count - 1 - j)) % self.num_labels
        probs = np.ones(size)
        for j in range(count):
            probs *= self.probs[digits[:, j]]
        return TableModel(self.grid, self.num_labels,
                          digits.reshape(size, *self.grid.shape), probs)

    def support(self, cap: int = ENUMERATION_CAP):
        return self.pdf_table(cap).support(cap)

    def marginal_probs(self) -> np.ndarray:
        out = np.broadcast_to(self.probs[:, None, None],
                              (self.num_labels,) + self.grid.shape)
        return np.ascontiguousarray(out)


def coin_model(grid: Grid, rho: float) -> IIDSpinnerModel:
    """Per-pixel coin: label 1 with probability rho, else 0."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return IIDSpinnerModel(grid, np.array([1.0 - rho, rho]))


def independent_table_model(grid: Grid, pixel_probs,
                            cap: int = ENUMERATION_CAP) -> TableModel:
    """Enumerate the product distribution of independent per-pixel draws.

    pixel_probs has shape (num_labels, W, H); column x is the label
    distribution at pixel x.  Useful for building small pixel-dependent
    models whose exact marginal field is pixel_probs itself.
    """
    pp = np.ascontiguousarray(pixel_probs, dtype=np.float64)
    if pp.ndim != 3 or pp.shape[1:] != grid.shape:
        raise ValueError("pixel_probs must have shape (num_labels, W, H)")
    if pp.min() < 0.0:
        raise ValueError("probabilities must be nonnegative")
    sums = pp.sum(axis=0)
    if np.abs(sums - 1.0).max() > MASS_TOL:
        raise ValueError("each pixel's label distribution must sum to 1")
    n = pp.shape[0]
    count = grid.size
    size = n ** count
    _check_cap(size, cap)
    flat = pp.reshape(n, count)
    idx = np.arange(size)
    digits = np.empty((size, count), dtype=np.int8)
    probs = np.ones(size)
    for j in range(count):
        digits[:, j] = (idx // n ** (count - 1 - j)) % n
        probs *= flat[digits[:, j], j]
    return TableModel(grid, n, digits.reshape(size, *grid.shape), probs)


def orbit_of(grid: Grid, labels) -> list[np.ndarray]:
    """Distinct translates of a label map, sorted by byte representation."""
    base = np.ascontiguousarray(labels, dtype=np.int8)
    if base.shape != grid.shape:
        raise ValueError("label shape does not match grid")
    seen: dict[bytes, np.ndarray] = {}
    for a in range(grid.width):
        for b in range(grid.height):
            t = np.ascontiguousarray(np.roll(base, (a, b), axis=(0, 1)))
            seen.setdefault(t.tobytes(), t)
    return [seen[k] for k in sorted(seen)]


class ClassTableModel(OcclusionModel):
    """Translation class table: each representative stands for its orbit.

    Every distinct translate of representative k carries member_probs[k],
    so total mass is sum_k member_probs[k] * orbit_size_k, validated to 1.
    Translation invariance holds by construction, and the marginal field
    is constant: the model is always flat.
    """

    def __init__(self, grid: Grid, num_labels: int, representatives, member_probs):
        reps = np.ascontiguousarray(representatives, dtype=np.int8)
        member_probs = np.ascontiguousarray(member_probs, dtype=np.float64)
        if reps.ndim != 3 or reps.shape[1:] != grid.shape:
            raise ValueError("representatives must have shape (K, W, H)")
        if member_probs.shape != (reps.shape[0],):
            raise ValueError("need one member probability per representative")
        self.grid = grid
        self.num_labels = num_labels
        self.representatives = reps
        self.member_probs = member_probs
        orbits = [orbit_of(grid, reps[k]) for k in range(reps.shape[0])]
        self.orbit_sizes = np.array([len(o) for o in orbits])
        rows = []
        seen: set[bytes] = set()
        for k, orbit in enumerate(orbits):
            for member in orbit:
                key = member.tobytes()
                if key in seen:
                    raise ValueError(
                        f"representative {k} shares an orbit with an earlier one")
                seen.add(key)
                rows.append((member, float(member_probs[k])))
        self._table = TableModel.from_rows(grid, num_labels, rows)

    @classmethod
    def uniform_orbits(cls, grid: Grid, num_labels: int, representatives,
                       class_probs=None) -> "ClassTableModel":
        """Each orbit gets total mass class_probs[k] (uniform over classes
        by default), split evenly among its members."""
        reps = np.ascontiguousarray(representatives, dtype=np.int8)
        k = reps.shape[0]
        cp = (np.full(k, 1.0 / k) if class_probs is None
              else np.ascontiguousarray(class_probs, dtype=np.float64))
        sizes = np.array([len(orbit_of(grid, reps[i])) for i in range(k)])
        return cls(grid, num_labels, reps, cp / sizes)

    def sample(self, seed: int) -> LabelMap:
        return self._table.sample(seed)

    def support_size(self):
        return self._table.support_size()

    def support(self, cap: int = ENUMERATION_CAP):
        return self._table.support(cap)

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> TableModel:
        return self._table

    def marginal_probs(self) -> np.ndarray:
        lam = np.zeros(self.num_labels)
        for k in range(self.representatives.shape[0]):
            counts = np.bincount(self.representatives[k].reshape(-1).astype(np.int64),
                                 minlength=self.num_labels)
            lam += self.member_probs[k] * self.orbit_sizes[k] * counts / self.grid.size
        out = np.broadcast_to(lam[:, None, None], (self.num_labels,) + self.grid.shape)
        return np.ascontiguousarray(out)


def occlude(sources, phi: LabelMap) -> Image:
    """Composite image: pixel x comes from sources[phi(x)]."""
    if len(sources) != phi.num_labels:
        raise ValueError(f"need exactly {phi.num_labels} sources, got {len(sources)}")
    grid = phi.grid
    values = sources[0].values
    for f in sources:
        if f.grid != grid:
            raise ValueError("source grid does not match label map grid")
        if f.values != values:
            raise ValueError("sources must share one value space")
    stack = np.stack([f.pixels for f in sources])
    ar = np.arange(grid.width)[:, None]
    br = np.arange(grid.height)[None, :]
    return Image(grid, values, stack[phi.labels, ar, br])


def sample_label_map(model: OcclusionModel, seed: int) -> LabelMap:
    return model.sample(seed)


def synthesize_texture(model: OcclusionModel, sources, seed: int) -> Image:
    """Sample a label map and composite the sources under it."""
    return occlude(sources, model.sample(seed))


@dataclass(frozen=True)
class MarginalField:
    """Per-pixel label distribution m(x, n), with provenance.

    method is one of "exact" (summed over the support), "analytic"
    (closed form), or "monte_carlo" (samples and stderr recorded).
    """

    grid: Grid
    num_labels: int
    probs: np.ndarray
    method: str
    samples: int | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.shape != (self.num_labels,) + self.grid.shape:
            raise ValueError("marginal probs shape mismatch")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)


def marginal_field(model: OcclusionModel, method: str = "auto",
                   samples: int = 20000, seed: int = 0,
                   cap: int = ENUMERATION_CAP) -> MarginalField:
    """The field m(x, n), by the cheapest exact route available.

    auto prefers a closed form, then exact enumeration within the cap,
    then Monte Carlo.  Forcing method="exact" raises EnumerationCapError
    when the support is too large.
    """
    if method not in ("auto", "analytic", "exact", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "analytic"):
        closed = model.marginal_probs()
        if closed is not None:
            return MarginalField(model.grid, model.num_labels, closed, "analytic")
        if method == "analytic":
            raise ValueError("model has no closed-form marginal field")
    if method in ("auto", "exact"):
        size = model.support_size()
        if size is not None and size <= cap:
            table = model.pdf_table(cap)
            return MarginalField(model.grid, model.num_labels,
                                 table.exact_marginal(), "exact")
        if method == "exact":
            _check_cap(size, cap)
    counts = np.zeros((model.num_labels,) + model.grid.shape)
    flat = counts.reshape(model.num_labels, -1)
    cols = np.arange(model.grid.size)
    for i in range(samples):
        lab = model.sample(rng.derive(seed, _TAG_MC, i))
        flat[lab.flat.astype(np.int64), cols] += 1.0
    probs = counts / samples
    stderr = np.sqrt(probs * (1.0 - probs) / samples)
    return MarginalField(model.grid, model.num_labels, probs, "monte_carlo",
                         samples=samples, stderr=stderr)


@dataclass(frozen=True)
class FlatnessCertificate:
    """Verdict on whether the marginal field is constant across pixels.

    lambdas holds the per-label constants when flat, None otherwise.
    max_deviation is the largest |m(x, n) - mean_n| observed.  For Monte
    Carlo fields the default tolerance is 4 standard errors.
    """

    is_flat: bool
    lambdas: tuple[float, ...] | None
    max_deviation: float
    method: str
    tol: float
    samples: int | None = None
    max_stderr: float | None = None


def check_flatness(model: OcclusionModel, tol: float | None = None,
                   method: str = "auto", samples: int = 20000,
                   seed: int = 0, cap: int = ENUMERATION_CAP) -> FlatnessCertificate:
    field = marginal_field(model, method=method, samples=samples, seed=seed, cap=cap)
    means = field.probs.mean(axis=(1, 2))
    max_dev = float(np.abs(field.probs - means[:, None, None]).max())
    max_se = float(field.stderr.max()) if field.stderr is not None else None
    if tol is None:
        tol = max(4.0 * max_se, 1e-9) if field.method == "monte_carlo" else 1e-9
    flat = max_dev <= tol
    return FlatnessCertificate(
        is_flat=flat,
        lambdas=tuple(float(v) for v in means) if flat else None,
        max_deviation=max_dev,
        method=field.method,
        tol=float(tol),
        samples=field.samples,
        max_stderr=max_se,
    )


@dataclass(frozen=True)
class ExpectedHistogram:
    cube: HistCube
    method: str
    samples: int | None = None


def expected_local_histogram(model: OcclusionModel, sources, w,
                             plan: FilterPlan | None = None,
                             method: str = "auto", samples: int = 500,
                             seed: int = 0,
                             cap: int = ENUMERATION_CAP) -> ExpectedHistogram:
    """E[LH of the composite] under the model.

    Exact when the support is enumerable within the cap (probability
    weighted sum over all label maps), Monte Carlo otherwise.
    """
    if method not in ("auto", "exact", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    size = model.support_size()
    exact_ok = size is not None and size <= cap
    if method == "exact" and not exact_ok:
        _check_cap(size, cap)
    if method in ("auto", "exact") and exact_ok:
        acc = np.zeros((sources[0].values.size,) + model.grid.shape)
        for labels, p in model.support(cap):
            phi = LabelMap(model.grid, model.num_labels, labels.astype(np.int32))
            acc += p * local_histogram(occlude(sources, phi), w, plan).data
        return ExpectedHistogram(HistCube(model.grid, sources[0].values, acc), "exact")
    acc = np.zeros((sources[0].values.size,) + model.grid.shape)
    for i in range(samples):
        phi = model.sample(rng.derive(seed, _TAG_MC, i))
        acc += local_histogram(occlude(sources, phi), w, plan).data
    acc /= samples
    return ExpectedHistogram(HistCube(model.grid, sources[0].values, acc),
                             "monte_carlo", samples=samples)


@dataclass(frozen=True)
class DecompositionReport:
    """Outcome of the mixture decomposition bound check.

    eps is E[LH composite] minus the marginal-weighted mixture of source
    histograms; bound(x) is the window-smeared total variation of the
    marginal field.  holds means |eps| <= bound + slack everywhere.
    """

    max_abs_eps: float
    max_bound: float
    holds: bool
    slack: float
    eps: np.ndarray
    bound: np.ndarray


def verify_decomposition_bound(model: OcclusionModel, sources, w,
                               plan: FilterPlan | None = None,
                               slack: float = 1e-12,
                               cap: int = ENUMERATION_CAP) -> DecompositionReport:
    """Exact check that the mixture error respects its variation bound.

        eps(x, y) = E[LH occ](x, y) - sum_n m(x, n) LH f_n(x, y)
        |eps(x, y)| <= sum_n sum_t w(t) |m(x + t, n) - m(x, n)|

    Requires an enumerable support; both sides are computed exactly.
    For flat models the bound degenerates to 0 and eps vanishes.
    """
    expected = expected_local_histogram(model, sources, w, plan, method="exact", cap=cap)
    field = marginal_field(model, method="exact", cap=cap)
    m = field.probs
    per_source = [local_histogram(f, w, plan).data for f in sources]
    mix = np.zeros_like(expected.cube.data)
    for n in range(model.num_labels):
        mix += m[n][None, :, :] * per_source[n]
    eps = expected.cube.data - mix

    wrapped, weights = w.wrapped_taps()
    bound = np.zeros(model.grid.shape)
    for n in range(model.num_labels):
        for k in range(weights.shape[0]):
            shifted = np.roll(m[n], (-int(wrapped[k, 0]), -int(wrapped[k, 1])), axis=(0, 1))
            bound += weights[k] * np.abs(shifted - m[n])

    holds = bool((np.abs(eps) <= bound[None, :, :] + slack).all())
    return DecompositionReport(
        max_abs_eps=float(np.abs(eps).max()),
        max_bound=float(bound.max()),
        holds=holds,
        slack=slack,
        eps=eps,
        bound=bound,
    )


def is_translation_invariant(model: OcclusionModel, tol: float = 1e-12,
                             cap: int = ENUMERATION_CAP) -> bool:
    """Exact support check: P(T^s phi) == P(phi) for every shift s."""
    if isinstance(model, (IIDSpinnerModel, ClassTableModel)):
        return True
    table = model.pdf_table(cap)
    for a in range(model.grid.width):
        for b in range(model.grid.height):
            if a == 0 and b == 0:
                continue
            for labels, p in table.support(cap):
                q = table.prob_of(np.roll(labels, (a, b), axis=(0, 1)))
                if abs(p - q) > tol:
                    return False
    return True
