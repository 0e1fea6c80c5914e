"""Composite texture models: expansions and overlays.

An expansion scatters random blobs at the active points of a seed label
map; the result is the binary map covered by the union of placed blobs.
An overlay merges two models through an independent per-pixel selector,
relabeling the second model's labels above the first's.

Both constructions preserve the properties that make mixture analysis
work: an expansion of a translation-invariant seed is translation
invariant, and when blob placements cannot collide the expansion's
marginal field is the convolution of the seed's field with the blob
coverage field.  Overlay marginals factor through the selector.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .grid import Grid, LabelMap
from .occlusion import (ENUMERATION_CAP, MASS_TOL, EnumerationCapError,
                        IIDSpinnerModel, OcclusionModel, TableModel, _check_cap)

_TAG_BLOB_PICK = 0xB10B
_TAG_EXP_SEED = 0xE59
_TAG_EXP_BLOB = 0xEB0
_TAG_OV_BG = 0x0F9
_TAG_OV_FG = 0x0FA
_TAG_OV_SEL = 0x0FB
_TAG_DISJ = 0xD15


def _canonical_blob(grid: Grid, offsets) -> np.ndarray:
    """Wrap offsets onto the grid, deduplicate, sort lexicographically."""
    arr = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("blobs must be nonempty offset sets")
    arr = arr.copy()
    arr[:, 0] %= grid.width
    arr[:, 1] %= grid.height
    uniq = np.unique(arr, axis=0)
    return np.ascontiguousarray(uniq)


class BlobDistribution:
    """A distribution over finite offset sets on a grid."""

    grid: Grid

    def sample_offsets(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def blob_support(self) -> list[tuple[np.ndarray, float]]:
        """All (offsets, probability) pairs."""
        raise NotImplementedError


class BlobTable(BlobDistribution):
    """Explicit finite blob distribution."""

    def __init__(self, grid: Grid, blobs, probs):
        probs = np.ascontiguousarray(probs, dtype=np.float64)
        blobs = [_canonical_blob(grid, b) for b in blobs]
        if len(blobs) == 0:
            raise ValueError("need at least one blob")
        if probs.shape != (len(blobs),):
            raise ValueError("need one probability per blob")
        if probs.min() < 0.0 or abs(math.fsum(probs.tolist()) - 1.0) > MASS_TOL:
            raise ValueError(f"blob probabilities must be nonnegative with mass 1 within {MASS_TOL}")
        probs.flags.writeable = False
        self.grid = grid
        self.blobs = blobs
        self.probs = probs
        self._cum = np.cumsum(probs)

    def sample_offsets(self, seed: int) -> np.ndarray:
        u = rng.uniform(rng.derive(seed, _TAG_BLOB_PICK))
        i = min(int(np.searchsorted(self._cum, u, side="right")), len(self.blobs) - 1)
        return self.blobs[i]

    def blob_support(self) -> list[tuple[np.ndarray, float]]:
        return [(b, float(p)) for b, p in zip(self.blobs, self.probs)]


def disk_blob_offsets(radius: int) -> np.ndarray:
    """Offsets with a^2 + b^2 <= radius^2 (the origin included)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    out = [(a, b)
           for a in range(-radius, radius + 1)
           for b in range(-radius, radius + 1)
           if a * a + b * b <= radius * radius]
    return np.asarray(out, dtype=np.int64)


class DiskBlobs(BlobDistribution):
    """Solid disks with a discrete radius distribution."""

    def __init__(self, grid: Grid, radii, probs):
        self.radii = tuple(int(r) for r in radii)
        if not self.radii:
            raise ValueError("need at least one radius")
        self._table = BlobTable(grid, [disk_blob_offsets(r) for r in self.radii], probs)
        self.grid = grid
        self.probs = self._table.probs

    def sample_offsets(self, seed: int) -> np.ndarray:
        return self._table.sample_offsets(seed)

    def blob_support(self) -> list[tuple[np.ndarray, float]]:
        return self._table.blob_support()


def _paint_union(grid: Grid, centers, blob_arrays) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=np.int32)
    for (ca, cb), offs in zip(centers, blob_arrays):
        out[(ca + offs[:, 0]) % grid.width, (cb + offs[:, 1]) % grid.height] = 1
    return out


def expand_label_map(phi: LabelMap, blobs) -> LabelMap:
    """Replace each active point of a binary map with its own blob.

    blobs maps grid points to offset arrays: either a mapping keyed by
    (a, b) tuples or a sequence indexed by flat pixel index.  Entries at
    inactive points are ignored and may be missing (mapping) or None.
    """
    if phi.num_labels != 2:
        raise ValueError("expansion needs a binary label map")
    grid = phi.grid
    centers = np.argwhere(phi.labels == 1)
    chosen = []
    for ca, cb in centers:
        if isinstance(blobs, dict):
            try:
                offs = blobs[(int(ca), int(cb))]
            except KeyError:
                raise ValueError(f"no blob supplied for active point ({ca}, {cb})") from None
        else:
            offs = blobs[grid.flat_index((ca, cb))]
        if offs is None:
            raise ValueError(f"no blob supplied for active point ({ca}, {cb})")
        chosen.append(_canonical_blob(grid, offs))
    return LabelMap(grid, 2, _paint_union(grid, centers, chosen))


class ExpansionModel(OcclusionModel):
    """Blobs drawn independently at each active seed point, then unioned.

    The seed model must be binary.  Blob draws use one substream per grid
    point, so samples are independent of center enumeration order.
    """

    def __init__(self, seed_model: OcclusionModel, blob_dist: BlobDistribution):
        if seed_model.num_labels != 2:
            raise ValueError("expansion seed model must be binary")
        if seed_model.grid != blob_dist.grid:
            raise ValueError("seed model and blob distribution grids differ")
        self.seed_model = seed_model
        self.blob_dist = blob_dist
        self.grid = seed_model.grid
        self.num_labels = 2

    def _draw(self, seed: int):
        phi = self.seed_model.sample(rng.derive(seed, _TAG_EXP_SEED))
        centers = np.argwhere(phi.labels == 1)
        blobs = [self.blob_dist.sample_offsets(
            rng.derive(seed, _TAG_EXP_BLOB, self.grid.flat_index((ca, cb))))
            for ca, cb in centers]
        return phi, centers, blobs

    def sample(self, seed: int) -> LabelMap:
        _, centers, blobs = self._draw(seed)
        return LabelMap(self.grid, 2, _paint_union(self.grid, centers, blobs))

    def support_size(self):
        seed_size = self.seed_model.support_size()
        if seed_size is None or seed_size > ENUMERATION_CAP:
            return None
        nblobs = len(self.blob_dist.blob_support())
        total = 0
        for labels, _ in self.seed_model.support():
            total += nblobs ** int((labels == 1).sum())
            if total > 100 * ENUMERATION_CAP:
                return None
        return total

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> TableModel:
        size = self.support_size()
        _check_cap(size, cap)
        blob_rows = self.blob_dist.blob_support()
        rows = []
        for labels, p_seed in self.seed_model.support(cap):
            centers = np.argwhere(labels == 1)
            k = centers.shape[0]
            for pick in itertools.product(range(len(blob_rows)), repeat=k):
                prob = p_seed
                chosen = []
                for idx in pick:
                    offs, p_blob = blob_rows[idx]
                    prob *= p_blob
                    chosen.append(offs)
                rows.append((_paint_union(self.grid, centers, chosen), prob))
        return TableModel.from_rows(self.grid, 2, rows)

    def marginal_probs(self):
        """Closed form for iid seeds: blob draws at distinct centers are
        independent, so the miss probability at a pixel is a product over
        potential centers.  Constant across pixels, hence flat."""
        if not isinstance(self.seed_model, IIDSpinnerModel):
            return None
        rho = float(self.seed_model.probs[1])
        coverage = np.zeros(self.grid.shape)
        for offs, p in self.blob_dist.blob_support():
            coverage[offs[:, 0], offs[:, 1]] += p
        lam1 = 1.0 - float(np.prod(1.0 - rho * coverage))
        out = np.empty((2,) + self.grid.shape)
        out[0] = 1.0 - lam1
        out[1] = lam1
        return out


def sample_expansion(model: ExpansionModel, seed: int) -> LabelMap:
    return model.sample(seed)


def expansion_pdf(model: ExpansionModel, cap: int = ENUMERATION_CAP) -> TableModel:
    """The expansion's distribution as an explicit table (exact)."""
    return model.pdf_table(cap)


@dataclass(frozen=True)
class DisjointnessReport:
    """Whether distinct centers' placed blobs can ever overlap.

    exhaustive verdicts are proofs over the support; sampled verdicts
    only witness violations (disjoint=True after sampling means none was
    found in `trials` draws, not a proof).
    """

    disjoint: bool
    method: str
    trials: int | None = None
    violation: tuple | None = None


def _blob_pairs_collide(grid: Grid, delta, b1: np.ndarray, b2: np.ndarray) -> bool:
    da, db = delta
    s1 = {(int(a), int(b)) for a, b in b1}
    for a, b in b2:
        if ((int(a) + da) % grid.width, (int(b) + db) % grid.height) in s1:
            return True
    return False


def check_effective_disjointness(model: ExpansionModel, mode: str = "exhaustive",
                                 trials: int = 1000, seed: int = 0,
                                 cap: int = ENUMERATION_CAP) -> DisjointnessReport:
    """Can two active centers ever place overlapping blobs?

    exhaustive mode enumerates the center differences that occur with
    positive probability (all nonzero differences for an iid seed with
    positive density, otherwise differences over the seed support) and
    tests every blob pair against each; this proves or refutes
    disjointness.  sampled mode paints `trials` draws with counts and
    reports the first double-covered pixel.
    """
    grid = model.grid
    blob_rows = model.blob_dist.blob_support()
    if mode == "exhaustive":
        deltas: set[tuple[int, int]] = set()
        if isinstance(model.seed_model, IIDSpinnerModel):
            if float(model.seed_model.probs[1]) > 0.0 and grid.size > 1:
                deltas = {(a, b) for a in range(grid.width) for b in range(grid.height)
                          if (a, b) != (0, 0)}
        else:
            size = model.seed_model.support_size()
            _check_cap(size, cap)
            for labels, p in model.seed_model.support(cap):
                if p <= 0.0:
                    continue
                centers = np.argwhere(labels == 1)
                for i in range(centers.shape[0]):
                    for j in range(centers.shape[0]):
                        if i != j:
                            d = ((int(centers[j, 0] - centers[i, 0])) % grid.width,
                                 (int(centers[j, 1] - centers[i, 1])) % grid.height)
                            deltas.add(d)
        for delta in sorted(deltas):
            for i, (b1, p1) in enumerate(blob_rows):
                if p1 <= 0.0:
                    continue
                for j, (b2, p2) in enumerate(blob_rows):
                    if p2 <= 0.0:
                        continue
                    if _blob_pairs_collide(grid, delta, b1, b2):
                        return DisjointnessReport(False, "exhaustive",
                                                  violation=(delta, i, j))
        return DisjointnessReport(True, "exhaustive")
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    for t in range(trials):
        _, centers, blobs = model._draw(rng.derive(seed, _TAG_DISJ, t))
        counts = np.zeros(grid.shape, dtype=np.int64)
        for (ca, cb), offs in zip(centers, blobs):
            counts[(ca + offs[:, 0]) % grid.width, (cb + offs[:, 1]) % grid.height] += 1
        if counts.max() > 1:
            where = np.argwhere(counts > 1)[0]
            return DisjointnessReport(False, "sampled", trials=t + 1,
                                      violation=(int(where[0]), int(where[1])))
    return DisjointnessReport(True, "sampled", trials=trials)


def disjoint_mean_field(model: ExpansionModel, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Label-1 marginal predicted by the convolution identity.

    Valid exactly when blob placements cannot collide: the expansion's
    coverage field is then the cyclic convolution of the seed's label-1
    marginal with the mean blob indicator.  Computed by direct summation.
    """
    from .occlusion import marginal_field
    seed_field = marginal_field(model.seed_model).probs[1]
    coverage = np.zeros(model.grid.shape)
    for offs, p in model.blob_dist.blob_support():
        coverage[offs[:, 0], offs[:, 1]] += p
    out = np.zeros(model.grid.shape)
    for a in range(model.grid.width):
        for b in range(model.grid.height):
            if seed_field[a, b] != 0.0:
                out += seed_field[a, b] * np.roll(coverage, (a, b), axis=(0, 1))
    return out


def overlay_label_map(background: LabelMap, foreground: LabelMap,
                      selector: LabelMap) -> LabelMap:
    """Merge two label maps through a binary selector.

    Where the selector is 0 the background label shows; where it is 1 the
    foreground label shows, shifted up by the background label count so
    the two alphabets stay distinct.
    """
    grid = background.grid
    if foreground.grid != grid or selector.grid != grid:
        raise ValueError("label map grids differ")
    if selector.num_labels != 2:
        raise ValueError("selector must be binary")
    n0 = background.num_labels
    merged = np.where(selector.labels == 0, background.labels,
                      foreground.labels + n0)
    return LabelMap(grid, n0 + foreground.num_labels, merged)


class OverlayModel(OcclusionModel):
    """Independent background, foreground, and binary selector models."""

    def __init__(self, background: OcclusionModel, foreground: OcclusionModel,
                 selector: OcclusionModel):
        if background.grid != foreground.grid or background.grid != selector.grid:
            raise ValueError("overlay component grids differ")
        if selector.num_labels != 2:
            raise ValueError("overlay selector must be binary")
        self.background = background
        self.foreground = foreground
        self.selector = selector
        self.grid = background.grid
        self.num_labels = background.num_labels + foreground.num_labels

    def sample(self, seed: int) -> LabelMap:
        phi = self.background.sample(rng.derive(seed, _TAG_OV_BG))
        psi = self.foreground.sample(rng.derive(seed, _TAG_OV_FG))
        sel = self.selector.sample(rng.derive(seed, _TAG_OV_SEL))
        return overlay_label_map(phi, psi, sel)

    def support_size(self):
        sizes = [self.background.support_size(), self.foreground.support_size(),
                 self.selector.support_size()]
        if any(s is None for s in sizes):
            return None
        return sizes[0] * sizes[1] * sizes[2]

    def pdf_table(self, cap: int = ENUMERATION_CAP) -> TableModel:
        _check_cap(self.support_size(), cap)
        n0 = self.background.num_labels
        rows = []
        for phi, p_bg in self.background.support(cap):
            for psi, p_fg in self.foreground.support(cap):
                for sel, p_sel in self.selector.support(cap):
                    merged = np.where(sel == 0, phi, psi + n0)
                    rows.append((merged, p_bg * p_fg * p_sel))
        return TableModel.from_rows(self.grid, self.num_labels, rows)

    def marginal_probs(self):
        """Product form: the composite's label-n probability factors into
        the child marginal times the selector marginal, by independence."""
        m_bg = self.background.marginal_probs()
        m_fg = self.foreground.marginal_probs()
        m_sel = self.selector.marginal_probs()
        if m_bg is None or m_fg is None or m_sel is None:
            return None
        out = np.empty((self.num_labels,) + self.grid.shape)
        out[:self.background.num_labels] = m_bg * m_sel[0][None, :, :]
        out[self.background.num_labels:] = m_fg * m_sel[1][None, :, :]
        return out


def overlay_pdf(model: OverlayModel, cap: int = ENUMERATION_CAP) -> TableModel:
    """The overlay's distribution as an explicit table (exact)."""
    return model.pdf_table(cap)
