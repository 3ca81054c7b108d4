"""Measures on R^d x R>=0: atomic, gridded and layered representations.

The atomic representation is the universal computational one: a finite set of
weighted points (x, y, w) with horizontal position x in R^d, height y >= 0
and mass w > 0. Grids exist for ingestion and for density-based functionals;
layered measures hold the vertically rescaled form used by the layerwise
transport machinery.

Conventions fixed here and relied on everywhere else:

* CDFs of height marginals are right-continuous; quantile functions are the
  left-continuous generalized inverses, so q(l) <= y iff l <= F(y).
* An atom of mass m at height y occupies the half-open cumulative interval
  (F(y-), F(y)] of the rescaled coordinate.
* Duplicate atoms (identical x and y) are merged at construction by summing
  weights; no epsilon-snapping is ever applied.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMeasure, InvalidQuantile

__all__ = [
    "AtomicMeasure",
    "GriddedMeasure",
    "VerticalProfile",
    "LayeredMeasure",
    "from_grid",
    "vertical_marginal",
    "normalize",
    "load_atoms_csv",
    "load_grid_json",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite weighted point set in R^d x R>=0.

    Atoms are stored in canonical order (sorted by height, then horizontal
    coordinates) with exact duplicates merged, so two constructions of the
    same measure produce identical arrays.
    """

    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)
    w: np.ndarray  # (n,)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).ravel()
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if x.shape[0] != y.shape[0] or y.shape[0] != w.shape[0]:
            raise ValueError("x, y, w must have matching lengths")
        if x.shape[0] == 0:
            raise EmptyMeasure("measure has no atoms")
        if x.shape[1] < 1:
            raise ValueError("horizontal dimension must be >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise ValueError("coordinates and weights must be finite")
        if np.any(y < 0):
            raise ValueError("heights must be >= 0")
        if np.any(w <= 0):
            raise ValueError("weights must be > 0")

        order = np.lexsort(tuple(x[:, k] for k in range(x.shape[1] - 1, -1, -1)) + (y,))
        x, y, w = x[order], y[order], w[order]
        rows = np.column_stack([y, x])
        changed = np.ones(len(y), dtype=bool)
        changed[1:] = np.any(rows[1:] != rows[:-1], axis=1)
        group = np.cumsum(changed) - 1
        n = group[-1] + 1
        keep = np.flatnonzero(changed)
        wm = np.zeros(n)
        np.add.at(wm, group, w)

        object.__setattr__(self, "x", _readonly(x[keep]))
        object.__setattr__(self, "y", _readonly(y[keep]))
        object.__setattr__(self, "w", _readonly(wm))

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.y.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    def atoms(self):
        """Iterate (x vector, y, w) triples in canonical order."""
        for k in range(self.n_atoms):
            yield self.x[k], float(self.y[k]), float(self.w[k])

    def translate(self, dx=None, dy: float = 0.0) -> "AtomicMeasure":
        x = self.x if dx is None else self.x + np.asarray(dx, dtype=np.float64)
        return AtomicMeasure(x, self.y + dy, self.w)


@dataclass(frozen=True, eq=False)
class GriddedMeasure:
    """Piecewise-constant density on a product grid.

    ``axes`` lists the horizontal cell edges per axis (possibly empty for a
    vertical-only density), ``vertical_edges`` the height edges. ``density``
    has shape (n_1, ..., n_d, n_y), mass per unit volume, all >= 0.
    """

    axes: tuple
    vertical_edges: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        axes = tuple(_readonly(np.asarray(a, dtype=np.float64).ravel()) for a in self.axes)
        ve = _readonly(np.asarray(self.vertical_edges, dtype=np.float64).ravel())
        dens = np.asarray(self.density, dtype=np.float64)
        for a in axes + (ve,):
            if a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("cell edges must be strictly increasing with >= 2 entries")
        shape = tuple(a.size - 1 for a in axes) + (ve.size - 1,)
        if dens.shape != shape:
            raise ValueError(f"density shape {dens.shape} does not match grid {shape}")
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise ValueError("densities must be finite and >= 0")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "vertical_edges", ve)
        object.__setattr__(self, "density", _readonly(dens))
        if self.total_mass <= 0:
            raise EmptyMeasure("grid has zero total mass")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def cell_volumes(self) -> np.ndarray:
        vol = np.diff(self.vertical_edges)
        for a in reversed(self.axes):
            vol = np.multiply.outer(np.diff(a), vol)
        return vol

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.density * self.cell_volumes()))

    def vertical_density(self) -> np.ndarray:
        """Density of the height marginal, one value per vertical cell."""
        if self.dim == 0:
            return np.array(self.density, dtype=np.float64)
        harea = np.ones(())
        for a in reversed(self.axes):
            harea = np.multiply.outer(np.diff(a), harea)
        return np.tensordot(self.density, harea, axes=(tuple(range(self.dim)), tuple(range(self.dim))))


@dataclass(frozen=True, eq=False)
class VerticalProfile:
    """Height marginal as a step CDF with exact quantile function."""

    heights: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64).ravel()
        m = np.asarray(self.masses, dtype=np.float64).ravel()
        if h.size == 0:
            raise EmptyMeasure("profile has no atoms")
        if h.size != m.size:
            raise ValueError("heights and masses must have matching lengths")
        if np.any(np.diff(h) <= 0):
            raise ValueError("heights must be strictly increasing")
        if np.any(m <= 0) or not np.all(np.isfinite(m)) or not np.all(np.isfinite(h)):
            raise ValueError("masses must be finite and > 0")
        object.__setattr__(self, "heights", _readonly(h))
        object.__setattr__(self, "masses", _readonly(m))
        cum = np.cumsum(m)
        total = cum[-1]
        cum = cum / total
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", _readonly(cum))
        object.__setattr__(self, "_total", float(total))

    @property
    def total_mass(self) -> float:
        return self._total

    @property
    def cumulative(self) -> np.ndarray:
        """Normalized cumulative masses F(h_1) < ... < F(h_k) = 1."""
        return self._cum

    def cdf(self, y):
        """Right-continuous F(y) = (1/|mu|) sum of masses at heights <= y."""
        y = np.asarray(y, dtype=np.float64)
        idx = np.searchsorted(self.heights, y, side="right")
        padded = np.concatenate(([0.0], self._cum))
        return padded[idx] if y.ndim else float(padded[idx])

    def quantile(self, l):
        """Left-continuous inverse of the CDF, defined on (0, 1]."""
        l = np.asarray(l, dtype=np.float64)
        if np.any(l <= 0) or np.any(l > 1):
            raise InvalidQuantile("quantile level must lie in (0, 1]")
        idx = np.searchsorted(self._cum, l, side="left")
        return self.heights[idx] if l.ndim else float(self.heights[idx])

    def as_discrete1d(self):
        from .ot1d import Discrete1D

        return Discrete1D.from_cumulative(self.heights, self._cum)


@dataclass(frozen=True, eq=False)
class LayeredMeasure:
    """Rescaled measure: per l-interval, a horizontal probability slice.

    Breakpoints partition [0, 1]; slice j lives on (b_{j-1}, b_j]. Adjacent
    intervals with identical slices are merged at construction.
    """

    breakpoints: np.ndarray
    slices: tuple

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=np.float64).ravel()
        slices = tuple(self.slices)
        if b.size < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if len(slices) != b.size - 1:
            raise ValueError("need one slice per interval")
        keep = [0]
        for j in range(1, len(slices)):
            a, c = slices[j - 1], slices[j]
            same = (
                a.x.shape == c.x.shape
                and np.array_equal(a.x, c.x)
                and np.array_equal(a.w, c.w)
            )
            if not same:
                keep.append(j)
        if len(keep) < len(slices):
            slices = tuple(slices[j] for j in keep)
            b = np.concatenate([b[np.asarray(keep)], [1.0]])
        object.__setattr__(self, "breakpoints", _readonly(b))
        object.__setattr__(self, "slices", slices)

    @property
    def n_intervals(self) -> int:
        return len(self.slices)

    def slice_at(self, l: float):
        """Slice on the interval containing l, for l in (0, 1]."""
        if not 0.0 < l <= 1.0:
            raise InvalidQuantile("layer level must lie in (0, 1]")
        idx = int(np.searchsorted(self.breakpoints, l, side="left")) - 1
        return self.slices[idx]


def vertical_marginal(mu: AtomicMeasure) -> VerticalProfile:
    """Pushforward of mu onto the height coordinate."""
    heights, inverse = np.unique(mu.y, return_inverse=True)
    masses = np.zeros(heights.size)
    np.add.at(masses, inverse, mu.w)
    return VerticalProfile(heights, masses)


def normalize(mu: AtomicMeasure) -> AtomicMeasure:
    """Scale weights so the total mass is 1; identity if already normalized."""
    total = mu.total_mass
    if total <= 0:
        raise EmptyMeasure("cannot normalize zero-mass measure")
    if total == 1.0:
        return mu
    return AtomicMeasure(mu.x, mu.y, mu.w / total)


def from_grid(g: GriddedMeasure) -> AtomicMeasure:
    """One atom per nonzero cell, at the cell center, with its exact mass."""
    if g.dim < 1:
        raise ValueError("from_grid needs at least one horizontal axis")
    centers = [0.5 * (a[:-1] + a[1:]) for a in g.axes]
    vcenters = 0.5 * (g.vertical_edges[:-1] + g.vertical_edges[1:])
    mesh = np.meshgrid(*centers, vcenters, indexing="ij")
    weights = (g.density * g.cell_volumes()).ravel()
    mask = weights > 0
    if not np.any(mask):
        raise EmptyMeasure("all grid cells are empty")
    x = np.column_stack([m.ravel()[mask] for m in mesh[:-1]])
    y = mesh[-1].ravel()[mask]
    return AtomicMeasure(x, y, weights[mask])


def load_atoms_csv(path) -> AtomicMeasure:
    """Read atoms from CSV with header x1,...,xd,y,w (UTF-8, decimal point)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty CSV")
        header = [c.strip() for c in header]
        d = len(header) - 2
        expected = [f"x{k}" for k in range(1, d + 1)] + ["y", "w"]
        if d < 1 or header != expected:
            raise ValueError(f"{path}: header must be x1,...,xd,y,w, got {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise EmptyMeasure(f"{path}: no atoms")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[1] != d + 2:
        raise ValueError(f"{path}: rows must have {d + 2} columns")
    return AtomicMeasure(arr[:, :d], arr[:, d], arr[:, d + 1])


def save_atoms_csv(mu: AtomicMeasure, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k}" for k in range(1, mu.dim + 1)] + ["y", "w"])
        for xv, yv, wv in mu.atoms():
            writer.writerow([repr(float(v)) for v in xv] + [repr(yv), repr(wv)])


def load_grid_json(path) -> GriddedMeasure:
    """Read a grid document {axes: [[...],...], vertical_edges: [...], density: ...}."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return grid_from_obj(obj)


def grid_from_obj(obj) -> GriddedMeasure:
    try:
        axes = obj["axes"]
        vertical = obj["vertical_edges"]
        density = obj["density"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"grid document missing field: {exc}") from exc
    return GriddedMeasure(tuple(np.asarray(a) for a in axes), np.asarray(vertical), np.asarray(density))
