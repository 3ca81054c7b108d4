"""Vertical phenotypes, entropy and the layerwise convexity harness.

Depth phenotypes (mean, variance, quantiles, internal energy of the height
marginal) are evaluated on probability measures; Shannon entropy runs on the
gridded pipeline since atomic measures carry no density. The convexity
harness compares a functional at the layerwise barycenter to the weighted
mean of its values at the samples: a nonnegative gap is the convexity
certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidExponent, InvalidQuantile, NotProbability
from .layerwise import lw_barycenter
from .measures import AtomicMeasure, GriddedMeasure, from_grid, normalize, vertical_marginal
from .ot1d import check_weights

__all__ = [
    "EntropyReport",
    "ConvexityReport",
    "shannon_entropy",
    "vertical_mean",
    "vertical_variance",
    "vertical_internal_energy",
    "vertical_quantile",
    "convexity_check",
    "bin_to_grid",
    "finest_common_grid",
    "FUNCTIONAL_NAMES",
]

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class EntropyReport:
    """Decomposition total = layer_integral + vertical, exact up to float."""

    total: float
    layer_integral: float
    vertical: float


@dataclass(frozen=True)
class ConvexityReport:
    functional: str
    value_at_barycenter: float
    mean_of_values: float

    @property
    def gap(self) -> float:
        return self.mean_of_values - self.value_at_barycenter


def _require_probability(total: float):
    if abs(total - 1.0) > _PROB_TOL:
        raise NotProbability(f"measure has mass {total}, expected 1")


def _xlogx(f: np.ndarray) -> np.ndarray:
    # standard convention 0 log 0 = 0
    out = np.zeros_like(f)
    mask = f > 0
    out[mask] = f[mask] * np.log(f[mask])
    return out


def shannon_entropy(g: GriddedMeasure) -> EntropyReport:
    """Integral of f log f, decomposed into layer and vertical terms.

    The layer term integrates the entropy of the horizontal conditionals
    against the height marginal; the vertical term is the entropy of the
    marginal density itself.
    """
    _require_probability(g.total_mass)
    vols = g.cell_volumes()
    total = float(np.sum(_xlogx(g.density) * vols))

    dy = np.diff(g.vertical_edges)
    fv = g.vertical_density()
    vertical = float(np.dot(_xlogx(fv), dy))

    if g.dim == 0:
        layer = 0.0
    else:
        harea = np.ones(())
        for a in reversed(g.axes):
            harea = np.multiply.outer(np.diff(a), harea)
        layer = 0.0
        for iy in range(dy.size):
            if fv[iy] <= 0:
                continue
            cond = g.density[..., iy] / fv[iy]
            s_cond = float(np.sum(_xlogx(cond) * harea))
            layer += s_cond * fv[iy] * dy[iy]
    return EntropyReport(total, float(layer), vertical)


def vertical_mean(mu: AtomicMeasure) -> float:
    _require_probability(mu.total_mass)
    return float(np.dot(mu.w, mu.y))


def vertical_variance(mu: AtomicMeasure) -> float:
    _require_probability(mu.total_mass)
    ybar = float(np.dot(mu.w, mu.y))
    return float(np.dot(mu.w, (mu.y - ybar) ** 2))


def vertical_internal_energy(g: GriddedMeasure, r: float) -> float:
    """Integral of (f^V)^r over heights, for exponents r >= 1."""
    if r < 1:
        raise InvalidExponent(f"exponent must be >= 1, got {r}")
    _require_probability(g.total_mass)
    fv = g.vertical_density()
    return float(np.dot(fv**r, np.diff(g.vertical_edges)))


def vertical_quantile(mu: AtomicMeasure, l: float) -> float:
    """Height quantile q(l); l=1 is the rooting depth, l=0.87 the
    conventional depth phenotype."""
    _require_probability(mu.total_mass)
    if not 0.0 < l <= 1.0:
        raise InvalidQuantile(f"level must lie in (0, 1], got {l}")
    return vertical_marginal(mu).quantile(l)


def finest_common_grid(grids):
    """Per-axis union of all cell edges across the given grids."""
    grids = list(grids)
    dims = {g.dim for g in grids}
    if len(dims) > 1:
        raise ValueError(f"mixed grid dimensions {sorted(dims)}")
    d = dims.pop()
    axes = tuple(
        np.unique(np.concatenate([np.asarray(g.axes[k]) for g in grids])) for k in range(d)
    )
    vertical = np.unique(np.concatenate([np.asarray(g.vertical_edges) for g in grids]))
    return axes, vertical


def bin_to_grid(mu: AtomicMeasure, axes, vertical_edges) -> GriddedMeasure:
    """Histogram an atomic measure onto a grid; cells are [e_k, e_{k+1})
    with the last cell closed. Atoms must lie inside the grid span."""
    axes = tuple(np.asarray(a, dtype=np.float64) for a in axes)
    vertical_edges = np.asarray(vertical_edges, dtype=np.float64)
    coords = [mu.x[:, k] for k in range(mu.dim)] + [mu.y]
    all_edges = list(axes) + [vertical_edges]
    idx = []
    for c, e in zip(coords, all_edges):
        if np.any(c < e[0] - 1e-9) or np.any(c > e[-1] + 1e-9):
            raise ValueError("atom outside the grid span")
        k = np.clip(np.searchsorted(e, c, side="right") - 1, 0, e.size - 2)
        idx.append(k)
    shape = tuple(e.size - 1 for e in all_edges)
    mass = np.zeros(shape)
    np.add.at(mass, tuple(idx), mu.w)
    g = GriddedMeasure(axes, vertical_edges, np.ones(shape))
    return GriddedMeasure(axes, vertical_edges, mass / g.cell_volumes())


FUNCTIONAL_NAMES = ("entropy", "vmean", "vvar", "venergy:r", "vq:l")


def _parse_functional(name: str):
    if name == "entropy":
        return "entropy", None
    if name == "vmean":
        return "vmean", None
    if name == "vvar":
        return "vvar", None
    if name.startswith("venergy:"):
        r = float(name.split(":", 1)[1])
        if r < 1:
            raise InvalidExponent(f"exponent must be >= 1, got {r}")
        return "venergy", r
    if name.startswith("vq:"):
        l = float(name.split(":", 1)[1])
        if not 0.0 < l <= 1.0:
            raise InvalidQuantile(f"level must lie in (0, 1], got {l}")
        return "vq", l
    raise ValueError(f"unknown functional {name!r}; known: {', '.join(FUNCTIONAL_NAMES)}")


def convexity_check(functional: str, measures, lam) -> ConvexityReport:
    """Evaluate a registered functional at the layerwise barycenter and at
    the samples; a gap >= 0 witnesses layerwise convexity.

    ``entropy`` and ``venergy:r`` run on gridded inputs: the barycenter of
    the atomized grids is re-binned onto the finest common grid (per-axis
    union of input edges) before evaluation.
    """
    kind, param = _parse_functional(functional)
    measures = list(measures)
    lam = check_weights(lam, len(measures))

    if kind in ("entropy", "venergy"):
        if not all(isinstance(g, GriddedMeasure) for g in measures):
            raise ValueError(f"{functional} requires gridded inputs")
        atomics = [normalize(from_grid(g)) for g in measures]
        bar = lw_barycenter(atomics, lam)
        axes, vertical = finest_common_grid(measures)
        binned = bin_to_grid(bar, axes, vertical)
        if kind == "entropy":
            value = shannon_entropy(binned).total
            values = [shannon_entropy(g).total for g in measures]
        else:
            value = vertical_internal_energy(binned, param)
            values = [vertical_internal_energy(g, param) for g in measures]
    else:
        atomics = [
            normalize(from_grid(mu)) if isinstance(mu, GriddedMeasure) else normalize(mu)
            for mu in measures
        ]
        bar = lw_barycenter(atomics, lam)
        if kind == "vmean":
            fn = vertical_mean
        elif kind == "vvar":
            fn = vertical_variance
        else:
            fn = lambda m: vertical_quantile(m, param)
        value = fn(bar)
        values = [fn(mu) for mu in atomics]

    mean = float(np.dot(lam, values))
    return ConvexityReport(functional, float(value), mean)
