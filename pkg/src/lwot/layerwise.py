"""Layerwise-Wasserstein distance, barycenters and couplings.

The distance between measures on R^d x R>=0 is the squared 2-Wasserstein
distance of their normalized height marginals plus the integral over levels
l in [0, 1] of the squared 2-Wasserstein distance between the horizontal
slices of the vertically rescaled measures. For atomic inputs both pieces
are piecewise constant in l, so everything reduces to exact sums over the
common refinement of cumulative breakpoints; there is no quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .discrete_ot import DiscreteMeasure, transport_lp, w_barycenter, DEFAULT_PRODUCT_CAP
from .errors import DimMismatch, UnsupportedDim
from .measures import AtomicMeasure, LayeredMeasure, VerticalProfile, normalize, vertical_marginal
from .ot1d import Discrete1D, barycenter_1d, check_weights, w2sq_1d

__all__ = [
    "LwDistanceReport",
    "RotationSearchResult",
    "rescale",
    "lw_distance",
    "lw_distance_extended",
    "lw_barycenter",
    "lw_barycenter_objective",
    "symmetrized_distance",
    "symmetrized_barycenter",
    "layerwise_coupling",
    "LayerwiseCoupling",
    "rotate",
]


@dataclass(frozen=True)
class LwDistanceReport:
    """Decomposed squared distance; total_sq = vertical_sq + horizontal_sq."""

    total_sq: float
    vertical_sq: float
    horizontal_sq: float
    per_interval: tuple  # ((l_lo, l_hi), slice cost) per refinement interval


@dataclass(frozen=True)
class RotationSearchResult:
    angle: float
    distance_sq: float
    trace: tuple  # probed (angle, value) pairs


def rescale(mu: AtomicMeasure):
    """Vertical rescaling: height marginal plus the layered conditional slices.

    The layered measure's breakpoints are the cumulative masses of the height
    marginal; the slice on (F(y-), F(y)] is the normalized horizontal
    conditional of mu at height y. Exact for atomic measures.
    """
    profile = vertical_marginal(mu)
    # atoms are canonically sorted by height, so groups are contiguous
    boundaries = np.searchsorted(mu.y, profile.heights, side="left")
    boundaries = np.append(boundaries, mu.n_atoms)
    slices = []
    for k in range(profile.heights.size):
        lo, hi = boundaries[k], boundaries[k + 1]
        w = mu.w[lo:hi]
        slices.append(DiscreteMeasure(mu.x[lo:hi], w / np.sum(w)))
    breakpoints = np.concatenate(([0.0], profile.cumulative))
    return profile, LayeredMeasure(breakpoints, tuple(slices))


def _refinement(layered_list):
    grid = layered_list[0].breakpoints
    for lm in layered_list[1:]:
        grid = np.union1d(grid, lm.breakpoints)
    return grid


def _slice_key(s: DiscreteMeasure):
    return (s.n_atoms, s.x.tobytes(), s.w.tobytes())


def _slice_w2sq(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    if a.dim == 1:
        return w2sq_1d(Discrete1D(a.x[:, 0], a.w), Discrete1D(b.x[:, 0], b.w))
    # evaluate in a canonical argument order so the value is bitwise symmetric
    if _slice_key(b) < _slice_key(a):
        a, b = b, a
    return transport_lp(a, b).cost


def lw_distance(mu: AtomicMeasure, nu: AtomicMeasure) -> LwDistanceReport:
    """Layerwise-Wasserstein squared distance with its decomposition."""
    if mu.dim != nu.dim:
        raise DimMismatch(f"dim {mu.dim} vs {nu.dim}")
    prof_mu, lay_mu = rescale(mu)
    prof_nu, lay_nu = rescale(nu)
    vertical_sq = w2sq_1d(prof_mu.as_discrete1d(), prof_nu.as_discrete1d())

    grid = _refinement([lay_mu, lay_nu])
    pairs = [(lay_mu.slice_at(t), lay_nu.slice_at(t)) for t in grid[1:]]
    costs = parallel_map(lambda ab: _slice_w2sq(*ab), pairs)
    lengths = np.diff(grid)
    horizontal_sq = float(np.dot(lengths, costs))
    per_interval = tuple(
        ((float(grid[k]), float(grid[k + 1])), float(costs[k])) for k in range(len(costs))
    )
    return LwDistanceReport(vertical_sq + horizontal_sq, vertical_sq, horizontal_sq, per_interval)


def lw_distance_extended(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Squared distance on raw masses: adds the squared total-mass gap."""
    report = lw_distance(mu, nu)
    return report.total_sq + (mu.total_mass - nu.total_mass) ** 2


def lw_barycenter(measures, lam, cap: int = DEFAULT_PRODUCT_CAP) -> AtomicMeasure:
    """Layerwise-Wasserstein barycenter as a probability measure.

    The height marginal is the quantile-average barycenter of the normalized
    input marginals; on each interval of the common refinement of all
    rescaled breakpoints the slice is the Wasserstein barycenter of the input
    slices; heights are recovered through the averaged quantile function.
    """
    measures = [normalize(mu) for mu in measures]
    if not measures:
        raise ValueError("need at least one measure")
    lam = check_weights(lam, len(measures))
    dims = {mu.dim for mu in measures}
    if len(dims) > 1:
        raise DimMismatch(f"mixed horizontal dimensions {sorted(dims)}")

    rescaled = [rescale(mu) for mu in measures]
    profiles = [r[0] for r in rescaled]
    layered = [r[1] for r in rescaled]
    grid = _refinement(layered)
    rights = grid[1:]
    lengths = np.diff(grid)

    heights = np.zeros_like(rights)
    for coef, prof in zip(lam, profiles):
        heights += coef * prof.quantile(rights)

    slice_groups = [[lm.slice_at(t) for lm in layered] for t in rights]
    bars = parallel_map(lambda group: w_barycenter(group, lam, cap=cap), slice_groups)

    xs, ys, ws = [], [], []
    for k, bar in enumerate(bars):
        xs.append(bar.x)
        ys.append(np.full(bar.n_atoms, heights[k]))
        ws.append(bar.w * lengths[k])
    return AtomicMeasure(np.vstack(xs), np.concatenate(ys), np.concatenate(ws))


def lw_barycenter_objective(candidate: AtomicMeasure, measures, lam) -> float:
    """Weighted sum of squared layerwise distances from the candidate."""
    measures = list(measures)
    lam = check_weights(lam, len(measures))
    return float(
        sum(coef * lw_distance(candidate, mu).total_sq for coef, mu in zip(lam, measures))
    )


def rotate(mu: AtomicMeasure, angle: float) -> AtomicMeasure:
    """Rotate the horizontal coordinates of a d=2 measure by ``angle``."""
    if mu.dim != 2:
        raise UnsupportedDim("rotation requires horizontal dimension 2")
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return AtomicMeasure(mu.x @ R.T, mu.y, mu.w)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def symmetrized_distance(
    mu: AtomicMeasure,
    nu: AtomicMeasure,
    *,
    grid_k: int = 64,
    angle_tol: float = 1e-6,
) -> RotationSearchResult:
    """Distance minimized over horizontal rotations of the first argument.

    For d=1 the rotation group is trivial and the plain distance is returned.
    For d=2 a coarse grid of ``grid_k`` angles brackets the best candidate and
    golden-section search refines it to ``angle_tol`` radians.
    """
    if mu.dim != nu.dim:
        raise DimMismatch(f"dim {mu.dim} vs {nu.dim}")
    if mu.dim == 1:
        value = lw_distance(mu, nu).total_sq
        return RotationSearchResult(0.0, value, ((0.0, value),))
    if mu.dim != 2:
        raise UnsupportedDim("rotation search is defined for d in {1, 2} only")

    trace = []

    def f(theta: float) -> float:
        value = lw_distance(rotate(mu, theta), nu).total_sq
        trace.append((float(theta), float(value)))
        return value

    step = 2.0 * math.pi / grid_k
    grid_vals = [f(k * step) for k in range(grid_k)]
    best = int(np.argmin(grid_vals))
    a = (best - 1) * step
    b = (best + 1) * step

    # golden-section refinement on the winning bracket
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > angle_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    f(0.5 * (a + b))

    angle, value = min(trace, key=lambda pair: pair[1])
    return RotationSearchResult(angle % (2.0 * math.pi), value, tuple(trace))


def symmetrized_barycenter(
    measures,
    lam,
    *,
    n_starts: int = 8,
    max_iters: int = 50,
    objective_tol: float = 1e-8,
    grid_k: int = 64,
    angle_tol: float = 1e-6,
    seed: int = 0,
    cap: int = DEFAULT_PRODUCT_CAP,
):
    """Block-coordinate search for a rotation-symmetrized barycenter.

    Alternates between barycenter updates (rotations fixed) and per-measure
    rotation updates (barycenter fixed), restarted from ``n_starts`` rotation
    initializations (the first is the identity, the rest random). Local
    search only; the joint problem is nonconvex.
    """
    measures = [normalize(mu) for mu in measures]
    lam = check_weights(lam, len(measures))
    if any(mu.dim != 2 for mu in measures):
        raise UnsupportedDim("symmetrized barycenter requires horizontal dimension 2")

    rng = np.random.default_rng(seed)
    best = None
    for start in range(n_starts):
        if start == 0:
            angles = [0.0] * len(measures)
        else:
            angles = list(rng.uniform(0.0, 2.0 * math.pi, size=len(measures)))
        prev_obj = math.inf
        bar = None
        for _ in range(max_iters):
            rotated = [rotate(mu, th) for mu, th in zip(measures, angles)]
            bar = lw_barycenter(rotated, lam, cap=cap)
            obj = 0.0
            for k, mu in enumerate(measures):
                res = symmetrized_distance(mu, bar, grid_k=grid_k, angle_tol=angle_tol)
                angles[k] = res.angle
                obj += lam[k] * res.distance_sq
            if prev_obj - obj < objective_tol:
                prev_obj = min(prev_obj, obj)
                break
            prev_obj = obj
        if best is None or prev_obj < best[0]:
            best = (prev_obj, bar, tuple(angles))
    return best[1], best[2]


@dataclass(frozen=True)
class LayerwiseCoupling:
    """Monotone two-stage coupling between d=1 measures, in mass fragments."""

    source: np.ndarray  # (n, 2) columns (x, y)
    target: np.ndarray  # (n, 2)
    mass: np.ndarray    # (n,)

    @property
    def cost(self) -> float:
        d = self.source - self.target
        return float(np.dot(self.mass, np.sum(d * d, axis=1)))

    def fragments(self):
        for k in range(self.mass.size):
            yield (
                (float(self.source[k, 0]), float(self.source[k, 1])),
                (float(self.target[k, 0]), float(self.target[k, 1])),
                float(self.mass[k]),
            )


def layerwise_coupling(mu: AtomicMeasure, nu: AtomicMeasure) -> LayerwiseCoupling:
    """Monotone matching of vertical quantiles, then horizontal quantiles.

    This is the triangular (Knothe-Rosenblatt style) coupling between the
    normalized measures; for d=1 its squared-distance cost equals the
    layerwise-Wasserstein distance.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise UnsupportedDim("layerwise coupling is defined for d=1 only")
    prof_mu, lay_mu = rescale(mu)
    prof_nu, lay_nu = rescale(nu)

    grid = _refinement([lay_mu, lay_nu])
    src, tgt, mass = [], [], []
    for k in range(grid.size - 1):
        t = grid[k + 1]
        dl = grid[k + 1] - grid[k]
        ya = prof_mu.quantile(t)
        yb = prof_nu.quantile(t)
        sa = lay_mu.slice_at(t)
        sb = lay_nu.slice_at(t)
        da = Discrete1D(sa.x[:, 0], sa.w)
        db = Discrete1D(sb.x[:, 0], sb.w)
        s = np.union1d(da.cum, db.cum)
        xa = da.positions[np.searchsorted(da.cum, s, side="left")]
        xb = db.positions[np.searchsorted(db.cum, s, side="left")]
        ds = np.diff(np.concatenate(([0.0], s)))
        src.append(np.column_stack([xa, np.full(s.size, ya)]))
        tgt.append(np.column_stack([xb, np.full(s.size, yb)]))
        mass.append(dl * ds)
    return LayerwiseCoupling(np.vstack(src), np.vstack(tgt), np.concatenate(mass))
