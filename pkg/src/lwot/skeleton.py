"""Skeletal roots and skeletal root measures.

A skeletal root is a finite union of limbs: Lipschitz curves over height
intervals, realized here as polylines with strictly increasing control
heights. A skeletal root measure puts a piecewise-constant mass-per-unit-
height density on each limb. Validation classifies measures as

* strong  - no two limbs ever meet on their shared open-left domains and the
  density is positive everywhere (the support is the entire root),
* weak    - limbs may meet, but wherever they do, the mass arriving from
  below along the meeting curves vanishes (left limits are exact because the
  densities are piecewise constant), and zero-density stretches are allowed,
* invalid - a structural violation (stem/attachment rules) or positive mass
  colliding from below.

Limbs are polylines so derivatives are piecewise constant and Lipschitz
constants, arclengths, crossing detection and left limits are all exact.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .discrete_ot import DiscreteMeasure, multimarginal_lp
from .errors import (
    BoundsUnavailable,
    EmptyMeasure,
    GhostTooLarge,
    MalformedLimb,
    W3ViolationDetected,
)
from .measures import AtomicMeasure
from .ot1d import check_weights

__all__ = [
    "Limb",
    "SkeletalRoot",
    "SkeletalRootMeasure",
    "GhostLimb",
    "Coincidence",
    "ValidationReport",
    "validate",
    "to_atomic",
    "ghost",
    "skeletal_barycenter",
    "root_length",
    "root_length_bounds",
    "RootLengthBracket",
    "skeleton_from_obj",
    "skeleton_to_obj",
    "load_skeleton_json",
    "save_skeleton_json",
]

_COINCIDENCE_TOL = 1e-9
_ZERO_RATE = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Limb:
    """Polyline graph of a curve y -> x over [y_lo, y_hi]."""

    heights: np.ndarray  # (k,) strictly increasing
    points: np.ndarray   # (k, d)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64).ravel()
        p = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if h.size < 2:
            raise MalformedLimb("limb needs at least two control points")
        if p.shape[0] != h.size:
            raise MalformedLimb("heights and points must have matching lengths")
        if np.any(np.diff(h) <= 0):
            raise MalformedLimb("control heights must be strictly increasing")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(p))):
            raise MalformedLimb("control points must be finite")
        object.__setattr__(self, "heights", _freeze(h))
        object.__setattr__(self, "points", _freeze(p))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def y_lo(self) -> float:
        return float(self.heights[0])

    @property
    def y_hi(self) -> float:
        return float(self.heights[-1])

    @property
    def lipschitz(self) -> float:
        seg = np.diff(self.points, axis=0)
        dy = np.diff(self.heights)
        return float(np.max(np.linalg.norm(seg, axis=1) / dy))

    def evaluate(self, y):
        """Linear interpolation; arguments are clamped to the domain."""
        y = np.clip(np.asarray(y, dtype=np.float64), self.y_lo, self.y_hi)
        out = np.empty(y.shape + (self.dim,))
        for k in range(self.dim):
            out[..., k] = np.interp(y, self.heights, self.points[:, k])
        return out

    def arclength(self, a: float, b: float) -> float:
        """Exact polyline length of the graph between heights a and b."""
        a = max(a, self.y_lo)
        b = min(b, self.y_hi)
        if b <= a:
            return 0.0
        ys = np.unique(np.concatenate(([a, b], self.heights[(self.heights > a) & (self.heights < b)])))
        pts = self.evaluate(ys)
        dy = np.diff(ys)
        dx = np.diff(pts, axis=0)
        return float(np.sum(np.sqrt(dy**2 + np.sum(dx**2, axis=1))))


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """Mass per unit height, constant on [e_k, e_{k+1}) with last piece closed."""

    edges: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64).ravel()
        r = np.asarray(self.rates, dtype=np.float64).ravel()
        if e.size < 2 or e.size != r.size + 1:
            raise ValueError("need k+1 edges for k rates")
        if np.any(np.diff(e) <= 0):
            raise ValueError("density edges must be strictly increasing")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("rates must be finite and >= 0")
        object.__setattr__(self, "edges", _freeze(e))
        object.__setattr__(self, "rates", _freeze(r))

    @property
    def mass(self) -> float:
        return float(np.dot(self.rates, np.diff(self.edges)))

    def scaled(self, factor: float) -> "PiecewiseDensity":
        return PiecewiseDensity(self.edges, self.rates * factor)

    def rate_at(self, y: float) -> float:
        """Right-continuous evaluation; 0 outside the domain."""
        if y < self.edges[0] or y > self.edges[-1]:
            return 0.0
        idx = min(int(np.searchsorted(self.edges, y, side="right")) - 1, self.rates.size - 1)
        return float(self.rates[max(idx, 0)])

    def left_rate(self, y: float) -> float:
        """Left limit of the rate at y; 0 at or below the lower edge."""
        if y <= self.edges[0] or y > self.edges[-1]:
            return 0.0
        idx = int(np.searchsorted(self.edges, y, side="left")) - 1
        return float(self.rates[max(idx, 0)])

    def max_rate_on(self, a: float, b: float) -> float:
        """Supremum of the rate on the open interval (a, b)."""
        a = max(a, float(self.edges[0]))
        b = min(b, float(self.edges[-1]))
        if b <= a:
            return 0.0
        lo = int(np.searchsorted(self.edges, a, side="right")) - 1
        hi = int(np.searchsorted(self.edges, b, side="left"))
        lo = max(lo, 0)
        return float(np.max(self.rates[lo:hi])) if hi > lo else 0.0

    def integrate(self, a: float, b: float) -> float:
        a = max(a, float(self.edges[0]))
        b = min(b, float(self.edges[-1]))
        if b <= a:
            return 0.0
        left = np.clip(self.edges[:-1], a, b)
        right = np.clip(self.edges[1:], a, b)
        return float(np.dot(self.rates, right - left))

    def mass_median(self, a: float, b: float) -> float:
        """Height splitting the mass on [a, b] in half."""
        target = 0.5 * self.integrate(a, b)
        cuts = np.unique(np.concatenate(([a, b], self.edges[(self.edges > a) & (self.edges < b)])))
        acc = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            piece = self.integrate(lo, hi)
            if acc + piece >= target and piece > 0:
                frac = (target - acc) / piece
                return float(lo + frac * (hi - lo))
            acc += piece
        return float(b)


@dataclass(frozen=True, eq=False)
class SkeletalRoot:
    """Limbs plus attachment structure: parents[i] is the limb index limb i
    emerges from (None for the stem); the attach height is limb i's y_lo."""

    limbs: tuple
    parents: tuple
    depth: float = None

    def __post_init__(self):
        limbs = tuple(self.limbs)
        parents = tuple(self.parents)
        if not limbs:
            raise EmptyMeasure("root has no limbs")
        if len(parents) != len(limbs):
            raise ValueError("need one parent entry per limb")
        dims = {limb.dim for limb in limbs}
        if len(dims) > 1:
            raise ValueError("limbs must share one horizontal dimension")
        for i, par in enumerate(parents):
            if par is not None and not (0 <= par < i):
                raise ValueError(f"limb {i} parent must be an earlier limb index")
        depth = self.depth
        if depth is None:
            depth = max(limb.y_hi for limb in limbs)
        depth = float(depth)
        if depth <= 0 or depth + 1e-9 < max(limb.y_hi for limb in limbs):
            raise ValueError("depth must cover every limb")
        object.__setattr__(self, "limbs", limbs)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "depth", depth)

    @property
    def dim(self) -> int:
        return self.limbs[0].dim

    @property
    def n_limbs(self) -> int:
        return len(self.limbs)


@dataclass(frozen=True, eq=False)
class SkeletalRootMeasure:
    """Probability measure on a skeletal root, densities per unit height.

    Densities are rescaled at construction so the total mass is exactly 1.
    ``bounds`` optionally declares (L, U) with L <= f^V <= U on [0, depth],
    which certifies a bi-Lipschitz rescaling map; it is checked when given.
    ``labels`` carries the originating ghost index tuple per limb for
    barycenter outputs.
    """

    root: SkeletalRoot
    densities: tuple
    bounds: tuple = None
    labels: tuple = None

    def __post_init__(self):
        dens = tuple(self.densities)
        if len(dens) != self.root.n_limbs:
            raise ValueError("need one density per limb")
        for limb, d in zip(self.root.limbs, dens):
            if abs(d.edges[0] - limb.y_lo) > 1e-9 or abs(d.edges[-1] - limb.y_hi) > 1e-9:
                raise ValueError("density edges must span the limb domain")
        total = sum(d.mass for d in dens)
        if total <= 0:
            raise EmptyMeasure("measure has zero mass")
        if total != 1.0:
            dens = tuple(d.scaled(1.0 / total) for d in dens)
        object.__setattr__(self, "densities", dens)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(tuple(t) for t in self.labels))
        if self.bounds is not None:
            lo, hi = float(self.bounds[0]), float(self.bounds[1])
            if not 0 < lo <= hi:
                raise ValueError("bounds must satisfy 0 < L <= U")
            fmin, fmax = self.vertical_density_range()
            if fmin < lo - 1e-9 or fmax > hi + 1e-9:
                raise ValueError(
                    f"declared bounds ({lo}, {hi}) violated: density range ({fmin}, {fmax})"
                )
            object.__setattr__(self, "bounds", (lo, hi))

    @property
    def dim(self) -> int:
        return self.root.dim

    def with_bounds(self, lo: float, hi: float) -> "SkeletalRootMeasure":
        return SkeletalRootMeasure(self.root, self.densities, (lo, hi), self.labels)

    def _vertical_cells(self):
        edges = [np.asarray([0.0, self.root.depth])]
        edges.extend(d.edges for d in self.densities)
        grid = np.unique(np.concatenate(edges))
        grid = grid[(grid >= 0.0) & (grid <= self.root.depth)]
        if grid[0] != 0.0:
            grid = np.concatenate(([0.0], grid))
        if grid[-1] != self.root.depth:
            grid = np.concatenate((grid, [self.root.depth]))
        mids = 0.5 * (grid[:-1] + grid[1:])
        rates = np.zeros(mids.size)
        for d in self.densities:
            rates += np.array([d.rate_at(m) for m in mids])
        return grid, rates

    def vertical_density_range(self):
        """(min, max) of the height-marginal density over [0, depth]."""
        _, rates = self._vertical_cells()
        return float(np.min(rates)), float(np.max(rates))

    def cdf(self) -> "MonotoneCdf":
        grid, rates = self._vertical_cells()
        vals = np.concatenate(([0.0], np.cumsum(rates * np.diff(grid))))
        vals /= vals[-1]
        vals[-1] = 1.0
        return MonotoneCdf(grid, vals)


class MonotoneCdf:
    """Piecewise-linear CDF of a height marginal, with inverse."""

    def __init__(self, edges: np.ndarray, values: np.ndarray):
        self.edges = _freeze(edges)
        self.values = _freeze(values)
        if np.any(np.diff(values) < 0) or values[0] != 0.0 or values[-1] != 1.0:
            raise ValueError("CDF values must rise from 0 to 1")
        self.strictly_increasing = bool(np.all(np.diff(values) > 0))

    def forward(self, y):
        return np.interp(y, self.edges, self.values)

    def inverse(self, l):
        if not self.strictly_increasing:
            raise BoundsUnavailable(
                "height marginal density vanishes somewhere; rescaling is not bi-Lipschitz"
            )
        return np.interp(l, self.values, self.edges)


@dataclass(frozen=True)
class Coincidence:
    """Heights where two limbs meet: a point (y_lo == y_hi) or an interval."""

    i: int
    j: int
    kind: str  # "point" | "interval"
    y_lo: float
    y_hi: float


@dataclass(frozen=True)
class ValidationReport:
    s1_violations: tuple
    s2_violations: tuple
    crossings: tuple        # Coincidence events inside open-left overlaps
    w3_violations: tuple    # strings describing failed left-limit checks
    strength: str           # "strong" | "weak" | "invalid"

    @property
    def ok(self) -> bool:
        return self.strength != "invalid"

    def summary(self) -> str:
        lines = [f"strength: {self.strength}"]
        for name, items in (
            ("S1", self.s1_violations),
            ("S2", self.s2_violations),
            ("W3", self.w3_violations),
        ):
            for msg in items:
                lines.append(f"{name} violation: {msg}")
        for c in self.crossings:
            where = f"y={c.y_lo}" if c.kind == "point" else f"y in ({c.y_lo}, {c.y_hi}]"
            lines.append(f"limbs {c.i} and {c.j} meet ({c.kind}) at {where}")
        return "\n".join(lines)


def _segment_events(limb_a: Limb, limb_b: Limb, lo: float, hi: float):
    """Coincidence events of two limbs on [lo, hi], tolerance 1e-9 on |gap|."""
    knots = np.unique(
        np.concatenate(
            (
                [lo, hi],
                limb_a.heights[(limb_a.heights > lo) & (limb_a.heights < hi)],
                limb_b.heights[(limb_b.heights > lo) & (limb_b.heights < hi)],
            )
        )
    )
    ga = limb_a.evaluate(knots)
    gb = limb_b.evaluate(knots)
    gap = ga - gb
    norms = np.linalg.norm(gap, axis=1)
    tol = _COINCIDENCE_TOL

    intervals = []
    points = []
    for k in range(knots.size - 1):
        u, v = float(knots[k]), float(knots[k + 1])
        hu, hv = gap[k], gap[k + 1]
        if norms[k] <= tol and norms[k + 1] <= tol:
            if intervals and abs(intervals[-1][1] - u) <= 1e-15:
                intervals[-1][1] = v
            else:
                intervals.append([u, v])
            continue
        delta = hv - hu
        denom = float(np.dot(delta, delta))
        if denom == 0.0:
            continue
        t = min(max(-float(np.dot(hu, delta)) / denom, 0.0), 1.0)
        closest = hu + t * delta
        if float(np.dot(closest, closest)) <= tol * tol:
            points.append(u + t * (v - u))

    events = [Coincidence(0, 0, "interval", a, b) for a, b in intervals]
    ends = [p for iv in intervals for p in iv]
    uniq = []
    for y in sorted(points):
        if any(abs(y - e) <= 1e-12 for e in ends):
            continue
        if any(a - 1e-12 <= y <= b + 1e-12 for a, b in intervals):
            continue
        if uniq and abs(uniq[-1] - y) <= 1e-12:
            continue
        uniq.append(y)
    events.extend(Coincidence(0, 0, "point", y, y) for y in uniq)
    # point checks also apply at the onset of each interval coincidence
    events.extend(Coincidence(0, 0, "point", a, a) for a, _ in intervals)
    return events


def _left_mass(skm: SkeletalRootMeasure, limb_idx: int, y: float, riders) -> float:
    """Left limit of the slice mass on limb ``limb_idx``'s curve at height y.

    ``riders`` lists limb indices whose curves coincide with the limb on an
    interval ending at y; their densities contribute to the same point mass.
    """
    total = 0.0
    for n in {limb_idx, *riders}:
        limb = skm.root.limbs[n]
        if limb.y_lo < y <= limb.y_hi + 1e-15:
            total += skm.densities[n].left_rate(min(y, limb.y_hi))
    return total


def validate(skm: SkeletalRootMeasure) -> ValidationReport:
    """Check S1/S2 structure, find crossings and test the W3 left limits."""
    root = skm.root
    s1, s2, w3 = [], [], []

    if abs(root.limbs[0].y_lo) > 1e-12:
        s1.append(f"limb 0 starts at {root.limbs[0].y_lo}, expected height 0")
    for i in range(1, root.n_limbs):
        if root.limbs[i].y_lo <= 0.0:
            s1.append(f"limb {i} starts at height {root.limbs[i].y_lo}, expected > 0")

    for i in range(1, root.n_limbs):
        j = root.parents[i]
        if j is None:
            s2.append(f"limb {i} has no parent")
            continue
        parent = root.limbs[j]
        a = root.limbs[i].y_lo
        # attachment anywhere after the parent starts, tip included
        if not (parent.y_lo < a <= parent.y_hi):
            s2.append(
                f"limb {i} attaches at {a}, outside the domain "
                f"({parent.y_lo}, {parent.y_hi}] of limb {j}"
            )
            continue
        gap = np.linalg.norm(root.limbs[i].evaluate(a) - parent.evaluate(a))
        if gap > _COINCIDENCE_TOL:
            s2.append(f"limb {i} attach point misses limb {j} by {float(gap)}")

    # pairwise coincidence scan on overlapping open-left domains
    crossings = []
    interval_index = {}
    for i in range(root.n_limbs):
        for j in range(i + 1, root.n_limbs):
            lo = max(root.limbs[i].y_lo, root.limbs[j].y_lo)
            hi = min(root.limbs[i].y_hi, root.limbs[j].y_hi)
            if hi <= lo:
                continue
            for ev in _segment_events(root.limbs[i], root.limbs[j], lo, hi):
                if ev.kind == "point":
                    if ev.y_lo <= lo + _COINCIDENCE_TOL:
                        continue  # attachment point itself, excluded by open overlap
                    crossings.append(Coincidence(i, j, "point", ev.y_lo, ev.y_hi))
                else:
                    a, b = max(ev.y_lo, lo), min(ev.y_hi, hi)
                    if b <= a:
                        continue
                    crossings.append(Coincidence(i, j, "interval", a, b))
                    interval_index.setdefault(frozenset((i, j)), []).append((a, b))

    def riders_of(k: int, y: float):
        out = []
        for key, spans in interval_index.items():
            if k in key:
                other = next(iter(key - {k}))
                if any(a < y <= b + 1e-15 for a, b in spans):
                    out.append(other)
        return out

    for ev in crossings:
        if ev.kind == "interval":
            # along a shared stretch the two point masses are one and the
            # same, so both left limits vanish only if all mass does
            mi = skm.densities[ev.i].max_rate_on(ev.y_lo, ev.y_hi)
            mj = skm.densities[ev.j].max_rate_on(ev.y_lo, ev.y_hi)
            if mi > _ZERO_RATE or mj > _ZERO_RATE:
                w3.append(
                    f"limbs {ev.i} and {ev.j} coincide on ({ev.y_lo}, {ev.y_hi}] "
                    f"carrying positive mass (densities up to {mi} and {mj})"
                )
        else:
            y = ev.y_lo
            mi = _left_mass(skm, ev.i, y, riders_of(ev.i, y))
            mj = _left_mass(skm, ev.j, y, riders_of(ev.j, y))
            if mi > _ZERO_RATE and mj > _ZERO_RATE:
                w3.append(
                    f"limbs {ev.i} and {ev.j} meet at y={y} with positive "
                    f"left-limit masses {mi} and {mj}"
                )

    if s1 or s2 or w3:
        strength = "invalid"
    elif not crossings and all(np.all(d.rates > 0) for d in skm.densities):
        strength = "strong"
    else:
        strength = "weak"
    return ValidationReport(tuple(s1), tuple(s2), tuple(crossings), tuple(w3), strength)


def to_atomic(skm: SkeletalRootMeasure, n_slabs: int) -> AtomicMeasure:
    """Discretize: per height slab, one atom per active limb at the limb's
    position evaluated at the slab's per-limb mass-median height."""
    if n_slabs < 1:
        raise ValueError("n_slabs must be >= 1")
    edges = np.linspace(0.0, skm.root.depth, n_slabs + 1)
    xs, ys, ws = [], [], []
    for limb, dens in zip(skm.root.limbs, skm.densities):
        for k in range(n_slabs):
            a = max(float(edges[k]), limb.y_lo)
            b = min(float(edges[k + 1]), limb.y_hi)
            if b <= a:
                continue
            mass = dens.integrate(a, b)
            if mass <= 0:
                continue
            med = dens.mass_median(a, b)
            xs.append(limb.evaluate(med))
            ys.append(med)
            ws.append(mass)
    if not xs:
        raise EmptyMeasure("measure has no mass")
    return AtomicMeasure(np.vstack(xs), np.asarray(ys), np.asarray(ws))


@dataclass(frozen=True, eq=False)
class GhostLimb:
    """Weighted average of rescaled limbs for one index tuple, un-rescaled.

    ``active`` lists (y_lo, y_hi) stretches actually carrying barycenter
    mass; it stays empty until a barycenter attaches them.
    """

    indices: tuple
    heights: np.ndarray
    points: np.ndarray
    domain: tuple  # (l_lo, l_hi) rescaled-coordinate domain
    active: tuple = ()

    def evaluate(self, y):
        y = np.clip(np.asarray(y, dtype=np.float64), self.heights[0], self.heights[-1])
        out = np.empty(y.shape + (self.points.shape[1],))
        for k in range(self.points.shape[1]):
            out[..., k] = np.interp(y, self.heights, self.points[:, k])
        return out


def _limb_breakheights(skm: SkeletalRootMeasure) -> np.ndarray:
    parts = []
    for limb, dens in zip(skm.root.limbs, skm.densities):
        parts.extend((limb.heights, dens.edges))
    return np.unique(np.concatenate(parts))


def ghost(skms, lam, cap: int = 200_000):
    """All index-tuple averages of rescaled limbs with nonempty shared domain.

    Requires every rescaling map to be invertible (positive height-marginal
    density); raises GhostTooLarge when the number of limb tuples exceeds
    ``cap``. Zero-length domain intersections carry no arclength or mass and
    are omitted.
    """
    skms = list(skms)
    lam = check_weights(lam, len(skms))
    n_tuples = int(np.prod([s.root.n_limbs for s in skms]))
    if n_tuples > cap:
        raise GhostTooLarge(f"{n_tuples} limb tuples exceed cap {cap}")

    cdfs = [s.cdf() for s in skms]
    for c in cdfs:
        if not c.strictly_increasing:
            raise BoundsUnavailable(
                "height marginal density vanishes; ghost needs a bi-Lipschitz rescaling"
            )
    limb_domains = []
    for s, c in zip(skms, cdfs):
        limb_domains.append(
            [(float(c.forward(l.y_lo)), float(c.forward(l.y_hi))) for l in s.root.limbs]
        )
    breakpoints = [np.asarray(c.forward(_limb_breakheights(s))) for s, c in zip(skms, cdfs)]

    out = []
    for combo in itertools.product(*(range(s.root.n_limbs) for s in skms)):
        l_lo = max(limb_domains[a][i][0] for a, i in enumerate(combo))
        l_hi = min(limb_domains[a][i][1] for a, i in enumerate(combo))
        if l_hi <= l_lo:
            continue
        ls = np.concatenate([bp[(bp > l_lo) & (bp < l_hi)] for bp in breakpoints] + [[l_lo, l_hi]])
        ls = np.unique(ls)
        ys = np.zeros_like(ls)
        xs = np.zeros((ls.size, skms[0].dim))
        for a, (s, c) in enumerate(zip(skms, cdfs)):
            ya = np.asarray(c.inverse(ls))
            ys += lam[a] * ya
            xs += lam[a] * s.root.limbs[combo[a]].evaluate(ya)
        out.append(GhostLimb(tuple(combo), _freeze(ys), _freeze(xs), (l_lo, l_hi)))
    return out


def _slab_partition(skms, cdfs, n_slabs: int) -> np.ndarray:
    parts = [np.linspace(0.0, 1.0, n_slabs + 1)]
    for s, c in zip(skms, cdfs):
        parts.append(np.asarray(c.forward(_limb_breakheights(s))))
    grid = np.unique(np.concatenate(parts))
    return grid[(grid >= 0.0) & (grid <= 1.0)]


def _slice_at(skm: SkeletalRootMeasure, y: float):
    """Horizontal conditional at height y: positions, weights, limb tags."""
    pts, rates, tags = [], [], []
    for idx, (limb, dens) in enumerate(zip(skm.root.limbs, skm.densities)):
        if limb.y_lo <= y <= limb.y_hi:
            r = dens.rate_at(y)
            if r > _ZERO_RATE:
                pts.append(limb.evaluate(y))
                rates.append(r)
                tags.append(idx)
    total = sum(rates)
    if total <= 0:
        raise BoundsUnavailable(f"height marginal density vanishes at y={y}")
    weights = np.asarray(rates) / total
    return DiscreteMeasure(np.vstack(pts), weights), tags


def skeletal_barycenter(
    skms, lam, n_slabs: int = 64, cap: int = 200_000
) -> SkeletalRootMeasure:
    """Layerwise barycenter of skeletal root measures, limb by limb.

    The rescaled level axis is partitioned by a uniform n_slabs grid refined
    with every input polyline/density breakpoint, so within each slab every
    rescaled slice has constant weights and linearly moving atoms. One
    multi-marginal solve per slab assigns mass to limb index tuples; runs of
    consecutive active slabs per tuple are stitched into output limbs lying
    on the ghost curves, with piecewise-constant densities recovered through
    the averaged quantile map. The result must pass the W3 left-limit check;
    a failure (a discretization artifact or a bug) raises
    W3ViolationDetected with the report attached.

    Emitted limbs cover mass-carrying stretches only. When the coupling
    hands mass between tuples (for instance where an input limb's domain
    ends), a run can begin at a point no earlier output limb passes through;
    such limbs get parent None. The measure is still supported on the ghost,
    whose full limbs carry the structural attachments.
    """
    skms = list(skms)
    lam = check_weights(lam, len(skms))
    m = len(skms)
    dims = {s.dim for s in skms}
    if len(dims) > 1:
        raise ValueError(f"mixed horizontal dimensions {sorted(dims)}")
    d = dims.pop()
    for k, s in enumerate(skms):
        report = validate(s)
        if not report.ok:
            raise ValueError(f"input {k} is not a valid skeletal root measure:\n{report.summary()}")

    cdfs = [s.cdf() for s in skms]
    for c in cdfs:
        if not c.strictly_increasing:
            raise BoundsUnavailable(
                "height marginal density vanishes; barycenter needs a bi-Lipschitz rescaling"
            )
    grid = _slab_partition(skms, cdfs, n_slabs)
    n_cells = grid.size - 1

    # per-slab coupling masses keyed by limb index tuple
    activity: dict = {}
    for cell in range(n_cells):
        l_mid = 0.5 * (grid[cell] + grid[cell + 1])
        slices, tag_lists = [], []
        for s, c in zip(skms, cdfs):
            sl, tags = _slice_at(s, float(c.inverse(l_mid)))
            slices.append(sl)
            tag_lists.append(tags)
        if m == 1:
            entries = [((tag_lists[0][k],), float(slices[0].w[k])) for k in range(slices[0].n_atoms)]
        else:
            coupling = multimarginal_lp(slices, lam, cap=cap)
            entries = [
                (
                    tuple(tag_lists[a][coupling.indices[e, a]] for a in range(m)),
                    float(coupling.mass[e]),
                )
                for e in range(coupling.support_size)
            ]
        for combo, mass in entries:
            if mass > _ZERO_RATE:
                activity.setdefault(combo, {})[cell] = mass

    # un-rescaled heights of every slab edge
    edge_heights = np.zeros(grid.size)
    for coef, c in zip(lam, cdfs):
        edge_heights += coef * np.asarray(c.inverse(grid))
    edge_heights[0] = 0.0

    # stitch consecutive active slabs into output limbs
    runs = []
    for combo, cells in activity.items():
        idxs = sorted(cells)
        start = idxs[0]
        prev = idxs[0]
        for k in idxs[1:] + [None]:
            if k is not None and k == prev + 1:
                prev = k
                continue
            runs.append((combo, start, prev, [cells[c] for c in range(start, prev + 1)]))
            if k is not None:
                start = prev = k
    runs.sort(key=lambda r: (edge_heights[r[1]], r[0]))

    limbs, densities, labels = [], [], []
    for combo, c0, c1, masses in runs:
        ls = grid[c0 : c1 + 2]
        ys = edge_heights[c0 : c1 + 2]
        xs = np.zeros((ls.size, d))
        for a, (s, c) in enumerate(zip(skms, cdfs)):
            ya = np.clip(
                np.asarray(c.inverse(ls)),
                s.root.limbs[combo[a]].y_lo,
                s.root.limbs[combo[a]].y_hi,
            )
            xs += lam[a] * s.root.limbs[combo[a]].evaluate(ya)
        rates = np.asarray(masses) * np.diff(ls) / np.diff(ys)
        limbs.append(Limb(ys, xs))
        densities.append(PiecewiseDensity(ys, rates))
        labels.append(combo)

    parents = [None] * len(limbs)
    for i in range(1, len(limbs)):
        a = limbs[i].y_lo
        start = limbs[i].points[0]
        for j in range(i):
            if limbs[j].y_lo < a <= limbs[j].y_hi:
                if np.linalg.norm(limbs[j].evaluate(a) - start) <= _COINCIDENCE_TOL:
                    parents[i] = j
                    break

    root = SkeletalRoot(tuple(limbs), tuple(parents), depth=float(edge_heights[-1]))
    fv = np.diff(grid) / np.diff(edge_heights)
    bounds = (float(np.min(fv)), float(np.max(fv)))
    result = SkeletalRootMeasure(root, tuple(densities), bounds=bounds, labels=tuple(labels))

    report = validate(result)
    if report.w3_violations:
        raise W3ViolationDetected(
            "barycenter fails the W3 left-limit check; refine n_slabs or report a bug\n"
            + report.summary()
        )
    return result


def root_length(skm: SkeletalRootMeasure) -> float:
    """Total arclength of the support: limb graphs where the density is > 0."""
    total = 0.0
    for limb, dens in zip(skm.root.limbs, skm.densities):
        for k in range(dens.rates.size):
            if dens.rates[k] > _ZERO_RATE:
                total += limb.arclength(float(dens.edges[k]), float(dens.edges[k + 1]))
    return total


@dataclass(frozen=True)
class RootLengthBracket:
    c0: float
    c1: float
    c2: float
    lower: float
    upper: float


def root_length_bounds(skms, lam, L: float = None, U: float = None) -> RootLengthBracket:
    """Bracket for the barycenter's root length from family constants.

    With C the largest limb slope, Ctilde = C/L, K = max(1/L, 1) and
    k = min(1/U, 1), the rescaled length bracket sqrt(1+Ctilde^2)^{+-1} is
    composed with the change-of-variables factors, giving

        lower = k/(K sqrt(1+Ctilde^2)) * max_b R(mu_b)
        upper = K sqrt(1+Ctilde^2) * [ (1/k) sum_a R(mu_a) - (m-1) ].
    """
    skms = list(skms)
    lam = check_weights(lam, len(skms))
    if L is None or U is None:
        declared = [s.bounds for s in skms]
        if any(b is None for b in declared):
            raise BoundsUnavailable(
                "density bounds L, U were neither passed nor declared on every measure"
            )
        L = min(b[0] for b in declared) if L is None else L
        U = max(b[1] for b in declared) if U is None else U
    L, U = float(L), float(U)
    if not 0 < L <= U:
        raise ValueError("bounds must satisfy 0 < L <= U")

    C = max(limb.lipschitz for s in skms for limb in s.root.limbs)
    ctilde = C / L
    big_k = max(1.0 / L, 1.0)
    small_k = min(1.0 / U, 1.0)
    slope = math.sqrt(1.0 + ctilde * ctilde)
    c0 = small_k / (big_k * slope)
    c1 = big_k * slope
    c2 = 1.0 / small_k
    lengths = [root_length(s) for s in skms]
    lower = c0 * max(lengths)
    upper = c1 * (c2 * sum(lengths) - (len(skms) - 1))
    return RootLengthBracket(c0, c1, c2, lower, upper)


def skeleton_from_obj(obj) -> SkeletalRootMeasure:
    """Build a measure from the skeleton JSON document structure."""
    try:
        raw_limbs = obj["limbs"]
        depth = obj.get("depth")
    except (KeyError, TypeError) as exc:
        raise ValueError(f"skeleton document missing field: {exc}") from exc
    if not raw_limbs:
        raise EmptyMeasure("skeleton document has no limbs")
    limbs, parents, densities, labels = [], [], [], []
    any_label = False
    for k, entry in enumerate(raw_limbs):
        poly = np.asarray(entry["polyline"], dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] < 2:
            raise MalformedLimb(f"limb {k}: polyline rows must be [y, x1, ..., xd]")
        limb = Limb(poly[:, 0], poly[:, 1:])
        pieces = entry["density"]
        if not pieces:
            raise ValueError(f"limb {k}: empty density")
        edges = [float(pieces[0]["y_lo"])]
        rates = []
        for p in pieces:
            if abs(float(p["y_lo"]) - edges[-1]) > 1e-9:
                raise ValueError(f"limb {k}: density pieces must tile the domain")
            edges.append(float(p["y_hi"]))
            rates.append(float(p["m"]))
        parent = entry.get("parent")
        attach = entry.get("attach_y")
        if attach is not None and abs(float(attach) - limb.y_lo) > 1e-9:
            raise ValueError(f"limb {k}: attach_y {attach} does not match polyline start")
        limbs.append(limb)
        parents.append(None if parent is None else int(parent))
        densities.append(PiecewiseDensity(edges, rates))
        lab = entry.get("tuple")
        labels.append(None if lab is None else tuple(int(v) for v in lab))
        any_label = any_label or lab is not None
    root = SkeletalRoot(tuple(limbs), tuple(parents), depth=depth)
    bounds = obj.get("bounds")
    if bounds is not None:
        bounds = (float(bounds[0]), float(bounds[1]))
    labs = tuple(l if l is not None else () for l in labels) if any_label else None
    return SkeletalRootMeasure(root, tuple(densities), bounds=bounds, labels=labs)


def skeleton_to_obj(skm: SkeletalRootMeasure) -> dict:
    limbs = []
    for k, (limb, dens) in enumerate(zip(skm.root.limbs, skm.densities)):
        entry = {
            "polyline": [
                [float(h)] + [float(v) for v in p] for h, p in zip(limb.heights, limb.points)
            ],
            "density": [
                {"y_lo": float(dens.edges[i]), "y_hi": float(dens.edges[i + 1]), "m": float(r)}
                for i, r in enumerate(dens.rates)
            ],
            "parent": skm.root.parents[k],
            "attach_y": limb.y_lo,
        }
        if skm.labels is not None and skm.labels[k]:
            entry["tuple"] = [int(v) for v in skm.labels[k]]
        limbs.append(entry)
    obj = {"depth": skm.root.depth, "limbs": limbs}
    if skm.bounds is not None:
        obj["bounds"] = [skm.bounds[0], skm.bounds[1]]
    return obj


def load_skeleton_json(path) -> SkeletalRootMeasure:
    with open(path, encoding="utf-8") as fh:
        return skeleton_from_obj(json.load(fh))


def save_skeleton_json(skm: SkeletalRootMeasure, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(skeleton_to_obj(skm), fh, indent=2)
        fh.write("\n")
