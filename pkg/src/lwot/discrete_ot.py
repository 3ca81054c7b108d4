"""Exact discrete optimal transport in R^d.

Pairwise and multi-marginal transportation LPs are solved to optimality with
the HiGHS dual simplex, which returns deterministic vertex (basic) solutions:
pairwise plans have support <= n_a + n_b - 1 and multi-marginal couplings
support <= sum_a S_a - m + 1. The multi-marginal problem is posed over the
explicit product support; a configurable cap guards against blowup since the
intended inputs (skeletal layers) have few atoms per marginal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .errors import DimMismatch, NotProbability, ProblemTooLarge
from .ot1d import check_weights

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "MultiCoupling",
    "transport_lp",
    "multimarginal_lp",
    "barycenter_from_coupling",
    "w_barycenter",
]

_MASS_TOL = 1e-12
_MARGINAL_TOL = 1e-10
_ENTRY_TOL = 1e-12
DEFAULT_PRODUCT_CAP = 200_000


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^d, in caller-supplied (stable) order."""

    x: np.ndarray  # (n, d)
    w: np.ndarray  # (n,)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if x.shape[0] == 0:
            raise ValueError("measure has no atoms")
        if x.shape[0] != w.shape[0]:
            raise ValueError("x and w must have matching lengths")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("positions and weights must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be > 0")
        x = np.ascontiguousarray(x)
        w = np.ascontiguousarray(w)
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.w.size

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    @property
    def is_normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= _MASS_TOL

    def canonical(self) -> "DiscreteMeasure":
        """Sorted-and-merged copy, for order-insensitive comparisons."""
        order = np.lexsort(tuple(self.x[:, k] for k in range(self.dim - 1, -1, -1)))
        x, w = self.x[order], self.w[order]
        changed = np.ones(len(w), dtype=bool)
        changed[1:] = np.any(x[1:] != x[:-1], axis=1)
        group = np.cumsum(changed) - 1
        merged = np.zeros(group[-1] + 1)
        np.add.at(merged, group, w)
        return DiscreteMeasure(x[changed], merged)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling between two discrete measures with its exact cost."""

    i: np.ndarray
    j: np.ndarray
    mass: np.ndarray
    cost: float
    duality_gap: float = 0.0


@dataclass(frozen=True, eq=False)
class MultiCoupling:
    """Sparse multi-marginal coupling: one index per marginal per entry."""

    indices: np.ndarray  # (K, m) integer tuples
    mass: np.ndarray     # (K,)
    cost: float
    duality_gap: float = 0.0

    @property
    def n_marginals(self) -> int:
        return self.indices.shape[1]

    @property
    def support_size(self) -> int:
        return self.indices.shape[0]


def _require_normalized(measures):
    for mu in measures:
        if not mu.is_normalized:
            raise NotProbability(f"measure has mass {mu.total_mass}, expected 1")


def _require_same_dim(measures):
    dims = {mu.dim for mu in measures}
    if len(dims) > 1:
        raise DimMismatch(f"mixed horizontal dimensions {sorted(dims)}")


def _solve(c, A_eq, b_eq):
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed (status {res.status}): {res.message}")
    gap = abs(float(res.fun) - float(np.dot(b_eq, res.eqlin.marginals)))
    return np.maximum(res.x, 0.0), float(res.fun), gap


def plan_marginal_error(plan: TransportPlan, a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    row = np.zeros(a.n_atoms)
    col = np.zeros(b.n_atoms)
    np.add.at(row, plan.i, plan.mass)
    np.add.at(col, plan.j, plan.mass)
    return max(float(np.max(np.abs(row - a.w))), float(np.max(np.abs(col - b.w))))


def coupling_marginal_error(coupling: MultiCoupling, measures) -> float:
    worst = 0.0
    for a, mu in enumerate(measures):
        marg = np.zeros(mu.n_atoms)
        np.add.at(marg, coupling.indices[:, a], coupling.mass)
        worst = max(worst, float(np.max(np.abs(marg - mu.w))))
    return worst


def transport_lp(a: DiscreteMeasure, b: DiscreteMeasure) -> TransportPlan:
    """Optimal coupling for cost |x - y|^2, as a vertex solution of the LP."""
    _require_same_dim([a, b])
    _require_normalized([a, b])
    na, nb = a.n_atoms, b.n_atoms
    C = cdist(a.x, b.x, metric="sqeuclidean")

    if na == 1 or nb == 1:
        # coupling is forced by feasibility; no solver needed
        if na == 1:
            i = np.zeros(nb, dtype=np.intp)
            j = np.arange(nb, dtype=np.intp)
            mass = np.array(b.w)
        else:
            i = np.arange(na, dtype=np.intp)
            j = np.zeros(na, dtype=np.intp)
            mass = np.array(a.w)
        cost = float(np.dot(mass, C[i, j]))
        plan = TransportPlan(i, j, mass, cost, 0.0)
    else:
        rows = sps.kron(sps.eye(na), np.ones((1, nb)), format="csr")
        cols = sps.kron(np.ones((1, na)), sps.eye(nb), format="csr")
        A_eq = sps.vstack([rows, cols], format="csr")
        b_eq = np.concatenate([a.w, b.w])
        gamma, cost, gap = _solve(C.ravel(), A_eq, b_eq)
        keep = np.flatnonzero(gamma > _ENTRY_TOL)
        i, j = np.divmod(keep, nb)
        plan = TransportPlan(i.astype(np.intp), j.astype(np.intp), gamma[keep], cost, gap)

    err = plan_marginal_error(plan, a, b)
    if err > _MARGINAL_TOL:
        raise RuntimeError(f"transport plan infeasible: marginal error {err}")
    return plan


def _pairwise_cost_tensor(measures, lam) -> np.ndarray:
    m = len(measures)
    shape = tuple(mu.n_atoms for mu in measures)
    total = np.zeros(shape)
    for alpha in range(m):
        for beta in range(alpha + 1, m):
            D = cdist(measures[alpha].x, measures[beta].x, metric="sqeuclidean")
            D = D * (2.0 * lam[alpha] * lam[beta])
            view = [1] * m
            view[alpha] = shape[alpha]
            view[beta] = shape[beta]
            total = total + D.reshape(view)
    return total


def multimarginal_lp(measures, lam, cap: int = DEFAULT_PRODUCT_CAP) -> MultiCoupling:
    """Multi-marginal LP with cost sum_{a,b} lam_a lam_b |x_a - x_b|^2.

    Solved over the full product support, so the number of columns is the
    product of the marginal support sizes; exceeding ``cap`` raises
    ProblemTooLarge.
    """
    measures = list(measures)
    if len(measures) < 2:
        raise ValueError("need at least two marginals")
    _require_same_dim(measures)
    _require_normalized(measures)
    lam = check_weights(lam, len(measures))

    sizes = [mu.n_atoms for mu in measures]
    n_cols = int(np.prod(sizes))
    if n_cols > cap:
        raise ProblemTooLarge(
            f"product support has {n_cols} tuples (cap {cap}); "
            "thin the layers or reduce atoms per marginal"
        )

    c = _pairwise_cost_tensor(measures, lam).ravel()
    multi = np.unravel_index(np.arange(n_cols), tuple(sizes))
    rows = []
    offset = 0
    for alpha, size in enumerate(sizes):
        rows.append(offset + multi[alpha])
        offset += size
    row_idx = np.concatenate(rows)
    col_idx = np.tile(np.arange(n_cols), len(sizes))
    A_eq = sps.coo_matrix(
        (np.ones(row_idx.size), (row_idx, col_idx)), shape=(offset, n_cols)
    ).tocsr()
    b_eq = np.concatenate([mu.w for mu in measures])

    gamma, cost, gap = _solve(c, A_eq, b_eq)
    keep = np.flatnonzero(gamma > _ENTRY_TOL)
    indices = np.column_stack([multi[alpha][keep] for alpha in range(len(sizes))])
    coupling = MultiCoupling(indices.astype(np.intp), gamma[keep], cost, gap)

    err = coupling_marginal_error(coupling, measures)
    if err > _MARGINAL_TOL:
        raise RuntimeError(f"multi-marginal coupling infeasible: marginal error {err}")
    return coupling


def barycenter_from_coupling(coupling: MultiCoupling, measures, lam) -> DiscreteMeasure:
    """Pushforward of a coupling under weighted averaging of support tuples.

    Output atoms sit at sum_a lam_a x_{a, i_a}; coordinates are rounded to
    1e-12 before merging so float dust cannot split coincident points.
    """
    measures = list(measures)
    lam = check_weights(lam, len(measures))
    if coupling.n_marginals != len(measures):
        raise ValueError("coupling arity does not match number of measures")
    pts = np.zeros((coupling.support_size, measures[0].dim))
    for alpha, mu in enumerate(measures):
        pts += lam[alpha] * mu.x[coupling.indices[:, alpha]]
    pts = np.round(pts, 12)
    order = np.lexsort(tuple(pts[:, k] for k in range(pts.shape[1] - 1, -1, -1)))
    pts, mass = pts[order], coupling.mass[order]
    changed = np.ones(len(mass), dtype=bool)
    changed[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    group = np.cumsum(changed) - 1
    merged = np.zeros(group[-1] + 1)
    np.add.at(merged, group, mass)
    return DiscreteMeasure(pts[changed], merged)


def w_barycenter(measures, lam, cap: int = DEFAULT_PRODUCT_CAP) -> DiscreteMeasure:
    """Wasserstein barycenter of discrete measures via the multi-marginal LP."""
    measures = list(measures)
    if not measures:
        raise ValueError("need at least one measure")
    lam = check_weights(lam, len(measures))
    if len(measures) == 1:
        _require_normalized(measures)
        return measures[0]
    coupling = multimarginal_lp(measures, lam, cap=cap)
    return barycenter_from_coupling(coupling, measures, lam)
