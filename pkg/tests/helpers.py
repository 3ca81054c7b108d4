"""Shared generators and comparison helpers for the test suite."""

import numpy as np

from lwot import AtomicMeasure, DiscreteMeasure, normalize, validate
from lwot.skeleton import Limb, PiecewiseDensity, SkeletalRoot, SkeletalRootMeasure


def random_atomic(rng, d=1, n=5, normalized=True, y_span=(0.0, 1.0), x_scale=1.0):
    x = rng.normal(scale=x_scale, size=(n, d))
    y = rng.uniform(*y_span, size=n)
    w = rng.uniform(0.5, 1.5, size=n)
    if normalized:
        w = w / w.sum()
    return AtomicMeasure(x, y, w)


def random_discrete(rng, d=1, n=5):
    x = rng.normal(size=(n, d))
    w = rng.uniform(0.5, 1.5, size=n)
    return DiscreteMeasure(x, w / w.sum())


def random_weights(rng, m):
    lam = rng.uniform(0.5, 1.5, size=m)
    return lam / lam.sum()


def assert_atoms_close(a: AtomicMeasure, b: AtomicMeasure, tol=1e-9):
    assert a.n_atoms == b.n_atoms, f"{a.n_atoms} atoms vs {b.n_atoms}"
    assert a.dim == b.dim
    np.testing.assert_allclose(a.x, b.x, atol=tol, rtol=0)
    np.testing.assert_allclose(a.y, b.y, atol=tol, rtol=0)
    np.testing.assert_allclose(a.w, b.w, atol=tol, rtol=0)


def _random_polyline(rng, y0, y1, x0, n_knots, slope_cap):
    ys = np.concatenate(([y0], np.sort(rng.uniform(y0, y1, size=n_knots)), [y1]))
    ys = np.unique(ys)
    xs = [x0]
    for k in range(1, ys.size):
        dy = ys[k] - ys[k - 1]
        xs.append(xs[-1] + rng.uniform(-slope_cap, slope_cap) * dy)
    return Limb(ys, np.asarray(xs).reshape(-1, 1))


def _random_density(rng, y0, y1, n_pieces, lo=0.4, hi=1.6):
    cuts = np.concatenate(([y0], np.sort(rng.uniform(y0, y1, size=n_pieces - 1)), [y1]))
    cuts = np.unique(cuts)
    rates = rng.uniform(lo, hi, size=cuts.size - 1)
    return PiecewiseDensity(cuts, rates)


def random_strong_skeletal(rng, max_limbs=4, slope_cap=1.0, max_tries=200):
    """Rejection-sample a strong skeletal root measure in d=1, depth 1.

    Random polyline limbs with bounded slopes, random attachments strictly
    inside the parent domain, random positive piecewise densities. Candidates
    failing the strong classification are resampled.
    """
    for _ in range(max_tries):
        n_limbs = int(rng.integers(1, max_limbs + 1))
        limbs = [_random_polyline(rng, 0.0, 1.0, rng.uniform(-0.2, 0.2), 2, slope_cap)]
        parents = [None]
        ok = True
        for _ in range(n_limbs - 1):
            j = int(rng.integers(0, len(limbs)))
            parent = limbs[j]
            lo, hi = parent.y_lo, parent.y_hi
            if hi - lo < 0.2:
                ok = False
                break
            attach = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
            end = min(1.0, attach + rng.uniform(0.25, 1.0))
            if end - attach < 0.1:
                ok = False
                break
            x_attach = float(parent.evaluate(attach)[0])
            limbs.append(_random_polyline(rng, attach, end, x_attach, 2, slope_cap))
            parents.append(j)
        if not ok:
            continue
        densities = tuple(_random_density(rng, l.y_lo, l.y_hi, int(rng.integers(1, 4))) for l in limbs)
        try:
            skm = SkeletalRootMeasure(SkeletalRoot(tuple(limbs), tuple(parents)), densities)
        except Exception:
            continue
        if validate(skm).strength == "strong":
            return skm.with_bounds(*skm.vertical_density_range())
    raise RuntimeError("failed to sample a strong skeletal root measure")


def random_strong_family(rng, m, max_limbs=4, slope_cap=1.0):
    return [random_strong_skeletal(rng, max_limbs=max_limbs, slope_cap=slope_cap) for _ in range(m)]
