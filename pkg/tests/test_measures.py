import numpy as np
import pytest

from lwot import (
    AtomicMeasure,
    GriddedMeasure,
    from_grid,
    normalize,
    vertical_marginal,
)
from lwot.errors import EmptyMeasure, InvalidQuantile
from lwot.measures import load_atoms_csv, save_atoms_csv

from helpers import random_atomic


class TestFromGrid:
    def test_single_cell(self):
        g = GriddedMeasure((np.array([0.0, 1.0]),), np.array([0.0, 1.0]), np.array([[1.0]]))
        mu = from_grid(g)
        assert mu.n_atoms == 1
        assert mu.x[0, 0] == 0.5 and mu.y[0] == 0.5 and mu.w[0] == 1.0

    def test_2x2_uniform(self):
        edges = np.array([0.0, 1.0, 2.0])
        g = GriddedMeasure((edges,), edges, np.ones((2, 2)))
        mu = from_grid(g)
        assert mu.n_atoms == 4
        np.testing.assert_array_equal(mu.w, np.ones(4))

    def test_random_grid_mass(self):
        rng = np.random.default_rng(7)
        ax = np.sort(rng.uniform(0, 1, 5))
        ax[0], ax[-1] = 0.0, 1.0
        ve = np.sort(rng.uniform(0, 2, 5))
        ve[0], ve[-1] = 0.0, 2.0
        dens = rng.uniform(0, 3, size=(4, 4))
        g = GriddedMeasure((ax,), ve, dens)
        # direct summation oracle
        vols = np.outer(np.diff(ax), np.diff(ve))
        expected = float(np.sum(dens * vols))
        assert abs(from_grid(g).total_mass - expected) < 1e-12

    def test_all_zero_is_empty(self):
        with pytest.raises(EmptyMeasure):
            GriddedMeasure((np.array([0.0, 1.0]),), np.array([0.0, 1.0]), np.array([[0.0]]))


class TestVerticalMarginal:
    def test_aggregates_heights(self):
        mu = AtomicMeasure([[0.0], [5.0]], [1.0, 1.0], [1.0, 2.0])
        prof = vertical_marginal(mu)
        np.testing.assert_array_equal(prof.heights, [1.0])
        np.testing.assert_array_equal(prof.masses, [3.0])

    def test_single_atom_quantile(self):
        prof = vertical_marginal(AtomicMeasure([[0.0]], [2.0], [1.0]))
        for l in (1e-9, 0.3, 0.99, 1.0):
            assert prof.quantile(l) == 2.0

    def test_random_mass_preserved(self):
        rng = np.random.default_rng(3)
        mu = random_atomic(rng, n=20, normalized=False)
        prof = vertical_marginal(mu)
        assert abs(prof.total_mass - mu.total_mass) < 1e-12

    def test_quantile_domain(self):
        prof = vertical_marginal(AtomicMeasure([[0.0]], [2.0], [1.0]))
        with pytest.raises(InvalidQuantile):
            prof.quantile(0.0)
        with pytest.raises(InvalidQuantile):
            prof.quantile(1.1)


class TestNormalize:
    def test_halves(self):
        mu = AtomicMeasure([[0.0], [1.0]], [0.0, 1.0], [2.0, 2.0])
        out = normalize(mu)
        np.testing.assert_array_equal(out.w, [0.5, 0.5])

    def test_identity_when_normalized(self):
        mu = AtomicMeasure([[0.0], [1.0]], [0.0, 1.0], [0.5, 0.5])
        assert normalize(mu) is mu

    def test_random_total_is_one(self):
        rng = np.random.default_rng(11)
        mu = random_atomic(rng, n=9, normalized=False)
        assert abs(normalize(mu).total_mass - 1.0) < 1e-12


class TestAtomicInvariants:
    def test_duplicates_merged(self):
        mu = AtomicMeasure([[1.0], [1.0], [0.0]], [2.0, 2.0, 1.0], [1.0, 3.0, 1.0])
        assert mu.n_atoms == 2
        assert mu.w[mu.y == 2.0][0] == 4.0

    def test_construction_idempotent(self):
        rng = np.random.default_rng(5)
        mu = random_atomic(rng, d=2, n=12)
        nu = AtomicMeasure(mu.x, mu.y, mu.w)
        np.testing.assert_array_equal(mu.x, nu.x)
        np.testing.assert_array_equal(mu.y, nu.y)
        np.testing.assert_array_equal(mu.w, nu.w)

    def test_rejects_bad_atoms(self):
        with pytest.raises(EmptyMeasure):
            AtomicMeasure(np.zeros((0, 1)), [], [])
        with pytest.raises(ValueError):
            AtomicMeasure([[0.0]], [-1.0], [1.0])
        with pytest.raises(ValueError):
            AtomicMeasure([[0.0]], [1.0], [0.0])
        with pytest.raises(ValueError):
            AtomicMeasure([[np.inf]], [1.0], [1.0])

    def test_grid_roundtrip_mass(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            ax = np.cumsum(rng.uniform(0.1, 1, 4))
            ve = np.cumsum(rng.uniform(0.1, 1, 5))
            dens = rng.uniform(0.1, 2, size=(3, 4))
            g = GriddedMeasure((ax,), ve, dens)
            prof = vertical_marginal(from_grid(g))
            assert abs(prof.total_mass - g.total_mass) < 1e-12

    def test_quantile_cdf_galois(self):
        rng = np.random.default_rng(17)
        mu = random_atomic(rng, n=8)
        prof = vertical_marginal(mu)
        probes_l = np.concatenate([prof.cumulative, rng.uniform(1e-6, 1, 20)])
        probes_y = np.concatenate([prof.heights, rng.uniform(0, 1, 20)])
        for l in probes_l:
            for y in probes_y:
                assert (prof.quantile(l) <= y) == (l <= prof.cdf(y))


class TestCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(23)
        mu = random_atomic(rng, d=2, n=6, normalized=False)
        path = tmp_path / "atoms.csv"
        save_atoms_csv(mu, path)
        again = load_atoms_csv(path)
        np.testing.assert_array_equal(mu.x, again.x)
        np.testing.assert_array_equal(mu.y, again.y)
        np.testing.assert_array_equal(mu.w, again.w)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            load_atoms_csv(path)
