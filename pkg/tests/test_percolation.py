"""Continuum and site-bond percolation: samplers, cluster logic, experiments."""

import math

import numpy as np
import pytest
from scipy import stats

from isinglab.kernels import mode_kernel, poly_kernel, zero_kernel
from isinglab.percolation import (ContinuumPercConfig, SiteBondModel,
                                  _sample_bonds, _sample_splits,
                                  appendix_convergence_experiment,
                                  continuum_two_point, discrete_two_point,
                                  estimate_p0, phi_map, sample_continuum)
from isinglab.unionfind import UnionFind

ONE_MODE = mode_kernel([1.0], [1.0])


class TestSampler:
    def test_uncoupled_has_no_bonds(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            config = sample_continuum(0.0, 3.0, ONE_MODE, rng)
            assert config.bonds.shape[0] == 0

    def test_zero_kernel_has_no_bonds(self):
        config = sample_continuum(5.0, 3.0, zero_kernel(), 7)
        assert config.bonds.shape[0] == 0

    def test_split_count_mean(self):
        rng = np.random.default_rng(5)
        counts = [_sample_splits(5.0, rng).size for _ in range(8_000)]
        se = np.std(counts) / math.sqrt(len(counts))
        assert abs(np.mean(counts) - 10.0) <= 3 * se

    def test_bond_count_mean_matches_intensity_mass(self):
        # total intensity over the triangle is alpha times the box integral
        rng = np.random.default_rng(7)
        expected = 1.0 * ONE_MODE.double_integral(0.0, 1.0, 0.0, 1.0)
        counts = [_sample_bonds(1.0, 1.0, ONE_MODE, rng).shape[0]
                  for _ in range(30_000)]
        se = np.std(counts) / math.sqrt(len(counts))
        assert abs(np.mean(counts) - expected) <= 3 * se

    def test_bond_gap_histogram_matches_intensity(self):
        # chi-square of the observed t-s histogram against the exact band
        # masses 2 alpha int (T - u) g(u) du
        alpha, T = 0.8, 4.0
        kern = ONE_MODE
        rng = np.random.default_rng(11)
        gaps = []
        for _ in range(30_000):
            bonds = _sample_bonds(alpha, T, kern, rng)
            if bonds.size:
                gaps.extend(bonds[:, 1] - bonds[:, 0])
        gaps = np.asarray(gaps)
        edges = np.array([0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])

        def mass(a, b):
            # int_a^b (T - u) g(u) du via the antiderivatives of g
            F = kern.first_antideriv
            G = kern.second_antideriv
            int_g = F(b) - F(a)
            int_ug = b * F(b) - a * F(a) - (G(b) - G(a))
            return 2.0 * alpha * (T * int_g - int_ug)

        masses = np.array([mass(a, b) for a, b in zip(edges, edges[1:])])
        observed = np.histogram(gaps, bins=edges)[0]
        expected = masses / masses.sum() * observed.sum()
        result = stats.chisquare(observed, expected)
        assert result.pvalue > 0.01

    def test_bonds_lie_in_triangle(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            config = sample_continuum(2.0, 3.0, poly_kernel(1.0), rng)
            for s, t in config.bonds:
                assert 0.0 <= s < t <= 3.0

    def test_seed_determinism(self):
        a = sample_continuum(1.5, 2.0, ONE_MODE, 42)
        b = sample_continuum(1.5, 2.0, ONE_MODE, 42)
        assert np.array_equal(a.splits, b.splits)
        assert np.array_equal(a.bonds, b.bonds)


class TestClusters:
    def test_union_find_matches_transitive_closure(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(2, 31))
            m = int(rng.integers(0, 40))
            pairs = rng.integers(0, n, size=(m, 2))
            uf = UnionFind(n)
            adj = np.eye(n, dtype=bool)
            for i, j in pairs:
                uf.union(int(i), int(j))
                adj[i, j] = adj[j, i] = True
            reach = adj.copy()
            for _ in range(n):
                new = reach @ adj
                if (new | reach == reach).all():
                    break
                reach |= new
            for i in range(n):
                for j in range(n):
                    assert uf.connected(i, j) == bool(reach[i, j])

    def test_same_point_connected(self):
        est = continuum_two_point(0.5, 2.0, ONE_MODE, 1.0, 1.0, 200, 3)
        assert est.mean == 1.0

    def test_free_two_point_is_void_probability(self):
        est = continuum_two_point(0.0, 5.0, ONE_MODE, 1.0, 3.0, 30_000, 5)
        assert abs(est.mean - math.exp(-4.0)) <= 3 * est.stderr


class TestAliveness:
    def test_free_p0_is_void_probability(self):
        est = estimate_p0(0.0, ONE_MODE, 30_000, 7)
        assert abs(est.mean - math.exp(-2.0)) <= 3 * est.stderr

    def test_monotone_in_alpha_with_common_randomness(self):
        # thinning from a shared candidate set couples the two couplings so
        # the comparison is pointwise
        from isinglab.percolation import _unit_alive
        alpha_hi, alpha_lo = 2.0, 0.5
        rng = np.random.default_rng(9)
        for _ in range(300):
            splits = _sample_splits(1.0, rng)
            bonds_hi = _sample_bonds(alpha_hi, 1.0, ONE_MODE, rng)
            keep = rng.random(bonds_hi.shape[0]) < alpha_lo / alpha_hi
            bonds_lo = bonds_hi[keep]
            assert _unit_alive(splits, bonds_lo) <= _unit_alive(splits,
                                                                bonds_hi)

    def test_strong_coupling_saturates(self):
        est = estimate_p0(2000.0, ONE_MODE, 1_500, 13)
        assert est.mean > 0.99


class TestSiteBond:
    def test_validation(self):
        with pytest.raises(ValueError):
            SiteBondModel("ring", 4, 1.0, ONE_MODE, 0.5)
        with pytest.raises(ValueError):
            SiteBondModel("half", 4, 1.0, ONE_MODE, 1.5)

    def test_edge_probability_translation_invariant(self):
        model = SiteBondModel("full", 6, 1.2, ONE_MODE, 0.8)
        assert model.edge_probability(-3, -1) == model.edge_probability(2, 4)
        assert model.edge_probability(0, 2) == model.edge_probability(2, 0)

    def test_nearest_neighbour_run_with_certain_sites(self):
        # with p0 = 1 and only nearest-neighbour edges open with
        # probability p, connectivity over distance k is p^k
        kern = mode_kernel([4.0], [8.0])    # fast decay: longer edges ~ 0
        model = SiteBondModel("half", 4, 0.9, kern, 1.0)
        p1 = model.edge_probability(0, 1)
        assert model.edge_probability(0, 3) < 1e-7
        est = discrete_two_point(model, 0, 3, 40_000, 3)
        # distance >= 2 shortcut edges contribute ~1e-5, below 3 stderr
        assert abs(est.mean - p1**3) <= 3 * est.stderr + 2e-5

    def test_endpoints_must_be_alive(self):
        model = SiteBondModel("half", 4, 1.0, ONE_MODE, 0.0)
        est = discrete_two_point(model, 0, 1, 500, 5)
        assert est.mean == 0.0

    def test_full_line_domain(self):
        model = SiteBondModel.from_alpha(1.0, ONE_MODE, "full", 4,
                                         p0_samples=4_000, seed=3)
        est = discrete_two_point(model, -2, 2, 4_000, 7)
        assert 0.0 <= est.mean <= 1.0


class TestPhiMap:
    def test_values(self):
        assert phi_map(0) == 0
        assert phi_map(5) == -3
        assert phi_map(4) == 2

    def test_bijection_on_window(self):
        L = 9
        image = sorted(phi_map(n) for n in range(2 * L + 1))
        assert image == list(range(-L, L + 1))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            phi_map(-1)


class TestAppendixConvergence:
    def test_free_closed_forms(self):
        rows = appendix_convergence_experiment(0.0, 2, ONE_MODE, 1,
                                               (32, 64, 128), 1, 3)
        for row, N in zip(rows, (32, 64, 128)):
            assert row.discrete.mean == pytest.approx((1 - 2 / N) ** N,
                                                      rel=1e-12)
            assert row.continuum.mean == pytest.approx(math.exp(-2.0),
                                                       rel=1e-12)
        gaps = [row.gap for row in rows]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_validation(self):
        with pytest.raises(ValueError):
            appendix_convergence_experiment(0.0, 2.5, ONE_MODE, 1, (8,), 10,
                                            3)
        with pytest.raises(ValueError):
            appendix_convergence_experiment(0.0, 2, ONE_MODE, 3, (8,), 10, 3)

    def test_coupled_rows_have_errors(self):
        rows = appendix_convergence_experiment(0.5, 1, ONE_MODE, 1, (8, 16),
                                               2_000, 5)
        for row in rows:
            assert row.combined_stderr > 0
            assert 0.0 <= row.discrete.mean <= 1.0


class TestInequalityDirection:
    def test_continuum_dominates_site_bond(self):
        alpha = 1.0
        cont = continuum_two_point(alpha, 5.0, ONE_MODE, 0.0, 1.0, 20_000, 3)
        model = SiteBondModel.from_alpha(alpha, ONE_MODE, "half", 4,
                                         p0_samples=20_000, seed=5)
        disc = discrete_two_point(model, 0, 1, 20_000, 7)
        se = math.hypot(cont.stderr, disc.stderr)
        assert cont.mean >= disc.mean - 3 * se
