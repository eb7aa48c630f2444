"""Lattice model: enumeration oracles, graphical identities, samplers."""

import math

import numpy as np
import pytest

from isinglab.discrete import (LatticeModel, SizeGuardError,
                               bond_percolation_two_point, exact_correlation,
                               exact_fk_two_point, estimate_fk_two_point,
                               fk_from_spins, fk_open_probabilities,
                               mcmc_correlation)
from isinglab.kernels import mode_kernel

ONE_MODE = mode_kernel([1.0], [1.0])


def transfer_chain_two_point(delta: float, steps: int) -> float:
    """Free-boundary nearest-neighbour chain oracle: (tanh K)^steps with
    K = -log(delta)/2, i.e. ((1 - delta) / (1 + delta))^steps."""
    return ((1.0 - delta) / (1.0 + delta)) ** steps


class TestExactCorrelation:
    def test_uncoupled_equals_transfer_chain(self):
        # alpha = 0 leaves only the nearest-neighbour coupling
        model = LatticeModel(2.0, 8, 0.0, ONE_MODE)
        value = exact_correlation(model, [0.0, 1.0])
        assert value == pytest.approx(transfer_chain_two_point(0.25, 4),
                                      abs=1e-12)
        assert value == pytest.approx(0.1296, abs=1e-12)

    def test_repeated_site_is_one(self):
        model = LatticeModel(2.0, 8, 0.7, ONE_MODE)
        assert exact_correlation(model, [0.0, 0.0]) == pytest.approx(
            1.0, abs=1e-14)

    def test_single_site_vanishes_by_symmetry(self):
        model = LatticeModel(2.0, 8, 0.7, ONE_MODE)
        assert exact_correlation(model, [1.0]) == pytest.approx(0.0,
                                                                abs=1e-13)

    def test_site_relabeling_invariance(self):
        # argument order and lattice reflection both reorder the weighted
        # sums; the stabilized enumeration must not care
        model = LatticeModel(1.5, 9, 0.9, ONE_MODE)
        a = exact_correlation(model, [0.0, 1.0])
        b = exact_correlation(model, [1.0, 0.0])
        assert a == pytest.approx(b, abs=1e-14)
        t = 6 * model.delta
        left = exact_correlation(model, [0.0, t])
        right = exact_correlation(model, [model.horizon - t, model.horizon])
        assert left == pytest.approx(right, abs=1e-14)

    def test_size_guard(self):
        model = LatticeModel(2.0, 24, 0.5, ONE_MODE)
        with pytest.raises(SizeGuardError):
            exact_correlation(model, [0.0, 1.0])

    def test_delta_validation(self):
        with pytest.raises(ValueError):
            LatticeModel(2.0, 1, 0.5, ONE_MODE)   # delta = 2 >= 1


class TestMcmcCorrelation:
    def test_matches_enumeration(self):
        model = LatticeModel(2.0, 12, 1.0, ONE_MODE)
        exact = exact_correlation(model, [0.0, 1.0])
        est = mcmc_correlation(model, [0.0, 1.0], 24_000, 11)
        assert abs(est.mean - exact) <= 3 * est.stderr

    def test_uncoupled_matches_transfer_chain(self):
        model = LatticeModel(2.0, 10, 0.0, ONE_MODE)
        est = mcmc_correlation(model, [0.0, 1.0], 24_000, 12)
        target = transfer_chain_two_point(0.2, 5)
        assert abs(est.mean - target) <= 3 * est.stderr

    def test_two_point_in_unit_interval(self):
        model = LatticeModel(2.0, 16, 2.0, ONE_MODE)
        est = mcmc_correlation(model, [0.0, 2.0], 5_000, 13)
        assert -1.0 <= est.mean <= 1.0


class TestEdwardsSokal:
    def test_neighbour_probability(self):
        model = LatticeModel(1.0, 10, 0.3, ONE_MODE)   # delta = 0.1
        p = fk_open_probabilities(model)
        assert p[0, 1] == pytest.approx(0.9, rel=1e-12)

    def test_aligned_neighbours_open_at_rate(self):
        model = LatticeModel(1.0, 10, 0.0, ONE_MODE)
        spins = np.ones(11, dtype=np.int8)
        rng = np.random.default_rng(3)
        hits = 0
        n = 4_000
        for _ in range(n):
            config = fk_from_spins(model, spins, rng)
            if any(i == 0 and j == 1 for i, j in config.open_edges):
                hits += 1
        # frequency check at p = 1 - delta = 0.9 (se ~ 0.005)
        assert abs(hits / n - 0.9) < 0.02

    def test_anti_aligned_never_open(self):
        model = LatticeModel(1.0, 4, 1.5, ONE_MODE)
        spins = np.array([1, -1, 1, -1, 1], dtype=np.int8)
        rng = np.random.default_rng(5)
        for _ in range(200):
            config = fk_from_spins(model, spins, rng)
            for i, j in config.open_edges:
                assert spins[i] == spins[j]

    def test_uncoupled_long_range_never_open(self):
        model = LatticeModel(1.0, 4, 0.0, ONE_MODE)
        spins = np.ones(5, dtype=np.int8)
        rng = np.random.default_rng(7)
        for _ in range(500):
            config = fk_from_spins(model, spins, rng)
            for i, j in config.open_edges:
                assert abs(i - j) == 1


class TestExactFkIdentity:
    def test_matches_spin_correlation_on_random_models(self):
        rng = np.random.default_rng(2024)
        for _ in range(10):
            n_intervals = int(rng.integers(2, 5))
            horizon = float(rng.uniform(0.3, 0.9)) * n_intervals
            alpha = float(rng.uniform(0.05, 1.2))
            kern = mode_kernel(list(rng.uniform(0.3, 1.5, 2)),
                               list(rng.uniform(0.5, 2.0, 2)))
            model = LatticeModel(horizon, n_intervals, alpha, kern)
            spin = exact_correlation(model, [0.0, horizon])
            cluster = exact_fk_two_point(model, [0.0, horizon])
            assert abs(spin - cluster) < 1e-12

    def test_identical_endpoints(self):
        model = LatticeModel(1.0, 3, 0.5, ONE_MODE)
        assert exact_fk_two_point(model, [0.0, 0.0]) == 1.0

    def test_uncoupled_three_vertex_path(self):
        model = LatticeModel(1.0, 2, 0.0, ONE_MODE)   # delta = 0.5
        value = exact_fk_two_point(model, [0.0, 1.0])
        assert value == pytest.approx(transfer_chain_two_point(0.5, 2),
                                      abs=1e-12)

    def test_size_guard(self):
        with pytest.raises(SizeGuardError):
            exact_fk_two_point(LatticeModel(1.0, 6, 0.5, ONE_MODE),
                               [0.0, 1.0])

    def test_fk_sampler_matches_exact(self):
        model = LatticeModel(1.0, 4, 0.7, ONE_MODE)
        exact = exact_fk_two_point(model, [0.0, 1.0])
        est = estimate_fk_two_point(model, [0.0, 1.0], 24_000, 9)
        assert abs(est.mean - exact) <= 3 * est.stderr


class TestBondPercolation:
    def test_neighbour_probability_is_one_minus_two_delta(self):
        from isinglab.discrete import bond_open_probabilities
        model = LatticeModel(2.0, 8, 0.5, ONE_MODE)   # delta = 0.25
        p = bond_open_probabilities(model)
        assert p[3, 4] == pytest.approx(0.5, rel=1e-12)

    def test_uncoupled_connectivity_is_neighbour_run(self):
        # alpha = 0: only nearest-neighbour bonds, P(0 <-> k delta) =
        # (1 - 2 delta)^k
        model = LatticeModel(2.0, 8, 0.0, ONE_MODE)
        est = bond_percolation_two_point(model, [0.0, 1.0], 40_000, 3)
        assert abs(est.mean - 0.5**4) <= 3 * est.stderr

    def test_delta_guard(self):
        model = LatticeModel(2.0, 3, 0.5, ONE_MODE)   # delta = 2/3
        with pytest.raises(ValueError):
            bond_percolation_two_point(model, [0.0, 2.0], 100, 1)

    def test_fk_dominates_independent_bonds(self):
        model = LatticeModel(2.0, 16, 0.8, ONE_MODE)
        fk = estimate_fk_two_point(model, [0.0, 1.0], 12_000, 5)
        bond = bond_percolation_two_point(model, [0.0, 1.0], 20_000, 6)
        se = math.hypot(fk.stderr, bond.stderr)
        assert fk.mean >= bond.mean - 3 * se


class TestConvergenceTowardContinuum:
    def test_exact_values_increase_toward_continuum(self):
        # refining the grid raises the two-point value toward the
        # path-measure limit (enumerable sizes only)
        vals = [exact_correlation(LatticeModel(2.0, N, 1.0, ONE_MODE),
                                  [0.0, 1.0]) for N in (8, 16)]
        assert vals[1] > vals[0]

    def test_seed_determinism(self):
        model = LatticeModel(2.0, 12, 1.0, ONE_MODE)
        a = mcmc_correlation(model, [0.0, 1.0], 4_000, 17)
        b = mcmc_correlation(model, [0.0, 1.0], 4_000, 17)
        assert a == b
