"""Truncated Hamiltonian: analytic oracles, spectral sanity, cross-checks."""

import math

import numpy as np
import pytest

from isinglab.continuum import (IsingParams, alpha_from_lambda,
                                estimate_partition_function_direct,
                                overlap_upper_bound)
from isinglab.fock import (DegenerateGroundStateError, TruncatedModel,
                           build_hamiltonian, cutoff_convergence, decompose,
                           ground_state_report, parity_symmetry_defect,
                           semigroup_overlap)
from isinglab.kernels import mode_kernel


def two_by_two_block_ground_energy(lam: float, omega: float,
                                   v: float) -> float:
    """Closed-form ground energy of the single-mode cutoff-1 model.

    With basis (up,0), (up,1), (down,0), (down,1) the Hamiltonian splits
    into 2x2 blocks; the block containing (down,0) is [[2+omega, c], [c, 0]]
    ... for omega = 1 it is [[3, c], [c, 0]] with c = lam * v / 2, whose
    lower eigenvalue is (3 - sqrt(9 + 4 c^2)) / 2.
    """
    c = lam * v / 2.0
    a = 2.0 + omega
    return (a - math.sqrt(a * a + 4 * c * c)) / 2.0


class TestAssembly:
    def test_uncoupled_is_diagonal(self):
        model = TruncatedModel.create([(1.0, 1.0)], 4, 0.0)
        H = build_hamiltonian(model)
        assert np.allclose(H, np.diag(np.diag(H)))
        res = decompose(model)
        assert res.ground_energy == 0.0
        assert res.vacuum_overlap == 1.0
        assert res.gap == pytest.approx(1.0, abs=1e-14)

    def test_uncoupled_gap_is_min_of_two_and_omega(self):
        res = decompose(TruncatedModel.create([(3.0, 1.0)], 4, 0.0))
        assert res.gap == pytest.approx(2.0, abs=1e-13)
        res = decompose(TruncatedModel.create([(0.5, 1.0)], 4, 0.0))
        assert res.gap == pytest.approx(0.5, abs=1e-13)

    def test_four_by_four_explicit(self):
        model = TruncatedModel.create([(1.0, 1.0)], 1, 1.0)
        H = build_hamiltonian(model)
        expected = np.array([[2.0, 0.0, 0.0, 0.5],
                             [0.0, 3.0, 0.5, 0.0],
                             [0.0, 0.5, 0.0, 0.0],
                             [0.5, 0.0, 0.0, 1.0]])
        assert np.array_equal(H, expected)
        res = decompose(model)
        assert res.ground_energy == pytest.approx(
            two_by_two_block_ground_energy(1.0, 1.0, 1.0), abs=1e-12)

    def test_exact_symmetry(self):
        H = build_hamiltonian(TruncatedModel.create([(1.0, 1.0), (2.0, 0.5)],
                                                    3, 0.8))
        assert np.array_equal(H, H.T)

    def test_parity_symmetry(self):
        defect = parity_symmetry_defect(
            TruncatedModel.create([(1.0, 1.0), (0.7, 0.4)], 3, 1.3))
        assert defect < 1e-12

    def test_dimension_limit(self):
        with pytest.raises(ValueError):
            TruncatedModel.create([(1.0, 1.0)] * 6, 9, 1.0)

    def test_eigenvector_orthonormality(self):
        from scipy.linalg import eigh
        H = build_hamiltonian(TruncatedModel.create([(1.0, 1.0)], 12, 1.0))
        vals, vecs = eigh(H)
        residual = np.max(np.abs(vecs.T @ vecs - np.eye(vals.size)))
        assert residual < 1e-10


class TestSemigroup:
    def test_uncoupled_is_one(self):
        model = TruncatedModel.create([(1.0, 1.0)], 4, 0.0)
        for T in (0.5, 2.0, 10.0):
            assert semigroup_overlap(model, T) == pytest.approx(1.0,
                                                                abs=1e-14)

    def test_log_convex_in_horizon(self):
        model = TruncatedModel.create([(1.0, 1.0)], 12, 1.0)
        spectral = decompose(model)
        ts = np.linspace(0.2, 6.0, 25)
        logs = np.log([spectral.semigroup_overlap(t) for t in ts])
        assert np.all(logs[:-2] + logs[2:] - 2 * logs[1:-1] >= -1e-10)

    def test_long_horizon_rate_is_ground_energy(self):
        model = TruncatedModel.create([(1.0, 1.0)], 20, 0.5)
        spectral = decompose(model)
        rate = -math.log(spectral.semigroup_overlap(50.0)) / 50.0
        assert abs(rate - spectral.ground_energy) < 1e-3

    def test_matches_path_sampling(self):
        # the module's central cross-check, smoke scale
        lam = 0.5
        model = TruncatedModel.create([(1.0, 1.0)], 40, lam)
        exact = semigroup_overlap(model, 1.0)
        params = IsingParams(alpha_from_lambda(lam), 1.0,
                             mode_kernel([1.0], [1.0]))
        mc = estimate_partition_function_direct(params, 20_000, 771)
        assert abs(mc.mean - exact) <= 3 * mc.stderr


class TestGroundStateReport:
    def test_overlap_below_closed_form_bound(self):
        model = TruncatedModel.create([(1.0, 1.0)], 10, 1.0)
        res = ground_state_report(model)
        bound = overlap_upper_bound(1.0, mode_kernel([1.0], [1.0]))
        assert res.vacuum_overlap <= bound + 1e-3

    def test_overlap_nonincreasing_in_coupling(self):
        overlaps = [ground_state_report(
            TruncatedModel.create([(1.0, 1.0)], 12, lam)).vacuum_overlap
            for lam in (0.0, 0.5, 1.0, 1.5)]
        assert all(b <= a + 1e-12 for a, b in zip(overlaps, overlaps[1:]))
        assert overlaps[0] == 1.0

    def test_overlap_is_probability(self):
        res = ground_state_report(TruncatedModel.create([(1.0, 0.7)], 8,
                                                        2.0))
        assert 0.0 < res.vacuum_overlap <= 1.0

    def test_degenerate_ground_level_raises(self):
        with pytest.raises(DegenerateGroundStateError):
            decompose(TruncatedModel.create([(1e-12, 1.0)], 1, 0.0))


class TestCutoffConvergence:
    def test_uncoupled_rows_identical(self):
        model = TruncatedModel.create([(1.0, 1.0)], 8, 0.0)
        rows, flags = cutoff_convergence(model, [2, 4, 6])
        assert flags == ()
        energies = {row.ground_energy for row in rows}
        overlaps = {row.vacuum_overlap for row in rows}
        assert energies == {0.0} and overlaps == {1.0}

    def test_energy_nonincreasing_and_converged(self):
        model = TruncatedModel.create([(1.0, 1.0)], 14, 1.0)
        rows, _ = cutoff_convergence(model, [4, 8, 12, 14])
        energies = [row.ground_energy for row in rows]
        assert all(b <= a + 1e-14 for a, b in zip(energies, energies[1:]))
        assert abs(energies[-1] - energies[-2]) < 1e-8

    def test_cutoffs_must_increase(self):
        model = TruncatedModel.create([(1.0, 1.0)], 8, 1.0)
        with pytest.raises(ValueError):
            cutoff_convergence(model, [4, 4, 8])


class TestPerturbativeEnergy:
    def test_second_order_coefficient(self):
        # E(lam) ~ -(lam^2/4) sum_j v_j^2/(omega_j + 2) at small coupling,
        # matching the exponential decay rate of the sampled weight
        lam = 0.05
        model = TruncatedModel.create([(1.0, 1.0), (2.0, 0.5)], 10, lam)
        res = decompose(model)
        coeff = sum(v * v / (w + 2.0)
                    for w, v in [(1.0, 1.0), (2.0, 0.5)])
        assert res.ground_energy == pytest.approx(-(lam**2 / 4.0) * coeff,
                                                  rel=2e-3)
