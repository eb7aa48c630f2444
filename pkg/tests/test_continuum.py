"""Path measure sampling: energies vs quadrature, stationarity, estimators."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from isinglab.continuum import (ChainState, IsingParams, SpinPath,
                                _cross_delete, _cross_insert, _interaction,
                                alpha_from_lambda, estimate_correlation,
                                estimate_partition_function_direct,
                                estimate_partition_ratio, estimate_rho_ratio,
                                estimate_rho_series, estimate_susceptibility,
                                mcmc_step, overlap_upper_bound, path_energy,
                                run_chain)
from isinglab.kernels import mode_kernel, poly_kernel

ONE_MODE = mode_kernel([1.0], [1.0])


class TestSpinPath:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpinPath(1.0, 1, (0.5, 0.5))
        with pytest.raises(ValueError):
            SpinPath(1.0, 1, (1.5,))
        with pytest.raises(ValueError):
            SpinPath(1.0, 2, ())

    def test_values(self):
        path = SpinPath(2.0, 1, (0.5, 1.25))
        assert path.value_at(0.0) == 1
        assert path.value_at(0.6) == -1
        assert path.value_at(1.5) == 1
        assert list(path.values_at(np.array([0.1, 0.7, 1.9]))) == [1, -1, 1]

    def test_magnetization_integral(self):
        path = SpinPath(2.0, 1, (0.5,))
        assert path.magnetization_integral() == pytest.approx(0.5 - 1.5)


class TestPathEnergy:
    def test_constant_path_unit_square(self):
        path = SpinPath(1.0, 1, ())
        assert path_energy(path, ONE_MODE, 1.0) == pytest.approx(
            2 * math.exp(-1), rel=1e-12)

    def test_alpha_zero(self):
        path = SpinPath(1.0, 1, (0.3, 0.8))
        assert path_energy(path, ONE_MODE, 0.0) == 0.0

    def test_global_flip_invariance(self):
        up = SpinPath(2.0, 1, (0.3, 1.1, 1.7))
        down = SpinPath(2.0, -1, (0.3, 1.1, 1.7))
        assert path_energy(up, ONE_MODE, 0.7) == path_energy(down, ONE_MODE,
                                                             0.7)

    def test_vs_quadrature_oracle(self):
        path = SpinPath(2.0, 1, (0.6, 1.3))
        for kern, alpha in ((ONE_MODE, 0.8), (poly_kernel(1.3), 0.5)):
            oracle, err = integrate.dblquad(
                lambda t, s: kern.eval(t - s) * path.value_at(s)
                * path.value_at(t), 0, 2, 0, 2, epsabs=1e-11)
            assert path_energy(path, kern, alpha) == pytest.approx(
                alpha * oracle, abs=100 * max(err, 1e-11))

    def test_single_jump_symmetry(self):
        # a jump at T/2 splits the square into same/cross blocks of equal
        # same-block weight for any even kernel
        T = 3.0
        same_left = ONE_MODE.double_integral(0, T / 2, 0, T / 2)
        same_right = ONE_MODE.double_integral(T / 2, T, T / 2, T)
        cross = ONE_MODE.double_integral(0, T / 2, T / 2, T)
        assert same_left == pytest.approx(same_right, rel=1e-12)
        path = SpinPath(T, 1, (T / 2,))
        expected = 0.9 * (2 * same_left - 2 * cross)
        assert path_energy(path, ONE_MODE, 0.9) == pytest.approx(expected,
                                                                 rel=1e-10)


class TestIncrementalEnergies:
    def test_insert_matches_full_recompute(self):
        jumps = [0.4, 1.1, 1.9]
        Gs = ONE_MODE.scalar_G(4.0)
        for u in (0.2, 0.9, 1.5, 1.95):
            before = _interaction(jumps, 1, 2.0, ONE_MODE, 1.0)
            after = _interaction(sorted(jumps + [u]), 1, 2.0, ONE_MODE, 1.0)
            de = -4.0 * _cross_insert(jumps, 1, 2.0, u, Gs)
            assert de == pytest.approx(after - before, abs=1e-12)

    def test_delete_matches_full_recompute(self):
        jumps = [0.4, 1.1, 1.9]
        Gs = ONE_MODE.scalar_G(4.0)
        for j in range(3):
            before = _interaction(jumps, 1, 2.0, ONE_MODE, 1.0)
            reduced = jumps[:j] + jumps[j + 1:]
            after = _interaction(reduced, 1, 2.0, ONE_MODE, 1.0)
            de = -4.0 * _cross_delete(jumps, 1, 2.0, j, Gs)
            assert de == pytest.approx(after - before, abs=1e-12)

    def test_insert_delete_involution_bit_identical(self):
        jumps = [0.4, 1.1]
        Gs = ONE_MODE.scalar_G(4.0)
        u = 0.77
        de_in = -4.0 * _cross_insert(jumps, 1, 2.0, u, Gs)
        with_u = sorted(jumps + [u])
        de_out = -4.0 * _cross_delete(with_u, 1, 2.0, with_u.index(u), Gs)
        assert de_in == -de_out     # exact float negation

    def test_energy_drift_check_passes(self):
        params = IsingParams(1.0, 2.0, ONE_MODE)
        state = ChainState(params, 5)
        for _ in range(20_000):
            mcmc_step(state)
        state.check_drift()     # raises on drift
        assert state.energy == pytest.approx(state.recompute_energy(),
                                             rel=1e-9, abs=1e-12)


class TestChainStationarity:
    def test_free_jump_count_is_poisson(self):
        # thinned counts at alpha = 0 against the Poisson(T) law
        params = IsingParams(0.0, 2.0, ONE_MODE)
        sample = run_chain(params, 502_000, 2_000, 424242)
        counts = sample.n_jumps[::5][:100_000]
        assert counts.size == 100_000
        max_bin = 10
        observed = np.bincount(np.minimum(counts, max_bin),
                               minlength=max_bin + 1)
        probs = np.array([stats.poisson.pmf(k, 2.0) for k in range(max_bin)])
        probs = np.append(probs, 1.0 - probs.sum())
        result = stats.chisquare(observed, probs * counts.size)
        assert result.pvalue > 0.01

    def test_acceptance_of_favorable_moves(self):
        # the Metropolis rule accepts any proposal whose log weight is >= 0
        from isinglab.continuum import _accept
        params = IsingParams(0.0, 2.0, ONE_MODE)
        state = ChainState(params, 1)
        assert _accept(state, 0.0)
        assert _accept(state, 50.0)
        hits = sum(_accept(state, -30.0) for _ in range(2000))
        assert hits == 0

    def test_stationary_law_matches_direct_integration(self):
        # freeze a small path space (T = 1/2, sectors with <= 2 jumps) and
        # compare binned chain frequencies against numerically integrated
        # sector weights: TV distance < 0.02 at one million samples
        alpha, T = 0.8, 0.5
        kern = ONE_MODE
        quartiles = np.linspace(0.0, T, 5)

        def weight1(u):
            return math.exp(path_energy(SpinPath(T, 1, (u,)), kern, alpha))

        def weight2(u, v):
            return math.exp(path_energy(SpinPath(T, 1, (u, v)), kern, alpha))

        masses = {(0, None): math.exp(
            path_energy(SpinPath(T, 1, ()), kern, alpha))}
        for i in range(4):
            val, _ = integrate.quad(weight1, quartiles[i], quartiles[i + 1],
                                    epsabs=1e-12)
            masses[(1, i)] = val
        for i in range(4):
            for j in range(i, 4):
                lo_u, hi_u = quartiles[i], quartiles[i + 1]
                val, _ = integrate.dblquad(
                    lambda v, u: weight2(u, v) if v > u else 0.0,
                    lo_u, hi_u,
                    lambda u: max(u, quartiles[j]),
                    lambda u: quartiles[j + 1], epsabs=1e-10)
                masses[(2, (i, j))] = val
        total = sum(masses.values())
        target = {key: val / total for key, val in masses.items()}

        params = IsingParams(alpha, T, kern)
        state = ChainState(params, 20260811)
        counts = {key: 0 for key in target}
        kept = 0
        n_samples = 1_000_000
        for _ in range(n_samples):
            for _ in range(4):
                mcmc_step(state)
            jumps = state.jumps
            k = len(jumps)
            if k == 0:
                counts[(0, None)] += 1
            elif k == 1:
                counts[(1, min(3, int(jumps[0] / T * 4)))] += 1
            elif k == 2:
                a = min(3, int(jumps[0] / T * 4))
                b = min(3, int(jumps[1] / T * 4))
                counts[(2, (a, b))] += 1
            else:
                continue
            kept += 1
        tv = 0.5 * sum(abs(counts[key] / kept - target[key])
                       for key in target)
        assert tv < 0.02


class TestCorrelation:
    def test_free_two_point(self):
        params = IsingParams(0.0, 4.0, ONE_MODE)
        est = estimate_correlation(params, [1.0], 60_000, 2_000, 31)
        assert abs(est.mean - math.exp(-2.0)) <= 3 * est.stderr

    def test_t_zero_is_exactly_one(self):
        params = IsingParams(0.7, 2.0, ONE_MODE)
        est = estimate_correlation(params, [0.0], 2_000, 100, 5)
        assert est.mean == 1.0
        assert est.stderr == 0.0

    def test_conditioned_chain_agrees(self):
        free = estimate_correlation(IsingParams(0.8, 2.0, ONE_MODE), [1.0],
                                    40_000, 2_000, 7)
        cond = estimate_correlation(
            IsingParams(0.8, 2.0, ONE_MODE, condition_start=True), [1.0],
            40_000, 2_000, 8)
        se = math.hypot(free.stderr, cond.stderr)
        assert abs(free.mean - cond.mean) <= 3 * se

    def test_against_exact_matrix_element(self):
        # interacting two-point value pinned by the exact spin-flip
        # insertion oracle of the truncated-model module
        from isinglab.fock import TruncatedModel, semigroup_two_point
        lam = math.sqrt(8.0)    # alpha = 1
        exact = semigroup_two_point(TruncatedModel.create([(1.0, 1.0)], 60,
                                                          lam), 2.0, 1.0)
        est = estimate_correlation(IsingParams(1.0, 2.0, ONE_MODE), [1.0],
                                   120_000, 3_000, 23)
        assert abs(est.mean - exact) <= 3 * est.stderr

    def test_two_mode_against_exact_matrix_element(self):
        from isinglab.fock import TruncatedModel, semigroup_two_point
        lam = 1.2
        exact = semigroup_two_point(
            TruncatedModel.create([(1.0, 1.0), (2.0, 0.8)], 14, lam), 2.0,
            0.9)
        kern = mode_kernel([1.0, 0.64], [1.0, 2.0])
        est = estimate_correlation(
            IsingParams(alpha_from_lambda(lam), 2.0, kern), [0.9], 60_000,
            3_000, 17)
        assert abs(est.mean - exact) <= 3 * est.stderr

    def test_burn_in_validation(self):
        with pytest.raises(ValueError):
            estimate_correlation(IsingParams(0.0, 1.0, ONE_MODE), [0.5],
                                 100, 100, 1)

    def test_seed_determinism(self):
        params = IsingParams(0.5, 2.0, ONE_MODE)
        a = estimate_correlation(params, [1.0], 5_000, 500, 99)
        b = estimate_correlation(params, [1.0], 5_000, 500, 99)
        assert a == b


class TestPartitionFunction:
    def test_free_is_exactly_one(self):
        est = estimate_partition_function_direct(
            IsingParams(0.0, 2.0, ONE_MODE), 1_000, 3)
        assert est.mean == 1.0
        assert est.stderr == 0.0

    def test_jensen_lower_bound(self):
        # Z >= exp(alpha * E_free[pair energy]), the free expectation being
        # the integral of g(t-s) e^{-2|t-s|} over the square
        alpha, T = 0.5, 2.0
        est = estimate_partition_function_direct(
            IsingParams(alpha, T, ONE_MODE), 40_000, 17)
        # int int_{[0,T]^2} f(|t-s|) = 2 int_0^T (T-u) f(u) du
        free_pair, _ = integrate.quad(
            lambda u: 2 * (T - u) * math.exp(-3 * u), 0, T, epsabs=1e-12)
        assert est.mean >= math.exp(alpha * free_pair) - 3 * est.stderr

    def test_variance_guard_flag(self):
        est = estimate_partition_function_direct(
            IsingParams(20.0, 4.0, ONE_MODE), 200, 5)
        assert "variance-guard" in est.flags


class TestPartitionRatio:
    def test_free_is_exactly_one(self):
        est = estimate_partition_ratio(IsingParams(0.0, 1.0, ONE_MODE),
                                       1_000, 100, 3)
        assert est.mean == 1.0 and est.stderr == 0.0

    def test_vs_direct_estimates(self):
        alpha, T = 0.5, 1.0
        ratio = estimate_partition_ratio(IsingParams(alpha, T, ONE_MODE),
                                         30_000, 2_000, 5)
        z_T = estimate_partition_function_direct(
            IsingParams(alpha, T, ONE_MODE), 50_000, 6)
        z_2T = estimate_partition_function_direct(
            IsingParams(alpha, 2 * T, ONE_MODE), 50_000, 7)
        direct = z_2T.mean / z_T.mean**2
        se = math.hypot(ratio.stderr,
                        z_2T.stderr / z_T.mean**2,
                        2 * z_2T.mean * z_T.stderr / z_T.mean**3)
        assert abs(ratio.mean - direct) <= 3 * se

    def test_at_least_one(self):
        est = estimate_partition_ratio(IsingParams(1.0, 2.0, ONE_MODE),
                                       15_000, 1_000, 11)
        assert est.mean >= 1.0 - 3 * est.stderr

    def test_reciprocal_nonincreasing_in_horizon(self):
        ests = [estimate_partition_ratio(IsingParams(1.0, T, ONE_MODE),
                                         15_000, 1_000, 13 + int(T))
                for T in (1.0, 2.0)]
        recip = [1.0 / e.mean for e in ests]
        ses = [e.stderr / e.mean**2 for e in ests]
        assert recip[1] <= recip[0] + 3 * math.hypot(*ses)


class TestRhoEstimators:
    def test_rho_ratio_uncoupled_exact(self):
        result = estimate_rho_ratio(0.0, ONE_MODE, (1.0, 2.0, 3.0), 1_000,
                                    100, 3)
        for est in result.estimates:
            assert est.mean == 1.0 and est.stderr == 0.0
        assert result.converged

    def test_rho_ratio_in_unit_interval_and_monotone_in_lambda(self):
        weak = estimate_rho_ratio(0.5, ONE_MODE, (2.0, 3.0, 4.0), 12_000,
                                  1_000, 5)
        strong = estimate_rho_ratio(1.0, ONE_MODE, (2.0, 3.0, 4.0), 12_000,
                                    1_000, 6)
        for est in weak.estimates + strong.estimates:
            assert est.mean <= 1.0 + 3 * est.stderr
            assert est.mean > 0.0
        for w, s in zip(weak.estimates, strong.estimates):
            se = math.hypot(w.stderr, s.stderr)
            assert s.mean <= w.mean + 3 * se

    def test_rho_series_uncoupled(self):
        result = estimate_rho_series(0.0, ONE_MODE, 2, 20.0, 64, 1_000, 100,
                                     3)
        assert result.total == 1.0
        assert result.rho_upper == 1.0
        assert not result.n1_divergent

    def test_rho_series_order_guard(self):
        with pytest.raises(ValueError):
            estimate_rho_series(1.0, ONE_MODE, 4, 20.0, 64, 1_000, 100, 3)

    def test_order_one_term_with_analytic_free_correlator(self):
        # with tau(t) = e^{-2t} the order-1 term collapses to
        # 2 alpha int t g(t) e^{-2t} dt, the overlap-bound integral
        lam = 1.0
        alpha = alpha_from_lambda(lam)
        result = estimate_rho_series(
            lam, ONE_MODE, 1, 40.0, 4_000, 10, 1, 97,
            tau_pair_fn=lambda pts: np.exp(-2.0 * np.asarray(pts)))
        term1 = result.terms[1]
        target = 2.0 * alpha * ONE_MODE.overlap_bound_integral()
        assert abs(term1.value - target) <= 3 * term1.stderr

    def test_series_total_matches_exact_reciprocal_overlap(self):
        # chain-backed series route, pinned by the exact truncated-model
        # overlap: the truncated total sits just below 1 / rho (dropped
        # orders are nonnegative), within error bars plus a small
        # truncation allowance
        from isinglab.fock import TruncatedModel, decompose
        lam = 1.0
        exact_rho = decompose(TruncatedModel.create([(1.0, 1.0)], 30,
                                                    lam)).vacuum_overlap
        result = estimate_rho_series(lam, ONE_MODE, 2, 12.0, 256, 9_000,
                                     1_000, 99)
        target = 1.0 / exact_rho
        assert result.total <= target + 3 * result.total_stderr
        assert abs(result.total - target) <= 3 * result.total_stderr + 2e-3
        assert result.rho_upper >= exact_rho - 3 * result.rho_upper_stderr
        assert not result.n1_divergent
        # every term nonnegative and the order-1 term dominated by order-0
        values = [t.value for t in result.terms]
        assert all(v >= -1e-12 for v in values)
        assert values[1] >= 2.0 * alpha_from_lambda(lam) \
            * ONE_MODE.overlap_bound_integral() - 3 * result.terms[1].stderr

    def test_heavy_tail_flags_order_one_divergence(self):
        result = estimate_rho_series(
            3.0, poly_kernel(1.0), 1, 30.0, 128, 10, 1, 3,
            tau_pair_fn=lambda pts: np.full(np.asarray(pts).shape, 0.5))
        assert result.n1_divergent
        assert "n1-divergent" in result.flags

    def test_overlap_upper_bound_values(self):
        assert overlap_upper_bound(0.0, ONE_MODE) == 1.0
        assert overlap_upper_bound(2.0, ONE_MODE) == pytest.approx(
            math.exp(-1.0 / 9.0), rel=1e-12)
        assert 0.0 < overlap_upper_bound(3.0, poly_kernel(1.0)) <= 1.0


class TestSusceptibility:
    def test_free_value(self):
        # (1/T) int int e^{-2|t-s|} = 1 - (1 - e^{-2T}) / (2T)
        T = 2.0
        target = 1.0 - (1.0 - math.exp(-2 * T)) / (2 * T)
        oracle, _ = integrate.dblquad(
            lambda t, s: math.exp(-2 * abs(t - s)), 0, T, 0, T,
            epsabs=1e-10)
        assert target == pytest.approx(oracle / T, rel=1e-7)
        est = estimate_susceptibility(IsingParams(0.0, T, ONE_MODE),
                                      120_000, 2_000, 8)
        assert abs(est.mean - target) <= 3 * est.stderr

    def test_nonnegative_and_monotone_in_alpha(self):
        weak = estimate_susceptibility(IsingParams(0.0, 2.0, ONE_MODE),
                                       40_000, 2_000, 9)
        strong = estimate_susceptibility(IsingParams(1.0, 2.0, ONE_MODE),
                                         40_000, 2_000, 10)
        assert weak.mean >= 0.0 and strong.mean >= 0.0
        se = math.hypot(weak.stderr, strong.stderr)
        assert strong.mean >= weak.mean - 3 * se
