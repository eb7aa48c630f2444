"""Acceptance battery: the properties the build must reproduce.

Each criterion is a deterministic function (fixed internal seeds) returning
a CriterionResult with a machine-readable verdict.  `fast` runs a cheap
subset; `full` runs everything.  These are statistical checks at desk
scale: inequalities carry three-standard-error slack, exact identities are
checked to twelve digits.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .continuum import (IsingParams, alpha_from_lambda,
                        estimate_correlation,
                        estimate_partition_function_direct,
                        estimate_partition_ratio, estimate_rho_ratio,
                        overlap_upper_bound, run_chain)
from .estimates import batch_means, combined_stderr, estimate_from_series
from .kernels import mode_kernel, poly_kernel
from .rngtools import split_seed

BASE_SEED = 0x15B6C


@dataclass
class CriterionResult:
    id: str
    name: str
    passed: bool
    observed: float
    bound: float
    stderr: float
    runtime_s: float = 0.0
    details: dict = field(default_factory=dict)

    def verdict(self) -> dict:
        return {"id": self.id, "passed": bool(self.passed),
                "observed": self.observed, "bound": self.bound,
                "stderr": self.stderr}

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] {self.id} {self.name}: observed={self.observed:.6g} "
                f"bound={self.bound:.6g} stderr={self.stderr:.6g} "
                f"({self.runtime_s:.1f}s)")


def _seed(k: int) -> int:
    return split_seed(BASE_SEED, k)


def _delta_diff(series4: np.ndarray, series2a: np.ndarray,
                series2b: np.ndarray, n_batches: int = 32
                ) -> tuple[float, float]:
    """E[ABCD] - E[AB] E[CD] with a delta-method error from batch means."""
    def batches(series):
        size = series.size // n_batches
        return series[:size * n_batches].reshape(n_batches, size).mean(axis=1)

    b = np.vstack([batches(series4), batches(series2a), batches(series2b)])
    m4, m2a, m2b = series4.mean(), series2a.mean(), series2b.mean()
    diff = m4 - m2a * m2b
    grad = np.array([1.0, -m2b, -m2a])
    cov = np.cov(b) / n_batches
    var = float(grad @ cov @ grad)
    return float(diff), math.sqrt(max(var, 0.0))


# -- criteria -------------------------------------------------------------------

def criterion_free_correlation() -> CriterionResult:
    """C1: at alpha = 0 the two-point function is exp(-2 t)."""
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    params = IsingParams(0.0, 4.0, kernel)
    points = (0.5, 1.0, 2.0)
    sample = run_chain(params, 520_000, 2_000, _seed(1), points=points)
    worst = None
    details = {}
    passed = True
    for col, t in enumerate(points):
        series = (sample.values[:, col].astype(np.int64)
                  * sample.x0).astype(float)
        est = estimate_from_series(series, _seed(1))
        target = math.exp(-2.0 * t)
        diff = abs(est.mean - target)
        ok = (diff <= 3.0 * est.stderr and est.stderr <= 2e-3
              and est.n_effective >= 1e5)
        passed &= ok
        details[f"t={t}"] = {"mean": est.mean, "target": target,
                             "stderr": est.stderr,
                             "n_eff": est.n_effective, "ok": ok}
        if worst is None or diff / max(est.stderr, 1e-12) > worst[0]:
            worst = (diff / max(est.stderr, 1e-12), diff, est.stderr)
    runtime = time.monotonic() - t0
    passed &= runtime < 120.0
    details["runtime_limit_s"] = 120.0
    return CriterionResult("C1", "free-measure correlation", passed,
                           worst[1], 3.0 * worst[2], worst[2], runtime,
                           details)


def criterion_feynman_kac() -> CriterionResult:
    """C2: semigroup matrix element equals the sampled partition function."""
    from .fock import TruncatedModel, semigroup_overlap
    t0 = time.monotonic()
    lam = 0.5
    exact = semigroup_overlap(TruncatedModel.create([(1.0, 1.0)], 40, lam),
                              1.0)
    kernel = mode_kernel([1.0], [1.0])
    params = IsingParams(alpha_from_lambda(lam), 1.0, kernel)
    mc = estimate_partition_function_direct(params, 60_000, _seed(2))
    diff = abs(mc.mean - exact)
    runtime = time.monotonic() - t0
    passed = (diff <= 3.0 * mc.stderr and mc.stderr <= 1e-3
              and runtime < 120.0)
    return CriterionResult("C2", "Feynman-Kac identity", passed, diff,
                           3.0 * mc.stderr, mc.stderr, runtime,
                           {"exact": exact, "mc": mc.mean})


def criterion_fk_identity_exact() -> CriterionResult:
    """C3: spin correlation equals cluster connection exactly (tiny grids)."""
    from .discrete import LatticeModel, exact_correlation, exact_fk_two_point
    t0 = time.monotonic()
    rng = np.random.default_rng(_seed(3))
    max_diff = 0.0
    details = {}
    for trial in range(10):
        n_intervals = int(rng.integers(2, 5))
        horizon = float(rng.uniform(0.3, 0.9)) * n_intervals
        alpha = float(rng.uniform(0.05, 1.2))
        n_modes = int(rng.integers(1, 3))
        kernel = mode_kernel(list(rng.uniform(0.3, 1.5, n_modes)),
                             list(rng.uniform(0.5, 2.0, n_modes)))
        model = LatticeModel(horizon, n_intervals, alpha, kernel)
        spin = exact_correlation(model, [0.0, horizon])
        cluster = exact_fk_two_point(model, [0.0, horizon])
        diff = abs(spin - cluster)
        max_diff = max(max_diff, diff)
        details[f"trial{trial}"] = {"N": n_intervals, "alpha": alpha,
                                    "diff": diff}
    return CriterionResult("C3", "Ising-FK identity exact",
                           max_diff < 1e-12, max_diff, 1e-12, 0.0,
                           time.monotonic() - t0, details)


def criterion_stochastic_domination() -> CriterionResult:
    """C4: cluster-coupled two-point dominates the independent-bond one."""
    from .discrete import (LatticeModel, bond_percolation_two_point,
                           estimate_fk_two_point)
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    combos = ((0.5, 32), (1.0, 32), (1.0, 64))
    endpoints = [0.0, 1.0]
    passed = True
    worst = None
    details = {}
    for k, (alpha, n_grid) in enumerate(combos):
        model = LatticeModel(2.0, n_grid, alpha, kernel)
        fk = estimate_fk_two_point(model, endpoints, 14_000, _seed(40 + k))
        bond = bond_percolation_two_point(model, endpoints, 25_000,
                                          _seed(50 + k))
        se = combined_stderr(fk.stderr, bond.stderr)
        margin = fk.mean - bond.mean
        ok = margin >= -3.0 * se
        passed &= ok
        details[f"alpha={alpha},N={n_grid}"] = {
            "fk": fk.mean, "bond": bond.mean, "margin": margin,
            "stderr": se, "ok": ok}
        if worst is None or margin / se < worst[0] / worst[1]:
            worst = (margin, se)
    return CriterionResult("C4", "stochastic domination", passed, worst[0],
                           -3.0 * worst[1], worst[1],
                           time.monotonic() - t0, details)


def criterion_gks(sign: float = 1.0) -> CriterionResult:
    """C5: nonnegative products and positive association (50 random tests).

    `sign` multiplies the measured products; -1 is the negative control
    that must make the nonnegativity half fail.
    """
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    rng = np.random.default_rng(_seed(5))
    passed = True
    worst = None
    details = {"n_tests": 0}
    for a_idx, alpha in enumerate((0.3, 1.0)):
        params = IsingParams(alpha, 3.0, kernel)
        points = np.sort(rng.uniform(0.0, 3.0, 10))
        sample = run_chain(params, 32_000, 2_000, _seed(60 + a_idx),
                           points=points)
        vals = sample.values.astype(np.int64)
        for test in range(25):
            details["n_tests"] += 1
            if test % 2 == 0:
                # nonnegativity of a random even product
                k = 2 if test % 4 == 0 else 4
                cols = rng.choice(10, size=k, replace=False)
                series = sign * np.prod(vals[:, cols], axis=1).astype(float)
                mean, se = batch_means(series)
                ok = mean >= -3.0 * se
                margin = mean
            else:
                # positive association: quadruple vs product of its pairs
                cols = rng.choice(10, size=4, replace=False)
                s4 = np.prod(vals[:, cols], axis=1).astype(float)
                s2a = np.prod(vals[:, cols[:2]], axis=1).astype(float)
                s2b = np.prod(vals[:, cols[2:]], axis=1).astype(float)
                diff, se = _delta_diff(sign * s4, sign * s2a, s2b)
                ok = diff >= -3.0 * se
                margin = diff
            passed &= ok
            if worst is None or margin / max(se, 1e-12) < worst[0]:
                worst = (margin / max(se, 1e-12), margin, se)
    return CriterionResult("C5", "GKS inequalities", passed, worst[1],
                           -3.0 * worst[2], worst[2],
                           time.monotonic() - t0, details)


def criterion_monotonicity() -> CriterionResult:
    """C6: the two-point value grows with coupling and with the horizon."""
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    alphas = (0.0, 0.5, 1.0, 2.0)
    horizons = (2.0, 4.0, 8.0)
    ests_alpha = [estimate_correlation(IsingParams(a, 4.0, kernel), [1.0],
                                       26_000, 2_000, _seed(70 + i))
                  for i, a in enumerate(alphas)]
    ests_T = [estimate_correlation(IsingParams(1.0, T, kernel), [1.0],
                                   26_000, 2_000, _seed(80 + i))
              for i, T in enumerate(horizons)]
    passed = True
    worst = None
    details = {}
    for label, seq, grid in (("alpha", ests_alpha, alphas),
                             ("T", ests_T, horizons)):
        details[label] = [{"at": g, "mean": e.mean, "stderr": e.stderr}
                          for g, e in zip(grid, seq)]
        for prev, nxt in zip(seq, seq[1:]):
            se = combined_stderr(prev.stderr, nxt.stderr)
            margin = nxt.mean - prev.mean
            ok = margin >= -3.0 * se
            passed &= ok
            if worst is None or margin / se < worst[0] / worst[1]:
                worst = (margin, se)
    return CriterionResult("C6", "correlation monotonicity", passed,
                           worst[0], -3.0 * worst[1], worst[1],
                           time.monotonic() - t0, details)


def criterion_discrete_to_continuum() -> CriterionResult:
    """C7: lattice correlations converge to the path-measure value."""
    from .discrete import LatticeModel, exact_correlation, mcmc_correlation
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    alpha, horizon, t = 1.0, 2.0, 1.0
    sites = [0.0, t]
    values = {}
    errors = {}
    for n_grid in (8, 16):
        values[n_grid] = exact_correlation(
            LatticeModel(horizon, n_grid, alpha, kernel), sites)
        errors[n_grid] = 0.0
    for n_grid, sweeps in ((32, 90_000), (64, 70_000)):
        est = mcmc_correlation(LatticeModel(horizon, n_grid, alpha, kernel),
                               sites, sweeps, _seed(90 + n_grid))
        values[n_grid] = est.mean
        errors[n_grid] = est.stderr
    cont = estimate_correlation(IsingParams(alpha, horizon, kernel), [t],
                                150_000, 3_000, _seed(99))
    grids = (8, 16, 32, 64)
    diffs = [abs(values[b] - values[a]) for a, b in zip(grids, grids[1:])]
    diff_ses = [combined_stderr(errors[a], errors[b])
                for a, b in zip(grids, grids[1:])]
    passed = True
    for k in range(len(diffs) - 1):
        slack = 3.0 * combined_stderr(diff_ses[k], diff_ses[k + 1])
        passed &= diffs[k + 1] <= diffs[k] + slack
    extrap = 2.0 * values[64] - values[32]
    extrap_se = math.sqrt(4.0 * errors[64]**2 + errors[32]**2)
    gap = abs(extrap - cont.mean)
    se = combined_stderr(extrap_se, cont.stderr)
    passed &= gap <= 3.0 * se
    details = {"values": values, "stderrs": errors, "diffs": diffs,
               "extrapolated": extrap, "continuum": cont.mean,
               "continuum_stderr": cont.stderr}
    return CriterionResult("C7", "discrete-to-continuum convergence", passed,
                           gap, 3.0 * se, se, time.monotonic() - t0, details)


def criterion_partition_ratio() -> CriterionResult:
    """C8: Z_{2T}/Z_T^2 >= 1, and its reciprocal is nonincreasing in T."""
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    alpha = 1.0
    ratios = []
    for i, T in enumerate((1.0, 2.0, 4.0)):
        params = IsingParams(alpha, T, kernel)
        ratios.append(estimate_partition_ratio(params, 22_000, 2_000,
                                               _seed(110 + i)))
    passed = all(r.mean >= 1.0 - 3.0 * r.stderr for r in ratios)
    # the reciprocal sequence Z_T^2 / Z_{2T} decreases toward the overlap
    recips = [(1.0 / r.mean, r.stderr / r.mean**2) for r in ratios]
    worst = None
    for (ma, sa), (mb, sb) in zip(recips, recips[1:]):
        se = combined_stderr(sa, sb)
        margin = ma - mb
        passed &= margin >= -3.0 * se
        if worst is None or margin / se < worst[0] / worst[1]:
            worst = (margin, se)
    details = {"ratios": [{"T": T, "mean": r.mean, "stderr": r.stderr}
                          for T, r in zip((1.0, 2.0, 4.0), ratios)],
               "reciprocals": [m for m, _ in recips]}
    return CriterionResult("C8", "partition-ratio bounds", passed, worst[0],
                           -3.0 * worst[1], worst[1],
                           time.monotonic() - t0, details)


def criterion_overlap_bound_consistency() -> CriterionResult:
    """C9: ratio-route overlap obeys the closed-form bound and matches the
    exact truncated-model overlap."""
    from .fock import TruncatedModel, decompose
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    passed = True
    worst = None
    details = {}
    for i, lam in enumerate((0.5, 1.0)):
        result = estimate_rho_ratio(lam, kernel, (2.0, 3.0, 4.0, 6.0),
                                    18_000, 1_500, _seed(120 + i))
        plateau = result.plateau
        bound = overlap_upper_bound(lam, kernel)
        exact = decompose(TruncatedModel.create([(1.0, 1.0)], 30,
                                                lam)).vacuum_overlap
        ok_bound = plateau.mean <= bound + 3.0 * plateau.stderr
        gap = abs(plateau.mean - exact)
        tolerance = 3.0 * plateau.stderr + 1e-3
        ok_exact = gap <= tolerance
        passed &= result.converged and ok_bound and ok_exact
        details[f"lambda={lam}"] = {
            "plateau": plateau.mean, "plateau_stderr": plateau.stderr,
            "bound": bound, "exact": exact, "converged": result.converged,
            "ok_bound": ok_bound, "ok_exact": ok_exact}
        if worst is None or gap / tolerance > worst[0]:
            worst = (gap / tolerance, gap, tolerance, plateau.stderr)
    return CriterionResult("C9", "overlap-bound consistency", passed,
                           worst[1], worst[2], worst[3],
                           time.monotonic() - t0, details)


def criterion_inequality_chain() -> CriterionResult:
    """C10: spin two-point >= continuum percolation >= site-bond model."""
    from .percolation import (SiteBondModel, discrete_two_point,
                              sample_continuum)
    t0 = time.monotonic()
    kernel = poly_kernel(1.0)
    targets = (1, 2)
    horizon = 9.0     # discrete truncation 4 * max(n) plus the unit box
    passed = True
    worst = None
    details = {}
    for i, alpha in enumerate((1.0, 4.0)):
        params = IsingParams(alpha, horizon, kernel)
        sample = run_chain(params, 28_000, 2_500, _seed(130 + i),
                           points=[float(n) for n in targets])
        rng = np.random.default_rng(_seed(140 + i))
        hits = np.zeros((5_000, len(targets)))
        for s in range(hits.shape[0]):
            config = sample_continuum(alpha, horizon, kernel, rng)
            for col, n in enumerate(targets):
                hits[s, col] = 1.0 if config.connected(0.0, float(n)) else 0.0
        model = SiteBondModel.from_alpha(alpha, kernel, "half", 8,
                                         p0_samples=30_000,
                                         seed=_seed(150 + i))
        for col, n in enumerate(targets):
            tau_series = (sample.values[:, col].astype(np.int64)
                          * sample.x0).astype(float)
            tau = estimate_from_series(tau_series, _seed(130 + i))
            cont = estimate_from_series(hits[:, col], _seed(140 + i))
            disc = discrete_two_point(model, 0, n, 30_000, _seed(160 + i))
            m1 = tau.mean - cont.mean
            s1 = combined_stderr(tau.stderr, cont.stderr)
            m2 = cont.mean - disc.mean
            s2 = combined_stderr(cont.stderr, disc.stderr)
            ok = (m1 >= -3.0 * s1) and (m2 >= -3.0 * s2)
            passed &= ok
            details[f"alpha={alpha},n={n}"] = {
                "tau": tau.mean, "continuum": cont.mean,
                "discrete": disc.mean, "ok": ok}
            for margin, se in ((m1, s1), (m2, s2)):
                if worst is None or margin / se < worst[0] / worst[1]:
                    worst = (margin, se)
    return CriterionResult("C10", "percolation inequality chain", passed,
                           worst[0], -3.0 * worst[1], worst[1],
                           time.monotonic() - t0, details)


def criterion_appendix_convergence() -> CriterionResult:
    """C11: lattice bond percolation approaches the continuum two-point."""
    from .percolation import appendix_convergence_experiment
    t0 = time.monotonic()
    kernel = mode_kernel([1.0], [1.0])
    free_rows = appendix_convergence_experiment(0.0, 2, kernel, 1,
                                                (32, 64, 128), 1, _seed(170))
    free_gaps = [r.gap for r in free_rows]
    passed = all(b < a for a, b in zip(free_gaps, free_gaps[1:]))
    rows = appendix_convergence_experiment(1.0, 2, kernel, 1, (32, 64, 128),
                                           16_000, _seed(171))
    worst = None
    for a, b in zip(rows, rows[1:]):
        se = combined_stderr(a.combined_stderr, b.combined_stderr)
        margin = a.gap - b.gap     # gaps should not grow
        passed &= margin >= -3.0 * se
        if worst is None or margin / se < worst[0] / worst[1]:
            worst = (margin, se)
    details = {"free_gaps": free_gaps,
               "mc_gaps": [{"N": r.grid_factor, "gap": r.gap,
                            "stderr": r.combined_stderr} for r in rows]}
    return CriterionResult("C11", "lattice-to-continuum percolation", passed,
                           worst[0], -3.0 * worst[1], worst[1],
                           time.monotonic() - t0, details)


def criterion_phase_transition() -> CriterionResult:
    """C12: decay at weak coupling, a plateau at strong coupling, and the
    order-1 divergence signal, all in one scan."""
    from .percolation import CLASS_DECAY, CLASS_PLATEAU, long_range_order_scan
    t0 = time.monotonic()
    kernel = poly_kernel(1.0)
    report = long_range_order_scan(kernel, (0.1, 1.0, 5.0, 20.0),
                                   (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0),
                                   8.0, 30_000, 3_000, 4_000, _seed(180))
    by_alpha = {r.alpha: r for r in report.results}
    ok_decay = by_alpha[0.1].classification == CLASS_DECAY
    plateaus = [r for r in report.results
                if r.classification == CLASS_PLATEAU]
    ok_plateau = len(plateaus) > 0
    ok_mono = True
    for a, b in zip(plateaus, plateaus[1:]):
        se = combined_stderr(a.plateau_stderr, b.plateau_stderr)
        ok_mono &= b.plateau_level >= a.plateau_level - 3.0 * se
    ok_n1 = all(r.n1_divergent for r in report.results if r.alpha > 0)
    runtime = time.monotonic() - t0
    passed = ok_decay and ok_plateau and ok_mono and ok_n1 and runtime < 1800
    level = plateaus[-1].plateau_level if plateaus else float("nan")
    details = {"classifications": {str(r.alpha): r.classification
                                   for r in report.results},
               "plateau_levels": {str(r.alpha): r.plateau_level
                                  for r in report.results},
               "n1_divergent": ok_n1,
               "crossover_window": list(report.crossover_window)}
    return CriterionResult("C12", "phase-transition signature", passed,
                           level, 0.05,
                           plateaus[-1].plateau_stderr if plateaus else 0.0,
                           runtime, details)


CRITERIA = (
    ("C1", "free-measure correlation", criterion_free_correlation),
    ("C2", "Feynman-Kac identity", criterion_feynman_kac),
    ("C3", "Ising-FK identity exact", criterion_fk_identity_exact),
    ("C4", "stochastic domination", criterion_stochastic_domination),
    ("C5", "GKS inequalities", criterion_gks),
    ("C6", "correlation monotonicity", criterion_monotonicity),
    ("C7", "discrete-to-continuum convergence",
     criterion_discrete_to_continuum),
    ("C8", "partition-ratio bounds", criterion_partition_ratio),
    ("C9", "overlap-bound consistency", criterion_overlap_bound_consistency),
    ("C10", "percolation inequality chain", criterion_inequality_chain),
    ("C11", "lattice-to-continuum percolation",
     criterion_appendix_convergence),
    ("C12", "phase-transition signature", criterion_phase_transition),
)

SUITES = {
    "fast": ("C1", "C2", "C3", "C11"),
    "full": tuple(cid for cid, _, _ in CRITERIA),
}


def run_criterion(cid: str) -> CriterionResult:
    for c, _, fn in CRITERIA:
        if c == cid:
            return fn()
    raise KeyError(f"unknown criterion {cid!r}")


def run_suite(name: str, printer=print) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from "
                       f"{', '.join(SUITES)}")
    results = []
    for cid in SUITES[name]:
        result = run_criterion(cid)
        results.append(result)
        if printer is not None:
            printer(result.line())
    return results
