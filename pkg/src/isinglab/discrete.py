"""Discretized Ising chain with two-scale couplings and its graphical coupling.

The lattice has N + 1 sites at times k * delta (delta = T / N < 1) and the
spin weight exp(sum_{i<j} K_ij s_i s_j) with

    K_ij = -log(delta) / 2          for nearest neighbours,
    K_ij = 2 * alpha * delta^2 * g(|i - j| * delta)   otherwise.

As N grows this converges to the continuum path measure: the nearest
neighbour coupling reproduces the rate-1 jump process and the long-range
sum is a Riemann sum of the pair potential.

The Edwards-Sokal step opens edge {i, j} between aligned spins with
probability 1 - exp(-2 K_ij), giving the random-cluster (FK) marginal with
cluster weight 2, for which the two-point spin correlation equals the
connection probability.  Independent bond percolation with halved exponents
(and 1 - 2*delta on neighbour edges) is stochastically dominated by the FK
measure and converges to the continuum percolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .estimates import Estimate, estimate_from_series
from .kernels import Kernel
from .unionfind import UnionFind

ENUM_MAX_SITES = 20
FK_ENUM_MAX_SITES = 5


class SizeGuardError(ValueError):
    """Requested exact computation exceeds the enumeration guard."""


@dataclass(frozen=True)
class LatticeModel:
    """Grid, coupling and kernel of the discrete model."""

    horizon: float
    n_intervals: int          # N; the grid has N + 1 sites
    alpha: float
    kernel: Kernel

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_intervals < 1:
            raise ValueError("need at least one interval")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.delta < 1.0:
            raise ValueError(
                f"delta = T/N = {self.delta} must be < 1 for a ferromagnetic "
                "nearest-neighbour coupling; increase N")

    @property
    def delta(self) -> float:
        return self.horizon / self.n_intervals

    @property
    def n_sites(self) -> int:
        return self.n_intervals + 1

    @cached_property
    def couplings(self) -> np.ndarray:
        """Symmetric matrix K_ij (zero diagonal)."""
        n = self.n_sites
        d = self.delta
        dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
        K = 2.0 * self.alpha * d * d * self.kernel.eval_array(dist * d)
        K[dist == 1] = -0.5 * math.log(d)
        K[dist == 0] = 0.0
        return K

    def site_index(self, t: float) -> int:
        """Largest grid index with site time <= t."""
        idx = int(math.floor(t / self.delta + 1e-12))
        if idx < 0 or idx > self.n_intervals:
            raise ValueError(f"time {t} outside the grid [0, {self.horizon}]")
        return idx

    def site_indices(self, sites) -> list[int]:
        return [self.site_index(float(t)) for t in sites]


def validate_spins(model: LatticeModel, spins: np.ndarray) -> np.ndarray:
    spins = np.asarray(spins)
    if spins.shape != (model.n_sites,):
        raise ValueError(f"expected {model.n_sites} spins, got {spins.shape}")
    if not np.all(np.abs(spins) == 1):
        raise ValueError("spins must be +-1")
    return spins.astype(np.int8)


# -- exact enumeration ---------------------------------------------------------

def _enumerate_weights(model: LatticeModel) -> tuple[np.ndarray, np.ndarray]:
    """Log-weights and spin matrix columns for all 2^(N+1) configurations.

    Returns (log_weights, spins) where spins has shape (2^(N+1), N+1); the
    weights are the exponents sum_{i<j} K_ij s_i s_j, not yet normalized.
    """
    n = model.n_sites
    if n > ENUM_MAX_SITES:
        raise SizeGuardError(
            f"enumeration limited to {ENUM_MAX_SITES} sites, model has {n}")
    K = model.couplings
    total = 1 << n
    block = min(total, 1 << 16)
    log_w = np.empty(total)
    bits = np.arange(n)
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.uint32)
        spins = (((idx[:, None] >> bits[None, :]) & 1) * 2 - 1).astype(float)
        log_w[start:start + spins.shape[0]] = 0.5 * np.einsum(
            "bi,bi->b", spins @ K, spins)
    return log_w, bits


def exact_correlation(model: LatticeModel, sites) -> float:
    """Exact E[prod sigma_sites] by full enumeration (log-sum-exp weighted)."""
    indices = model.site_indices(sites)
    log_w, bits = _enumerate_weights(model)
    shift = log_w.max()
    w = np.exp(log_w - shift)
    total = 1 << model.n_sites
    idx = np.arange(total, dtype=np.uint32)
    prod = np.ones(total, dtype=np.int64)
    for i in indices:
        prod *= ((idx >> np.uint32(i)) & 1).astype(np.int64) * 2 - 1
    return float(np.dot(w, prod) / w.sum())


# -- Metropolis sampling --------------------------------------------------------

def mcmc_correlation(model: LatticeModel, sites, n_sweeps: int, seed: int,
                     burn_in: int | None = None) -> Estimate:
    """Single-site Metropolis estimate of E[prod sigma_sites].

    One sweep proposes each site once in random order; the local field is
    cached and updated in O(N) per accepted flip.
    """
    indices = np.asarray(model.site_indices(sites), dtype=int)
    if burn_in is None:
        burn_in = max(100, n_sweeps // 10)
    if burn_in >= n_sweeps:
        raise ValueError("burn_in must be smaller than n_sweeps")
    rng = np.random.default_rng(seed)
    n = model.n_sites
    K = model.couplings
    spins = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    field = K @ spins
    series = np.empty(n_sweeps - burn_in)
    m = 0
    for sweep in range(n_sweeps):
        order = rng.permutation(n)
        us = rng.random(n)
        for pos in range(n):
            i = order[pos]
            d_exponent = -2.0 * spins[i] * field[i]
            if d_exponent >= 0.0 or us[pos] < math.exp(d_exponent):
                spins[i] = -spins[i]
                field += 2.0 * spins[i] * K[:, i]
        if sweep >= burn_in:
            series[m] = np.prod(spins[indices])
            m += 1
    return estimate_from_series(series, seed)


# -- graphical couplings --------------------------------------------------------

def fk_open_probabilities(model: LatticeModel) -> np.ndarray:
    """Edge-opening matrix for aligned spins: 1 - exp(-2 K_ij)."""
    n = model.n_sites
    d = model.delta
    dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    p = 1.0 - np.exp(-4.0 * model.alpha * d * d
                     * model.kernel.eval_array(dist * d))
    p[dist == 1] = 1.0 - d
    p[dist == 0] = 0.0
    return p


def bond_open_probabilities(model: LatticeModel) -> np.ndarray:
    """Independent-bond matrix: halved exponents, 1 - 2*delta on neighbours."""
    n = model.n_sites
    d = model.delta
    if d >= 0.5:
        raise ValueError(
            f"delta = {d} >= 1/2 leaves no valid neighbour probability; "
            "use a finer grid")
    dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    p = 1.0 - np.exp(-2.0 * model.alpha * d * d
                     * model.kernel.eval_array(dist * d))
    p[dist == 1] = 1.0 - 2.0 * d
    p[dist == 0] = 0.0
    return p


@dataclass
class FKConfig:
    """An edge configuration over the complete graph on the grid."""

    n_sites: int
    open_edges: np.ndarray   # (m, 2) int array
    _uf: UnionFind

    @property
    def cluster_count(self) -> int:
        return self._uf.n_components

    def connected(self, i: int, j: int) -> bool:
        return self._uf.connected(i, j)


def _edges_to_config(n: int, pairs: np.ndarray) -> FKConfig:
    uf = UnionFind(n)
    for i, j in pairs:
        uf.union(int(i), int(j))
    return FKConfig(n_sites=n, open_edges=pairs, _uf=uf)


def fk_from_spins(model: LatticeModel, spins: np.ndarray, seed) -> FKConfig:
    """Edwards-Sokal step: open aligned edges with their FK probability."""
    spins = validate_spins(model, spins)
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    p = fk_open_probabilities(model)
    n = model.n_sites
    iu, ju = np.triu_indices(n, k=1)
    aligned = spins[iu] == spins[ju]
    opened = aligned & (rng.random(iu.size) < p[iu, ju])
    pairs = np.column_stack([iu[opened], ju[opened]])
    return _edges_to_config(n, pairs)


def estimate_fk_two_point(model: LatticeModel, endpoints, n_sweeps: int,
                          seed: int, burn_in: int | None = None) -> Estimate:
    """Connection probability of the FK marginal, via the spin chain plus
    the Edwards-Sokal step at every measurement sweep."""
    a, b = model.site_indices(endpoints)
    if burn_in is None:
        burn_in = max(100, n_sweeps // 10)
    if burn_in >= n_sweeps:
        raise ValueError("burn_in must be smaller than n_sweeps")
    rng = np.random.default_rng(seed)
    n = model.n_sites
    K = model.couplings
    p = fk_open_probabilities(model)
    iu, ju = np.triu_indices(n, k=1)
    p_flat = p[iu, ju]
    spins = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    field = K @ spins
    series = np.empty(n_sweeps - burn_in)
    m = 0
    for sweep in range(n_sweeps):
        order = rng.permutation(n)
        us = rng.random(n)
        for pos in range(n):
            i = order[pos]
            d_exponent = -2.0 * spins[i] * field[i]
            if d_exponent >= 0.0 or us[pos] < math.exp(d_exponent):
                spins[i] = -spins[i]
                field += 2.0 * spins[i] * K[:, i]
        if sweep < burn_in:
            continue
        opened = (spins[iu] == spins[ju]) & (rng.random(iu.size) < p_flat)
        uf = UnionFind(n)
        for i, j in zip(iu[opened], ju[opened]):
            uf.union(int(i), int(j))
        series[m] = 1.0 if uf.connected(a, b) else 0.0
        m += 1
    return estimate_from_series(series, seed)


def exact_fk_two_point(model: LatticeModel, endpoints) -> float:
    """Exact connection probability of the cluster-weighted edge measure.

    Enumerates all edge subsets with weight 2^(clusters) * prod p * prod
    (1 - p); feasible only for tiny grids.
    """
    n = model.n_sites
    if n > FK_ENUM_MAX_SITES:
        raise SizeGuardError(
            f"edge enumeration limited to {FK_ENUM_MAX_SITES} sites")
    a, b = model.site_indices(endpoints)
    p = fk_open_probabilities(model)
    iu, ju = np.triu_indices(n, k=1)
    pe = p[iu, ju]
    m = iu.size
    num = 0.0
    den = 0.0
    for mask in range(1 << m):
        weight = 1.0
        uf = UnionFind(n)
        for e in range(m):
            if (mask >> e) & 1:
                weight *= pe[e]
                uf.union(int(iu[e]), int(ju[e]))
            else:
                weight *= 1.0 - pe[e]
        weight *= 2.0 ** uf.n_components
        den += weight
        if uf.connected(a, b):
            num += weight
    return num / den


def bond_percolation_two_point(model: LatticeModel, endpoints, n_samples: int,
                               seed: int) -> Estimate:
    """Independent bond percolation connection probability (Monte Carlo)."""
    a, b = model.site_indices(endpoints)
    rng = np.random.default_rng(seed)
    n = model.n_sites
    p = bond_open_probabilities(model)
    iu, ju = np.triu_indices(n, k=1)
    keep = p[iu, ju] > 0.0
    iu, ju, pe = iu[keep], ju[keep], p[iu, ju][keep]
    series = np.empty(n_samples)
    for s in range(n_samples):
        opened = rng.random(pe.size) < pe
        uf = UnionFind(n)
        for i, j in zip(iu[opened], ju[opened]):
            uf.union(int(i), int(j))
        series[s] = 1.0 if uf.connected(a, b) else 0.0
    return estimate_from_series(series, seed)
