"""Exact two-level-plus-bosons Hamiltonian on a truncated occupation basis.

The Hamiltonian on C^2 tensor Fock is

    H = diag(2, 0) (x) Id  +  Id (x) sum_j omega_j N_j
        + lambda * sigma_x (x) Phi,      Phi = sum_j (v_j / 2) (a_j + a_j^+),

with real nonnegative couplings v_j.  The ladder normalization (a + a^+)/2
is the one for which the semigroup matrix element <G0, e^{-T H} G0> (G0 the
uncoupled ground state: spin down, vacuum) equals the path-measure
partition function with pair potential g(t) = sum_j v_j^2 e^{-omega_j |t|}
and coupling alpha = lambda^2 / 8; the Monte Carlo cross-check of that
identity is this module's central consistency test.

Each mode is truncated at occupation n_max, giving dimension
D = 2 * prod_j (n_max_j + 1).  Basis order is spin-major (spin up block
first), then mode occupations lexicographic.  Finite truncations always
have a unique ground state with positive uncoupled-state overlap; the
infrared phenomenon (vanishing overlap) is visible only through the path
measure and percolation routes, never at finite mode count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh

DIM_LIMIT = 20_000
DEGENERACY_TOL = 1e-10


class DegenerateGroundStateError(RuntimeError):
    """Ground level degenerate within tolerance; the overlap is ill-defined."""


@dataclass(frozen=True)
class TruncatedModel:
    """Finitely many modes with per-mode occupation cutoffs."""

    frequencies: tuple[float, ...]
    couplings: tuple[float, ...]      # v_j >= 0, real
    n_max: tuple[int, ...]
    lam: float
    dim_limit: int = DIM_LIMIT

    def __post_init__(self):
        if len(self.frequencies) != len(self.couplings) or \
                len(self.frequencies) != len(self.n_max):
            raise ValueError("frequencies, couplings and n_max must align")
        for f in self.frequencies:
            if not f > 0:
                raise ValueError("mode frequencies must be positive")
        for v in self.couplings:
            if v < 0:
                raise ValueError("mode couplings must be nonnegative")
        for n in self.n_max:
            if n < 1:
                raise ValueError("occupation cutoffs must be >= 1")
        if self.dimension > self.dim_limit:
            raise ValueError(f"dimension {self.dimension} exceeds the limit "
                             f"{self.dim_limit}")

    @classmethod
    def create(cls, modes, n_max, lam: float,
               dim_limit: int = DIM_LIMIT) -> "TruncatedModel":
        """modes: iterable of (omega_j, v_j); n_max: int or per-mode list."""
        modes = list(modes)
        freqs = tuple(float(w) for w, _ in modes)
        coups = tuple(float(v) for _, v in modes)
        if isinstance(n_max, int):
            cutoffs = tuple(n_max for _ in modes)
        else:
            cutoffs = tuple(int(n) for n in n_max)
        return cls(frequencies=freqs, couplings=coups, n_max=cutoffs,
                   lam=float(lam), dim_limit=dim_limit)

    @property
    def boson_dimension(self) -> int:
        d = 1
        for n in self.n_max:
            d *= n + 1
        return d

    @property
    def dimension(self) -> int:
        return 2 * self.boson_dimension

    def matching_mode_weights(self) -> tuple[list[float], list[float]]:
        """Kernel data (weights v_j^2, frequencies) of the induced pair
        potential."""
        return [v * v for v in self.couplings], list(self.frequencies)


def _boson_operators(model: TruncatedModel) -> tuple[np.ndarray, np.ndarray]:
    """(number-weighted energy, field) operators on the boson factor."""
    dim = model.boson_dimension
    energy = np.zeros((dim, dim))
    fieldop = np.zeros((dim, dim))
    for j, (omega, v, cap) in enumerate(zip(model.frequencies,
                                            model.couplings, model.n_max)):
        size = cap + 1
        n_op = np.diag(np.arange(size, dtype=float))
        ladder = np.zeros((size, size))
        for n in range(cap):
            ladder[n, n + 1] = math.sqrt(n + 1.0)   # annihilation block
        x_op = 0.5 * (ladder + ladder.T) * v
        left = 1
        for c in model.n_max[:j]:
            left *= c + 1
        right = 1
        for c in model.n_max[j + 1:]:
            right *= c + 1
        energy += omega * np.kron(np.eye(left),
                                  np.kron(n_op, np.eye(right)))
        fieldop += np.kron(np.eye(left), np.kron(x_op, np.eye(right)))
    return energy, fieldop


def build_hamiltonian(model: TruncatedModel) -> np.ndarray:
    """Dense symmetric Hamiltonian in the spin-major product basis."""
    dim_b = model.boson_dimension
    energy, fieldop = _boson_operators(model)
    spin_diag = np.array([[2.0, 0.0], [0.0, 0.0]])
    spin_flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    H = (np.kron(spin_diag, np.eye(dim_b))
         + np.kron(np.eye(2), energy)
         + model.lam * np.kron(spin_flip, fieldop))
    return H


@dataclass
class SpectralResult:
    """Eigendecomposition summary with a handle for semigroup evaluation."""

    ground_energy: float
    vacuum_overlap: float
    gap: float
    eigenvalues: np.ndarray
    vacuum_components: np.ndarray     # |<G0, psi_k>|^2 per eigenvector

    def semigroup_overlap(self, horizon: float) -> float:
        return float(np.dot(self.vacuum_components,
                            np.exp(-horizon * self.eigenvalues)))


def _vacuum_index(model: TruncatedModel) -> int:
    # spin-down block is the second half; vacuum is its first basis vector
    return model.boson_dimension


def decompose(model: TruncatedModel) -> SpectralResult:
    """Full symmetric eigendecomposition with the uncoupled-state overlaps."""
    H = build_hamiltonian(model)
    vals, vecs = eigh(H)
    if vals.size > 1 and vals[1] - vals[0] < DEGENERACY_TOL:
        raise DegenerateGroundStateError(
            f"ground level degenerate within {DEGENERACY_TOL}: "
            f"E0={vals[0]}, E1={vals[1]}")
    comps = vecs[_vacuum_index(model), :] ** 2
    return SpectralResult(ground_energy=float(vals[0]),
                          vacuum_overlap=float(comps[0]),
                          gap=float(vals[1] - vals[0]),
                          eigenvalues=vals, vacuum_components=comps)


def semigroup_overlap(model: TruncatedModel, horizon: float,
                      spectral: SpectralResult | None = None) -> float:
    """<G0, e^{-T H} G0>, strictly positive and log-convex in T."""
    if spectral is None:
        spectral = decompose(model)
    return spectral.semigroup_overlap(horizon)


def semigroup_two_point(model: TruncatedModel, horizon: float,
                        t: float) -> float:
    """Exact path-measure two-point function via spin-flip insertions.

    <G0, e^{-(T-t) H} Sx e^{-t H} Sx G0> / <G0, e^{-T H} G0> equals the
    correlation E[X_0 X_t] of the path measure whose pair potential is the
    model's induced kernel, at coupling alpha = lambda^2 / 8.  Serves as an
    independent oracle for the path samplers (finite-mode kernels only).
    """
    if not 0.0 <= t <= horizon:
        raise ValueError("need 0 <= t <= T")
    H = build_hamiltonian(model)
    vals, vecs = np.linalg.eigh(H)
    dim_b = model.boson_dimension
    g0 = np.zeros(2 * dim_b)
    g0[dim_b] = 1.0
    flip = np.concatenate([g0[dim_b:], g0[:dim_b]])   # Sx g0
    w = vecs @ (np.exp(-t * vals) * (vecs.T @ flip))
    w = np.concatenate([w[dim_b:], w[:dim_b]])        # Sx e^{-tH} Sx g0
    num = float((vecs.T @ g0) @ (np.exp(-(horizon - t) * vals)
                                 * (vecs.T @ w)))
    den = float(np.dot((vecs.T @ g0)**2, np.exp(-horizon * vals)))
    return num / den


def ground_state_report(model: TruncatedModel) -> SpectralResult:
    """Ground energy, squared uncoupled-state overlap, and spectral gap."""
    return decompose(model)


@dataclass(frozen=True)
class CutoffRow:
    n_max: int
    ground_energy: float
    vacuum_overlap: float


def cutoff_convergence(model: TruncatedModel, n_max_list
                       ) -> tuple[list[CutoffRow], tuple[str, ...]]:
    """Ground data per occupation cutoff, plus warnings.

    The energy is nonincreasing in the cutoff (nested variational spaces);
    non-shrinking successive differences trigger a warning that the cutoff
    range is too small for this coupling.  The final difference is the
    truncation error estimate.
    """
    n_max_list = [int(n) for n in n_max_list]
    if any(b <= a for a, b in zip(n_max_list, n_max_list[1:])):
        raise ValueError("cutoffs must be strictly increasing")
    rows = []
    for cap in n_max_list:
        sub = TruncatedModel.create(list(zip(model.frequencies,
                                             model.couplings)),
                                    cap, model.lam, model.dim_limit)
        res = decompose(sub)
        rows.append(CutoffRow(n_max=cap, ground_energy=res.ground_energy,
                              vacuum_overlap=res.vacuum_overlap))
    flags = []
    diffs = [abs(b.ground_energy - a.ground_energy)
             for a, b in zip(rows, rows[1:])]
    if any(d2 > d1 and d1 > 0 for d1, d2 in zip(diffs, diffs[1:])):
        flags.append("non-shrinking-differences")
    return rows, tuple(flags)


def parity_symmetry_defect(model: TruncatedModel) -> float:
    """Commutator norm of H with (spin sign) x (occupation parity).

    The product of sigma_z on the spin and (-1)^N on the bosons commutes
    with H exactly; a nonzero defect indicates an assembly bug.
    """
    H = build_hamiltonian(model)
    dim_b = model.boson_dimension
    parity = np.ones(dim_b)
    for j, cap in enumerate(model.n_max):
        left = 1
        for c in model.n_max[:j]:
            left *= c + 1
        right = 1
        for c in model.n_max[j + 1:]:
            right *= c + 1
        sign = np.array([(-1.0) ** n for n in range(cap + 1)])
        parity *= np.kron(np.ones(left), np.kron(sign, np.ones(right)))
    S = np.diag(np.concatenate([parity, -parity]))
    return float(np.max(np.abs(H @ S - S @ H)))
