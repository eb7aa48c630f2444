"""Sampling laboratory for a long-range continuum Ising path measure, its
lattice and percolation couplings, and truncated two-level-boson spectra."""

__version__ = "0.1.0"

from .continuum import (IsingParams, SpinPath, alpha_from_lambda,
                        estimate_correlation, estimate_partition_function_direct,
                        estimate_partition_ratio, estimate_rho_ratio,
                        estimate_rho_series, estimate_susceptibility,
                        overlap_upper_bound, path_energy)
from .estimates import Estimate
from .kernels import (ExponentialSumKernel, Kernel, PolyKernel, PowerLawKernel,
                      classify_infrared, mode_kernel, poly_kernel,
                      power_law_kernel, zero_kernel)

__all__ = [
    "__version__", "Estimate", "IsingParams", "SpinPath", "Kernel",
    "ExponentialSumKernel", "PolyKernel", "PowerLawKernel",
    "alpha_from_lambda", "classify_infrared", "estimate_correlation",
    "estimate_partition_function_direct", "estimate_partition_ratio",
    "estimate_rho_ratio", "estimate_rho_series", "estimate_susceptibility",
    "mode_kernel", "overlap_upper_bound", "path_energy", "poly_kernel",
    "power_law_kernel", "zero_kernel",
]
