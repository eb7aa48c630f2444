"""Monte Carlo result container and error estimation.

Error bars come from batch means with a fixed batch count (32 by default),
which is robust against autocorrelation without modelling it.  The
integrated autocorrelation time is reported separately, from the windowed
autocorrelation sum of the measured series.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

N_BATCHES = 32


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with provenance.

    mean/stderr are batch-means values; n_samples counts raw measurements;
    autocorrelation_time is in units of measurement intervals.
    """

    mean: float
    stderr: float
    n_samples: int
    autocorrelation_time: float
    seed: int
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    @property
    def n_effective(self) -> float:
        return self.n_samples / max(1.0, self.autocorrelation_time)

    def with_flags(self, *flags: str) -> "Estimate":
        return replace(self, flags=self.flags + flags)


def batch_means(series: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a (possibly correlated) series."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < n_batches:
        raise ValueError(f"need at least {n_batches} measurements, got {n}")
    size = n // n_batches
    used = size * n_batches
    batches = series[:used].reshape(n_batches, size).mean(axis=1)
    mean = float(series.mean())
    centered = batches - batches.mean()
    stderr = float(np.sqrt(np.sum(centered**2) / (n_batches * (n_batches - 1))))
    return mean, stderr


def integrated_autocorr_time(series: np.ndarray, c_window: float = 5.0) -> float:
    """Integrated autocorrelation time with the self-consistent window cutoff.

    Sums normalized autocorrelations rho_l until the window l exceeds
    c_window * tau; returns 1.0 for uncorrelated or constant series.
    """
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 8:
        return 1.0
    x = series - series.mean()
    var = float(np.dot(x, x) / n)
    if var <= 0:
        return 1.0
    max_lag = min(n // 4, 2048)
    # FFT autocorrelation of the zero-padded series
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conjugate(f), m)[: max_lag + 1]
    acf /= acf[0]
    tau = 1.0
    for lag in range(1, max_lag + 1):
        tau += 2.0 * acf[lag]
        if lag >= c_window * tau:
            break
    return max(1.0, float(tau))


def estimate_from_series(series: np.ndarray, seed: int,
                         n_batches: int = N_BATCHES) -> Estimate:
    """Build an Estimate from one chain's measurement series."""
    mean, stderr = batch_means(series, n_batches)
    tau = integrated_autocorr_time(series)
    return Estimate(mean=mean, stderr=stderr, n_samples=int(np.asarray(series).size),
                    autocorrelation_time=tau, seed=seed)


def pool_batch_series(series_list: list[np.ndarray], seed: int,
                      n_batches: int = N_BATCHES) -> Estimate:
    """Merge independent chains by pooling their batch means.

    Each chain contributes n_batches batch means; the pooled standard error
    is the spread over all batches.  Chains must have equal length.
    """
    if not series_list:
        raise ValueError("no series to pool")
    all_batches = []
    total = 0
    taus = []
    for series in series_list:
        series = np.asarray(series, dtype=float)
        size = series.size // n_batches
        if size < 1:
            raise ValueError("series shorter than the batch count")
        used = size * n_batches
        all_batches.append(series[:used].reshape(n_batches, size).mean(axis=1))
        total += series.size
        taus.append(integrated_autocorr_time(series))
    batches = np.concatenate(all_batches)
    mean = float(batches.mean())
    centered = batches - mean
    k = batches.size
    stderr = float(np.sqrt(np.sum(centered**2) / (k * (k - 1))))
    return Estimate(mean=mean, stderr=stderr, n_samples=total,
                    autocorrelation_time=float(np.mean(taus)), seed=seed)


def combined_stderr(*errs: float) -> float:
    """Root-sum-square of independent standard errors."""
    return float(np.sqrt(sum(e * e for e in errs)))
