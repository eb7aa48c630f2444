"""Interaction kernels g and their integral transforms.

A kernel is an even, continuous, nonnegative, nonincreasing-in-|t| function
g built from spectral data.  Three families are supported:

* ``modes``     g(t) = sum_j w_j exp(-f_j |t|), w_j >= 0, f_j > 0
* ``powerlaw``  g(t) = S_{d-1} int_0^K r^(d-1-2*delta) exp(-|t| r) dr,
                the radial reduction of |k|^(-2*delta) with dispersion |k|
                and a sharp radial cutoff at K (S_{d-1} = sphere surface)
* ``poly``      g(t) = C / (1 + t^2)

Besides pointwise evaluation the module provides the first antiderivative
F(x) = int_0^x g, the even second antiderivative G (G'' = g, G(0) = 0),
box integrals of g(t - s) expressed through G, the exponentially weighted
tail integral int_0^inf t g(t) e^(-2 t) dt, and a heuristic classification
of int_0^T t g(t) dt as convergent or divergent.

Kernel objects are immutable after construction and safe to share between
workers; the power-law quadrature cache is deterministic, so concurrent
evaluation is bit-identical for identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from threading import Lock

import numpy as np
from scipy import integrate, special


class KernelValidationError(ValueError):
    """Spectral data violates a construction-time constraint."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


_SPHERE_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def _h_one(y: float) -> float:
    """(1 - exp(-y)) / y, stable near 0."""
    if y < 1e-5:
        return 1.0 - y / 2.0 + y * y / 6.0
    return -math.expm1(-y) / y


def _h_two(y: float) -> float:
    """(y - 1 + exp(-y)) / y^2, stable near 0."""
    if y < 1e-2:
        return 0.5 - y / 6.0 + y * y / 24.0 - y**3 / 120.0 + y**4 / 720.0
    return (y - 1.0 + math.exp(-y)) / (y * y)


def _h_three(y: float) -> float:
    """(1 - (1 + y) exp(-y)) / y^2, stable near 0."""
    if y < 1e-2:
        return 0.5 - y / 3.0 + y * y / 8.0 - y**3 / 30.0 + y**4 / 144.0
    return (1.0 - (1.0 + y) * math.exp(-y)) / (y * y)


class Kernel:
    """Common interface; construct one of the concrete subclasses."""

    #: relative tolerance for adaptive quadrature backing non-closed forms
    quad_rtol: float = 1e-9
    #: maximum number of subdivisions for adaptive quadrature
    quad_limit: int = 200

    # -- pointwise -----------------------------------------------------

    def eval(self, t: float) -> float:
        """g(|t|)."""
        raise NotImplementedError

    def eval_array(self, t: np.ndarray) -> np.ndarray:
        return np.vectorize(self.eval, otypes=[float])(t)

    @property
    def g0(self) -> float:
        return self.eval(0.0)

    # -- antiderivatives -----------------------------------------------

    def first_antideriv(self, x: float) -> float:
        """F(x) = int_0^x g, for x >= 0."""
        raise NotImplementedError

    def second_antideriv(self, x: float) -> float:
        """G(|x|) with G'' = g, G(0) = G'(0) = 0, extended evenly."""
        raise NotImplementedError

    def second_antideriv_array(self, x: np.ndarray) -> np.ndarray:
        return np.vectorize(self.second_antideriv, otypes=[float])(x)

    def scalar_G(self, max_abs: float):
        """Scalar callable for G(|x|) on [0, max_abs], cheap per call.

        Closed-form kernels return their exact G; quadrature-backed kernels
        return a dense-table interpolant (deterministic for a given range).
        """
        return self.second_antideriv

    # -- derived integrals ----------------------------------------------

    def double_integral(self, a: float, b: float, c: float, d: float) -> float:
        """int_a^b int_c^d g(t - s) dt ds  (a <= b, c <= d), always >= 0."""
        if a > b or c > d:
            raise ValueError("intervals must be ordered: a <= b and c <= d")
        G = self.second_antideriv
        val = G(d - a) - G(d - b) - G(c - a) + G(c - b)
        # exact value is nonnegative; cancellation can leave a tiny negative
        return val if val > 0.0 else 0.0

    def overlap_bound_integral(self) -> float:
        """int_0^inf t g(t) exp(-2 t) dt."""
        raise NotImplementedError

    def tail_weight_integral(self, horizon: float) -> float:
        """int_0^T t g(t) dt."""
        raise NotImplementedError

    # -- metadata --------------------------------------------------------

    def id_string(self) -> str:
        raise NotImplementedError

    def decay_scale(self) -> float:
        """Characteristic decay time (1.0 for heavy-tailed kernels)."""
        return 1.0

    def __repr__(self):
        return f"<{type(self).__name__} {self.id_string()}>"


class ExponentialSumKernel(Kernel):
    """g(t) = sum_j w_j exp(-f_j |t|); includes the zero kernel (no modes).

    All transforms are closed forms, so evaluation is exact up to rounding.
    """

    def __init__(self, weights, freqs):
        weights = [float(w) for w in weights]
        freqs = [float(f) for f in freqs]
        if len(weights) != len(freqs):
            raise KernelValidationError("weights and freqs must have equal length")
        for w in weights:
            if not (w >= 0.0) or not math.isfinite(w):
                raise KernelValidationError(f"mode weight must be nonnegative, got {w}")
        for f in freqs:
            if not (f > 0.0) or not math.isfinite(f):
                raise KernelValidationError(f"mode frequency must be positive, got {f}")
        self.weights = tuple(weights)
        self.freqs = tuple(freqs)

    def eval(self, t: float) -> float:
        at = abs(t)
        return sum(w * math.exp(-f * at) for w, f in zip(self.weights, self.freqs))

    def eval_array(self, t: np.ndarray) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for w, f in zip(self.weights, self.freqs):
            out += w * np.exp(-f * t)
        return out

    def first_antideriv(self, x: float) -> float:
        if x < 0:
            raise ValueError("first antiderivative defined for x >= 0")
        return sum(w * x * _h_one(f * x) for w, f in zip(self.weights, self.freqs))

    def second_antideriv(self, x: float) -> float:
        ax = abs(x)
        return sum(w * ax * ax * _h_two(f * ax)
                   for w, f in zip(self.weights, self.freqs))

    def second_antideriv_array(self, x: np.ndarray) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(ax)
        for w, f in zip(self.weights, self.freqs):
            y = f * ax
            small = y < 1e-2
            ys = np.where(small, y, 1.0)
            series = 0.5 - ys / 6.0 + ys**2 / 24.0 - ys**3 / 120.0 + ys**4 / 720.0
            yl = np.where(small, 1.0, y)
            direct = (yl - 1.0 + np.exp(-yl)) / (yl * yl)
            out += w * ax * ax * np.where(small, series, direct)
        return out

    def scalar_G(self, max_abs: float):
        pairs = tuple(zip(self.weights, self.freqs))
        if len(pairs) == 1:
            w, f = pairs[0]
            inv2 = w / (f * f)

            def G1(x: float) -> float:
                y = f * abs(x)
                if y < 1e-2:
                    return w * x * x * (0.5 - y / 6.0 + y * y / 24.0
                                        - y**3 / 120.0 + y**4 / 720.0)
                return inv2 * (y - 1.0 + math.exp(-y))

            return G1
        return self.second_antideriv

    def overlap_bound_integral(self) -> float:
        # int_0^inf t exp(-(f + 2) t) dt = 1 / (f + 2)^2
        return sum(w / (f + 2.0) ** 2 for w, f in zip(self.weights, self.freqs))

    def tail_weight_integral(self, horizon: float) -> float:
        return sum(w * horizon * horizon * _h_three(f * horizon)
                   for w, f in zip(self.weights, self.freqs))

    def id_string(self) -> str:
        inner = ",".join(f"{w:g}@{f:g}" for w, f in zip(self.weights, self.freqs))
        return f"modes[{inner}]"

    def decay_scale(self) -> float:
        if not self.freqs:
            return 1.0
        return 1.0 / min(self.freqs)


class PolyKernel(Kernel):
    """g(t) = C / (1 + t^2) with closed-form F and G."""

    def __init__(self, amplitude: float):
        amplitude = float(amplitude)
        if not (amplitude > 0.0) or not math.isfinite(amplitude):
            raise KernelValidationError(f"amplitude must be positive, got {amplitude}")
        self.amplitude = amplitude

    def eval(self, t: float) -> float:
        return self.amplitude / (1.0 + t * t)

    def eval_array(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.amplitude / (1.0 + t * t)

    def first_antideriv(self, x: float) -> float:
        if x < 0:
            raise ValueError("first antiderivative defined for x >= 0")
        return self.amplitude * math.atan(x)

    def second_antideriv(self, x: float) -> float:
        ax = abs(x)
        if ax < 1e-2:
            x2 = ax * ax
            return self.amplitude * x2 * (0.5 - x2 / 12.0 + x2 * x2 / 30.0
                                          - x2**3 / 56.0)
        return self.amplitude * (ax * math.atan(ax) - 0.5 * math.log1p(ax * ax))

    def second_antideriv_array(self, x: np.ndarray) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        small = ax < 1e-2
        x2 = ax * ax
        series = x2 * (0.5 - x2 / 12.0 + x2 * x2 / 30.0 - x2**3 / 56.0)
        safe = np.where(small, 1.0, ax)
        direct = safe * np.arctan(safe) - 0.5 * np.log1p(safe * safe)
        return self.amplitude * np.where(small, series, direct)

    def overlap_bound_integral(self) -> float:
        # truncate where the exponential tail is below 3e-21
        val, err = integrate.quad(
            lambda t: t * math.exp(-2.0 * t) / (1.0 + t * t), 0.0, 25.0,
            epsabs=1e-13, epsrel=self.quad_rtol, limit=self.quad_limit)
        _check_quad(val, err, self.quad_rtol)
        return self.amplitude * val

    def tail_weight_integral(self, horizon: float) -> float:
        # int_0^T C t / (1 + t^2) dt = (C / 2) log(1 + T^2)
        return 0.5 * self.amplitude * math.log1p(horizon * horizon)

    def id_string(self) -> str:
        return f"poly[C={self.amplitude:g}]"


class PowerLawKernel(Kernel):
    """Radial power-law spectral density with a sharp cutoff.

    g(t) = S_{d-1} int_0^K r^p exp(-|t| r) dr with p = d - 1 - 2*delta.
    Requires delta < d/2 (p > -1) so the spectral density is integrable and
    g(0) is finite.  The marginal value delta = d/2 - 1 makes
    int_0^inf t g(t) dt log-divergent and is flagged by the classifier.
    """

    def __init__(self, dim: int, exponent: float, cutoff: float):
        if dim not in _SPHERE_SURFACE:
            raise KernelValidationError(f"dimension must be 1, 2 or 3, got {dim}")
        exponent = float(exponent)
        cutoff = float(cutoff)
        if not (cutoff > 0.0) or not math.isfinite(cutoff):
            raise KernelValidationError(f"cutoff must be positive, got {cutoff}")
        if not (exponent < dim / 2.0):
            raise KernelValidationError(
                f"exponent delta={exponent} must satisfy delta < d/2={dim / 2.0} "
                "(square-integrable spectral density)")
        self.dim = int(dim)
        self.exponent = exponent
        self.cutoff = cutoff
        self.surface = _SPHERE_SURFACE[self.dim]
        self.power = dim - 1 - 2.0 * exponent  # exponent p of the radial weight
        self._table_lock = Lock()
        self._table: tuple[np.ndarray, np.ndarray] | None = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_table_lock"] = None
        state["_table"] = None          # caches rebuild per process
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._table_lock = Lock()

    @property
    def is_marginal(self) -> bool:
        """delta == d/2 - 1, the log-divergent boundary (p == 1)."""
        return abs(self.exponent - (self.dim / 2.0 - 1.0)) < 1e-12

    def _radial(self, phi, what: str) -> float:
        """int_0^K r^p phi(r) dr via algebraic-weight adaptive quadrature."""
        val, err = integrate.quad(
            phi, 0.0, self.cutoff, weight="alg", wvar=(self.power, 0.0),
            epsabs=1e-13, epsrel=self.quad_rtol, limit=self.quad_limit)
        _check_quad(val, err, self.quad_rtol, what)
        return val

    def eval(self, t: float) -> float:
        at = abs(t)
        a = self.power + 1.0
        if at == 0.0:
            return self.surface * self.cutoff**a / a
        x = at * self.cutoff
        return float(self.surface * special.gamma(a) * special.gammainc(a, x)
                     / at**a)

    def eval_array(self, t: np.ndarray) -> np.ndarray:
        at = np.abs(np.asarray(t, dtype=float))
        a = self.power + 1.0
        out = np.full_like(at, self.surface * self.cutoff**a / a)
        nz = at > 0.0
        atn = at[nz]
        out[nz] = (self.surface * special.gamma(a)
                   * special.gammainc(a, atn * self.cutoff) / atn**a)
        return out

    def first_antideriv(self, x: float) -> float:
        if x < 0:
            raise ValueError("first antiderivative defined for x >= 0")
        if x == 0.0:
            return 0.0
        return self.surface * x * self._radial(
            lambda r: _h_one(x * r), "first antiderivative")

    def second_antideriv(self, x: float) -> float:
        ax = abs(x)
        if ax == 0.0:
            return 0.0
        return self.surface * ax * ax * self._radial(
            lambda r: _h_two(ax * r), "second antiderivative")

    def _build_table(self, max_abs: float) -> tuple[np.ndarray, np.ndarray]:
        span = max(max_abs, 1.0) * 1.05
        grid = np.linspace(0.0, span, 4097)
        vals = np.array([self.second_antideriv(x) for x in grid])
        return grid, vals

    def scalar_G(self, max_abs: float):
        with self._table_lock:
            if self._table is None or self._table[0][-1] < max_abs:
                self._table = self._build_table(max_abs)
            grid, vals = self._table
        step = grid[1] - grid[0]
        vlist = vals.tolist()
        top = grid[-1]

        def G_interp(x: float) -> float:
            ax = abs(x)
            if ax >= top:
                raise ValueError(f"G table range exceeded: |x|={ax} > {top}")
            pos = ax / step
            i = int(pos)
            frac = pos - i
            return vlist[i] * (1.0 - frac) + vlist[i + 1] * frac

        return G_interp

    def second_antideriv_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([self.second_antideriv(v) for v in x.ravel()]
                        ).reshape(x.shape)

    def overlap_bound_integral(self) -> float:
        # swap the t and r integrals: int_0^K r^p / (2 + r)^2 dr
        return self.surface * self._radial(
            lambda r: 1.0 / (2.0 + r) ** 2, "overlap bound integral")

    def tail_weight_integral(self, horizon: float) -> float:
        if horizon <= 0.0:
            return 0.0
        return self.surface * horizon * horizon * self._radial(
            lambda r: _h_three(horizon * r), "tail weight integral")

    def id_string(self) -> str:
        return f"powerlaw[d={self.dim},delta={self.exponent:g},K={self.cutoff:g}]"

    def decay_scale(self) -> float:
        # heavy algebraic tail; no single exponential scale
        return 1.0


def _check_quad(val: float, err: float, rtol: float, what: str = "integral"):
    if err > max(rtol * abs(val), 1e-11):
        raise QuadratureError(
            f"quadrature for {what} did not converge: value={val}, abserr={err}")


# -- infrared classification ------------------------------------------------

LABEL_REGULAR = "REGULAR"
LABEL_DIVERGENT = "DIVERGENT"
LABEL_DIVERGENT_LOG = "DIVERGENT-LOG"


@dataclass(frozen=True)
class InfraredReport:
    """Growth of int_0^T t g(t) dt over a ladder of horizons.

    The label is a finite-horizon heuristic: REGULAR means the values have
    stabilized (relative change below tolerance), DIVERGENT means they keep
    growing.  The structurally marginal power-law case (delta = d/2 - 1,
    exactly log-divergent) is reported as DIVERGENT-LOG instead of being
    guessed from the numbers.
    """

    horizons: tuple[float, ...]
    values: tuple[float, ...]
    rel_change: float
    growth_exponent: float
    label: str
    note: str = ("finite-horizon heuristic; the asymptotic statement is about "
                 "the infinite-horizon limit")


def classify_infrared(kernel: Kernel, horizons, rel_tol: float = 1e-3
                      ) -> InfraredReport:
    """Classify int_0^T t g(t) dt as convergent or divergent over horizons."""
    horizons = [float(h) for h in horizons]
    if len(horizons) < 3:
        raise ValueError("need at least 3 horizons")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing")
    values = [kernel.tail_weight_integral(h) for h in horizons]
    last, prev = values[-1], values[-2]
    rel = abs(last - prev) / max(abs(last), 1e-300)
    if last > 0 and prev > 0:
        growth = math.log(last / prev) / math.log(horizons[-1] / horizons[-2])
    else:
        growth = 0.0
    if rel < rel_tol:
        label = LABEL_REGULAR
    elif isinstance(kernel, PowerLawKernel) and kernel.is_marginal:
        label = LABEL_DIVERGENT_LOG
    else:
        label = LABEL_DIVERGENT
    return InfraredReport(horizons=tuple(horizons), values=tuple(values),
                          rel_change=rel, growth_exponent=growth, label=label)


# -- constructors ------------------------------------------------------------

def mode_kernel(weights, freqs) -> ExponentialSumKernel:
    return ExponentialSumKernel(weights, freqs)


def poly_kernel(amplitude: float) -> PolyKernel:
    return PolyKernel(amplitude)


def power_law_kernel(dim: int, exponent: float, cutoff: float) -> PowerLawKernel:
    return PowerLawKernel(dim, exponent, cutoff)


def zero_kernel() -> ExponentialSumKernel:
    return ExponentialSumKernel([], [])
