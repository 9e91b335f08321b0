"""Memory kernels g, their derivatives, cumulative strength G and the g∘ functional."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from mgtlab.errors import ConfigError, DomainError, PreconditionError
from mgtlab.schemas import AssumptionId, AssumptionReport
from mgtlab.services.numerics import trapezoid_convolution

logger = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-14
CONVEXITY_RTOL = 1e-10
SPACING_RTOL = 1e-9


class KernelKind(str, Enum):
    zero = "zero"
    prony = "prony"
    sampled = "sampled"


class KernelValues(NamedTuple):
    g: float
    g_prime: float
    g_double_prime: float
    G: float


@dataclass(frozen=True, eq=False)
class MemoryKernel:
    kind: KernelKind
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sample_step: float = 0.0
    samples: np.ndarray = field(default_factory=lambda: np.zeros(0))

    # Constructors
    @classmethod
    def zero(cls) -> "MemoryKernel":
        return cls(KernelKind.zero)

    @classmethod
    def prony(cls, weights, rates) -> "MemoryKernel":
        """g(t) = Σᵢ gᵢ e^{−βᵢ t} with gᵢ, βᵢ > 0."""
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        r = np.atleast_1d(np.asarray(rates, dtype=float))
        if w.size == 0 or w.shape != r.shape:
            raise ConfigError("prony weights and rates must be nonempty and of equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(r))):
            raise ConfigError("prony weights and rates must be finite")
        if np.any(w <= 0) or np.any(r <= 0):
            raise ConfigError("prony weights and rates must be positive")
        return cls(KernelKind.prony, weights=w, rates=r)

    @classmethod
    def sampled(cls, times, values) -> "MemoryKernel":
        t = np.asarray(times, dtype=float)
        g = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 3:
            raise ConfigError("sampled kernel needs at least 3 (t, g) pairs")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(g))):
            raise ConfigError("sampled kernel values must be finite")
        if t[0] != 0.0:
            raise ConfigError("sampled kernel must start at t = 0")
        steps = np.diff(t)
        h = (t[-1] - t[0]) / (t.size - 1)
        if h <= 0 or np.max(np.abs(steps - h)) > SPACING_RTOL * h:
            raise ConfigError("sampled kernel spacing must be uniform")
        return cls(KernelKind.sampled, sample_step=float(h), samples=g)

    @classmethod
    def from_csv(cls, path) -> "MemoryKernel":
        """Two-column (t, g) CSV with a header row."""
        path = Path(path)
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read kernel samples from {path}: {e}", key="kernel.csv_path")
        if data.shape[1] != 2:
            raise ConfigError("kernel CSV must have exactly two columns (t, g)", key="kernel.csv_path")
        return cls.sampled(data[:, 0], data[:, 1])

    def scaled(self, factor: float) -> "MemoryKernel":
        if factor < 0:
            raise ConfigError("kernel scale must be nonnegative")
        if self.kind == KernelKind.zero or factor == 0:
            return MemoryKernel.zero()
        if self.kind == KernelKind.prony:
            return MemoryKernel.prony(self.weights * factor, self.rates)
        return MemoryKernel(KernelKind.sampled, sample_step=self.sample_step, samples=self.samples * factor)

    # Derived quantities
    @property
    def is_zero(self) -> bool:
        return self.kind == KernelKind.zero

    @property
    def n_terms(self) -> int:
        return int(self.weights.size) if self.kind == KernelKind.prony else 0

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.sample_step

    @property
    def c0(self) -> float:
        """Largest c₀ with g′ ≤ −c₀g; +inf for the zero kernel."""
        if self.kind == KernelKind.zero:
            return math.inf
        if self.kind == KernelKind.prony:
            return float(np.min(self.rates))
        g, gp = self.samples, self._sample_derivative
        positive = g > POSITIVE_FLOOR
        if not np.any(positive):
            return 0.0
        return float(np.min(-gp[positive] / g[positive]))

    @property
    def G_infinity(self) -> float:
        if self.kind == KernelKind.zero:
            return 0.0
        if self.kind == KernelKind.prony:
            return float(np.sum(self.weights / self.rates))
        # trapezoid over the samples plus the exponential tail estimate
        return float(self._sample_cumulative[-1] + self._tail_integral)

    def eval(self, t: float) -> KernelValues:
        if t < 0:
            raise DomainError(f"kernel evaluated at negative time {t}")
        return KernelValues(
            float(self.g(t)), float(self.g_prime(t)), float(self.g_double_prime(t)), float(self.G(t))
        )

    def g(self, t):
        return self.derivative(t, 0)

    def g_prime(self, t):
        return self.derivative(t, 1)

    def g_double_prime(self, t):
        return self.derivative(t, 2)

    def derivative(self, t, order: int):
        """g, g′ or g″ (order 0, 1, 2) at scalar or array t ≥ 0."""
        t = self._check_times(t)
        if self.kind == KernelKind.zero:
            return np.zeros_like(t)
        if self.kind == KernelKind.prony:
            decay = np.exp(-np.multiply.outer(t, self.rates))
            return decay @ (self.weights * (-self.rates) ** order)

        nodes = (self.samples, self._sample_derivative, self._sample_second_derivative)[order]
        out = np.interp(t, self.sample_times, nodes)
        beyond = t > self.sample_times[-1]
        if np.any(beyond):
            out = np.where(beyond, self._tail(t, order), out)
        return out

    def G(self, t):
        """Cumulative strength ∫₀ᵗ g(s) ds."""
        t = self._check_times(t)
        if self.kind == KernelKind.zero:
            return np.zeros_like(t)
        if self.kind == KernelKind.prony:
            return (-np.expm1(-np.multiply.outer(t, self.rates))) @ (self.weights / self.rates)

        T = self.sample_times[-1]
        h = self.sample_step
        idx = np.clip(np.floor(t / h).astype(int), 0, self.samples.size - 2)
        left = idx * h
        g_left = self.samples[idx]
        g_t = np.interp(np.minimum(t, T), self.sample_times, self.samples)
        inside = self._sample_cumulative[idx] + 0.5 * (np.minimum(t, T) - left) * (g_left + g_t)
        rho = self._tail_rate
        tail = 0.0
        if rho > 0:
            tail = self.samples[-1] / rho * (-np.expm1(-rho * np.maximum(t - T, 0.0)))
        return inside + tail

    # Sampled-kernel internals
    def _check_times(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("kernel evaluated at negative time")
        return t

    @cached_property
    def _sample_derivative(self) -> np.ndarray:
        return np.gradient(self.samples, self.sample_step, edge_order=2)

    @cached_property
    def _sample_second_derivative(self) -> np.ndarray:
        return np.gradient(self._sample_derivative, self.sample_step, edge_order=2)

    @cached_property
    def _sample_cumulative(self) -> np.ndarray:
        return cumulative_trapezoid(self.samples, dx=self.sample_step, initial=0.0)

    @cached_property
    def _tail_rate(self) -> float:
        g_end = self.samples[-1]
        gp_end = self._sample_derivative[-1]
        if g_end <= POSITIVE_FLOOR or gp_end >= 0:
            return 0.0
        return float(-gp_end / g_end)

    @property
    def _tail_integral(self) -> float:
        rho = self._tail_rate
        return float(self.samples[-1] / rho) if rho > 0 else 0.0

    def _tail(self, t, order: int):
        rho = self._tail_rate
        if rho == 0.0:
            return np.zeros_like(t)
        T = self.sample_times[-1]
        return self.samples[-1] * (-rho) ** order * np.exp(-rho * (t - T))


def validate_assumption_A0(kernel: MemoryKernel) -> AssumptionReport:
    """Check g ≥ 0, g′ ≤ 0, g″ ≥ 0 and g′ ≤ −c₀g with the derived c₀."""
    violations = []
    c0 = kernel.c0
    if kernel.kind == KernelKind.sampled:
        g = kernel.samples
        tol = CONVEXITY_RTOL * max(abs(g[0]), POSITIVE_FLOOR)
        if np.any(g < -tol):
            violations.append("g_nonnegative")
        if np.any(np.diff(g) > tol):
            violations.append("g_prime_nonpositive")
        if np.any(np.diff(g, 2) < -tol):
            violations.append("g_double_prime_nonnegative")
        # a kernel that reaches zero cannot satisfy g' <= -c0 g with c0 > 0 and g in C^1
        if not c0 > 0 or np.any(g <= POSITIVE_FLOOR):
            violations.append("g_prime_le_minus_c0_g")
    # prony and zero kernels satisfy every clause by construction

    report = AssumptionReport(
        assumption_id=AssumptionId.A0_kernel,
        satisfied=not violations,
        witnesses={"c0": c0, "G_infinity": kernel.G_infinity},
        violations=violations,
    )
    if violations:
        logger.info("kernel hypotheses violated: %s", ", ".join(violations))
    return report


def _uniform_step(times: np.ndarray) -> float:
    if times.ndim != 1 or times.size < 1 or times[0] != 0.0:
        raise PreconditionError("history must start at t = 0")
    if times.size == 1:
        return 0.0
    h = (times[-1] - times[0]) / (times.size - 1)
    if np.max(np.abs(np.diff(times) - h)) > SPACING_RTOL * h:
        raise PreconditionError("history has a gap: grid is not uniform")
    return float(h)


def _mode_weights(spectrum, weighted: bool, n_modes: int) -> np.ndarray:
    if not weighted:
        return np.ones(n_modes)
    if spectrum is None:
        raise PreconditionError("the A^{1/2}-weighted g∘ needs a spectrum")
    mu = spectrum.eigenvalues
    if mu.size != n_modes:
        raise PreconditionError("history and spectrum dimensions differ")
    return mu


def g_circ(
    kernel: MemoryKernel,
    times,
    history,
    spectrum=None,
    t: Optional[float] = None,
    *,
    weighted: bool = True,
    order: int = 0,
) -> float:
    """g∘v(t) = ∫₀ᵗ g(t−s)‖v(t)−v(s)‖² ds by the trapezoid rule on the history grid.

    With `weighted` the norm is the A^{1/2} norm (weights μᵢ), otherwise the H
    norm. `order` 1 or 2 replaces g by g′ or g″.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(history, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    h = _uniform_step(times)
    if values.shape[0] != times.size:
        raise PreconditionError("history and time grid lengths differ")
    if t is None:
        n = times.size - 1
    else:
        n = int(round(t / h)) if h > 0 else 0
        if n >= times.size or abs(times[n] - t) > SPACING_RTOL * max(h, 1.0):
            raise PreconditionError(f"history does not cover [0, {t}] on its grid")
    if kernel.is_zero or n == 0:
        return 0.0

    weights = _mode_weights(spectrum, weighted, values.shape[1])
    diffs = values[n] - values[: n + 1]
    integrand = kernel.derivative(times[n] - times[: n + 1], order) * (diffs**2 @ weights)
    value = float(trapezoid(integrand, dx=h))
    return max(value, 0.0) if order == 0 else value


def g_circ_series(
    kernel: MemoryKernel,
    times,
    history,
    spectrum=None,
    *,
    weighted: bool = True,
    order: int = 0,
) -> np.ndarray:
    """g∘v at every grid point, via FFT convolutions of the expanded square.

    Σᵢ wᵢ [vᵢ(t)² ∫k − 2vᵢ(t) ∫k vᵢ + ∫k vᵢ²] with k = g, g′ or g″, applied to
    the history minus its first sample.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(history, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    h = _uniform_step(times)
    if kernel.is_zero or times.size == 1:
        return np.zeros(times.size)

    weights = _mode_weights(spectrum, weighted, values.shape[1])
    values = values - values[0]
    kv = kernel.derivative(times, order)
    mass = trapezoid_convolution(kv, np.ones(times.size), h)
    first = trapezoid_convolution(kv, values, h)
    second = trapezoid_convolution(kv, values**2, h)
    per_mode = values**2 * mass[:, None] - 2.0 * values * first + second
    out = per_mode @ weights
    return np.maximum(out, 0.0) if order == 0 else out
