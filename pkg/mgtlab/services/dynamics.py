"""Modal integration of τu_ttt + αu_tt + c²Au + bAu_t − g∗Aw = 0.

Each mode carries (u, u_t, u_tt); u_ttt is eliminated through the equation.
Two independent paths realize the memory term: auxiliary Prony variables
integrated with classical RK4, and a trapezoid-rule quadrature inside a
Heun predictor-corrector.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from mgtlab.config import get_settings
from mgtlab.errors import ConfigError, NumericalFailure, PreconditionError
from mgtlab.models import MgtParameters
from mgtlab.schemas import IntegrationPath, MemoryType, Regime
from mgtlab.services.kernels import KernelKind, MemoryKernel
from mgtlab.services.numerics import central_difference4
from mgtlab.services.spectrum import OperatorSpectrum

logger = logging.getLogger(__name__)

GRID_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    h: float

    def __post_init__(self):
        if not (self.h > 0 and self.t_end > 0) or not (math.isfinite(self.h) and math.isfinite(self.t_end)):
            raise ConfigError("t_end and h must be positive and finite", key="time.h")
        n = round(self.t_end / self.h)
        if n < 1 or abs(n * self.h - self.t_end) > GRID_RTOL * self.t_end:
            raise ConfigError(f"t_end={self.t_end} is not a whole number of steps h={self.h}", key="time.h")

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.h)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_end, self.h / factor)


class InitialData(NamedTuple):
    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense per-step history of one simulated run.

    `u`, `ut`, `utt` and `conv` have shape (n_steps + 1, n_modes); `aux`
    holds the Prony variables (n_steps + 1, n_modes, n_terms) on the
    prony_aux path and is None otherwise.
    """

    grid: TimeGrid
    params: MgtParameters
    spectrum: OperatorSpectrum
    kernel: MemoryKernel
    path: IntegrationPath
    u: np.ndarray
    ut: np.ndarray
    utt: np.ndarray
    conv: np.ndarray
    aux: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def initial(self) -> InitialData:
        return InitialData(self.u[0].copy(), self.ut[0].copy(), self.utt[0].copy())

    @property
    def is_memoryless(self) -> bool:
        return self.kernel.is_zero

    @property
    def uttt(self) -> np.ndarray:
        p, mu = self.params, self.spectrum.eigenvalues
        return _third_derivative(p, mu, self.u, self.ut, self.utt, self.conv)

    @property
    def w(self) -> np.ndarray:
        return _memory_argument(self.params, self.u, self.ut)

    @property
    def w_t(self) -> np.ndarray:
        return _memory_argument(self.params, self.ut, self.utt)


def _memory_argument(params: MgtParameters, x, x_t):
    """w for the memory type, from a quantity and its time derivative."""
    if params.memory_type == MemoryType.type1:
        return x
    if params.memory_type == MemoryType.type2:
        return x_t
    if params.memory_type == MemoryType.type3:
        return params.lambda_ * x + x_t
    return np.zeros_like(x)


def _third_derivative(params, mu, u, ut, utt, conv):
    return (-params.alpha * utt - params.c2 * mu * u - params.b * mu * ut + mu * conv) / params.tau


def _check_compatible(params: MgtParameters, kernel: MemoryKernel, path: IntegrationPath):
    if params.memory_type == MemoryType.none and not kernel.is_zero:
        raise ConfigError("memory_type none needs the zero kernel", key="kernel.kind")
    if path == IntegrationPath.prony_aux and kernel.kind == KernelKind.sampled:
        raise ConfigError("prony_aux path needs a prony or zero kernel", key="time.path")


def _check_initial(initial, spectrum: OperatorSpectrum) -> InitialData:
    arrays = []
    for name, v in zip(("u0", "u1", "u2"), initial):
        v = np.asarray(v, dtype=float)
        if v.shape != (spectrum.size,):
            raise PreconditionError(f"{name} has shape {v.shape}, expected ({spectrum.size},)")
        if not np.all(np.isfinite(v)):
            raise PreconditionError(f"{name} must be finite")
        arrays.append(v)
    return InitialData(*arrays)


def simulate(
    params: MgtParameters,
    spectrum: OperatorSpectrum,
    kernel: MemoryKernel,
    initial,
    grid: TimeGrid,
    path: IntegrationPath = IntegrationPath.prony_aux,
    threads: Optional[int] = None,
) -> Trajectory:
    """Integrate every mode over the grid; modes are merged in ascending order."""
    path = IntegrationPath(path)
    _check_compatible(params, kernel, path)
    initial = _check_initial(initial, spectrum)
    if threads is None:
        threads = get_settings().threads
    n_chunks = max(1, min(threads, spectrum.size))

    logger.info(
        "simulating %s memory, %d modes, %d steps on %s path",
        params.memory_type.value,
        spectrum.size,
        grid.n_steps,
        path.value,
    )
    integrate = _integrate_prony if path == IntegrationPath.prony_aux else _integrate_quadrature
    if n_chunks == 1:
        u, ut, utt, conv, aux = integrate(params, spectrum.eigenvalues, kernel, initial, grid)
    else:
        chunks = np.array_split(np.arange(spectrum.size), n_chunks)

        def run_chunk(idx):
            part = InitialData(*(v[idx] for v in initial))
            return integrate(params, spectrum.eigenvalues[idx], kernel, part, grid)

        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            results = list(pool.map(run_chunk, chunks))
        u, ut, utt, conv = (np.concatenate([r[i] for r in results], axis=1) for i in range(4))
        aux = None if results[0][4] is None else np.concatenate([r[4] for r in results], axis=1)

    logger.debug("simulation finished, final |u|max=%.3e", float(np.max(np.abs(u[-1]))))
    return Trajectory(grid, params, spectrum, kernel, path, u, ut, utt, conv, aux)


def _allocate(grid: TimeGrid, n_modes: int):
    shape = (grid.n_steps + 1, n_modes)
    return np.empty(shape), np.empty(shape), np.empty(shape), np.zeros(shape)


def _integrate_prony(params, mu, kernel, initial, grid):
    """Classical RK4 on (u, u_t, u_tt, z) with z_j' = −β_j z_j + g_j w."""
    weights, rates = kernel.weights, kernel.rates
    n_terms = kernel.n_terms
    h = grid.h
    U, V, A, C = _allocate(grid, mu.size)
    Z = np.zeros((grid.n_steps + 1, mu.size, n_terms))
    U[0], V[0], A[0] = initial

    def rhs(u, v, a, z):
        conv = z.sum(axis=-1)
        da = _third_derivative(params, mu, u, v, a, conv)
        w = _memory_argument(params, u, v)
        dz = -rates * z + np.multiply.outer(w, weights)
        return v, a, da, dz

    y = (U[0], V[0], A[0], Z[0])
    for n in range(grid.n_steps):
        k1 = rhs(*y)
        k2 = rhs(*(yi + 0.5 * h * ki for yi, ki in zip(y, k1)))
        k3 = rhs(*(yi + 0.5 * h * ki for yi, ki in zip(y, k2)))
        k4 = rhs(*(yi + h * ki for yi, ki in zip(y, k3)))
        y = tuple(yi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d) for yi, a, b, c, d in zip(y, k1, k2, k3, k4))
        if not all(np.all(np.isfinite(yi)) for yi in y):
            raise NumericalFailure(n + 1)
        U[n + 1], V[n + 1], A[n + 1], Z[n + 1] = y
        C[n + 1] = y[3].sum(axis=-1)
    return U, V, A, C, Z


def _integrate_quadrature(params, mu, kernel, initial, grid):
    """Heun predictor-corrector with the convolution taken by the trapezoid rule."""
    h = grid.h
    U, V, A, C = _allocate(grid, mu.size)
    U[0], V[0], A[0] = initial
    W = np.zeros_like(U)
    W[0] = _memory_argument(params, U[0], V[0])
    memory = not kernel.is_zero
    gv = kernel.g(grid.times) if memory else None

    def convolution(n_next, w_end):
        # h[½g_{n+1}w_0 + Σ_{m=1}^{n} g_{n+1−m}w_m + ½g_0 w_{n+1}]
        interior = gv[1:n_next][::-1] @ W[1:n_next]
        return h * (0.5 * gv[n_next] * W[0] + interior + 0.5 * gv[0] * w_end)

    def rhs(u, v, a, conv):
        return v, a, _third_derivative(params, mu, u, v, a, conv)

    for n in range(grid.n_steps):
        y = (U[n], V[n], A[n])
        f0 = rhs(*y, C[n])
        pred = tuple(yi + h * fi for yi, fi in zip(y, f0))
        conv_pred = convolution(n + 1, _memory_argument(params, pred[0], pred[1])) if memory else C[n]
        f1 = rhs(*pred, conv_pred)
        new = tuple(yi + 0.5 * h * (a + b) for yi, a, b in zip(y, f0, f1))
        if not all(np.all(np.isfinite(yi)) for yi in new):
            raise NumericalFailure(n + 1)
        U[n + 1], V[n + 1], A[n + 1] = new
        W[n + 1] = _memory_argument(params, new[0], new[1])
        if memory:
            C[n + 1] = convolution(n + 1, W[n + 1])
    return U, V, A, C, None


class ResidualSeries(NamedTuple):
    times: np.ndarray
    values: np.ndarray  # max over modes of |residual| at each time
    max_abs: float
    scale: float  # largest magnitude among the terms of the residual

    @property
    def relative(self) -> float:
        return self.max_abs / max(self.scale, 1e-300)


def _residual(times, terms) -> ResidualSeries:
    total = np.sum(terms, axis=0)
    values = np.max(np.abs(total), axis=-1)
    scale = max(float(np.max(np.abs(t))) for t in terms)
    return ResidualSeries(times, values, float(np.max(values)), scale)


def z_substitution_residual(traj: Trajectory) -> ResidualSeries:
    """τz_tt + bAz + γz_t − (γc²/b)u_t with z = u_t + (c²/b)u, per mode.

    z_tt is formed from u_ttt given by the equation, so the residual is
    zero up to roundoff.
    """
    if not traj.is_memoryless:
        raise PreconditionError("the z-substitution applies to memoryless trajectories")
    p, mu = traj.params, traj.spectrum.eigenvalues
    ratio = p.c2 / p.b
    z = traj.ut + ratio * traj.u
    z_t = traj.utt + ratio * traj.ut
    z_tt = traj.uttt + ratio * traj.utt
    terms = (p.tau * z_tt, p.b * mu * z, p.gamma * z_t, -p.gamma * ratio * traj.ut)
    return _residual(traj.times, terms)


def critical_w_equation_residual(traj: Trajectory) -> ResidualSeries:
    """τw_tt + bAw − g∗Aw for w = λu + u_t on a critical type-3 run.

    w_tt is the fourth-order central difference of the stored w_t, so the
    residual measures the discretization error of the path; it is reported
    on interior grid points.
    """
    p = traj.params
    if p.memory_type != MemoryType.type3 or p.regime != Regime.critical:
        raise PreconditionError("the w-equation holds for critical type-3 memory only")
    mu = traj.spectrum.eigenvalues
    w_tt = central_difference4(traj.w_t, traj.grid.h)
    inner = slice(2, -2)
    terms = (p.tau * w_tt, p.b * mu * traj.w[inner], -mu * traj.conv[inner])
    return _residual(traj.times[inner], terms)

