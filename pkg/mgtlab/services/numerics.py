"""Quadrature and differencing helpers shared by the numerical services."""

import numpy as np
from scipy.signal import fftconvolve

from mgtlab.errors import PreconditionError


def trapezoid_convolution(kernel_values: np.ndarray, series: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid rule for ∫₀^{t_n} k(t_n − s) f(s) ds at every grid point t_n.

    `kernel_values[j]` is k(j·h); `series` has time on axis 0. Row 0 is zero
    (empty history).
    """
    kv = np.asarray(kernel_values, dtype=float)
    f = np.asarray(series, dtype=float)
    n = f.shape[0]
    if kv.shape[0] < n:
        raise PreconditionError("kernel values do not cover the history")
    kv = kv[:n]
    kv_b = kv.reshape((n,) + (1,) * (f.ndim - 1))
    full = fftconvolve(kv_b, f, axes=0)[:n]
    endpoints = 0.5 * (kv_b * f[0] + kv[0] * f)
    out = h * (full - endpoints)
    out[0] = 0.0
    return out


def central_difference4(series: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central first derivative on interior points 2..N−2 (axis 0)."""
    y = np.asarray(series, dtype=float)
    if y.shape[0] < 5:
        raise PreconditionError("fourth-order differences need at least 5 grid points")
    return (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * h)
