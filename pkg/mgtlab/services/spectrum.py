"""Eigen-data of the operator A and the norms built on it.

All claims are verified on the truncated modal system; with linear,
decoupled modes the truncation is exact for data on the retained modes.
"""

import math
from dataclasses import dataclass

import numpy as np

from mgtlab.errors import ConfigError, PreconditionError

# Coefficients of a vector of H in the eigenbasis of A; histories carry time on axis 0.
ModalVector = np.ndarray


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    eigenvalues: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        if mu.ndim != 1 or mu.size == 0:
            raise ConfigError("spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ConfigError("eigenvalues must be finite and positive")
        if np.any(np.diff(mu) < 0):
            raise ConfigError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", mu)

    @classmethod
    def from_eigenvalues(cls, values) -> "OperatorSpectrum":
        return cls(np.sort(np.asarray(values, dtype=float)))

    @property
    def size(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def lambda0(self) -> float:
        """Poincaré constant: ‖u‖ ≤ λ₀‖A^{1/2}u‖."""
        return 1.0 / math.sqrt(self.eigenvalues[0])


def dirichlet_spectrum(length: float, n_modes: int) -> OperatorSpectrum:
    """−d²/dx² on (0, L) with Dirichlet ends: μ_k = (kπ/L)², k = 1..n."""
    if not length > 0 or n_modes < 1:
        raise ConfigError("dirichlet spectrum needs length > 0 and at least one mode")
    k = np.arange(1, n_modes + 1)
    return OperatorSpectrum((k * math.pi / length) ** 2)


def _check(v, spectrum=None):
    v = np.asarray(v, dtype=float)
    if spectrum is not None and v.shape[-1] != spectrum.size:
        raise PreconditionError(f"vector has {v.shape[-1]} modes, spectrum has {spectrum.size}")
    return v


def h_norm2(v: ModalVector):
    return np.sum(_check(v) ** 2, axis=-1)


def a_half_norm2(v: ModalVector, spectrum: OperatorSpectrum):
    v = _check(v, spectrum)
    return (v**2) @ spectrum.eigenvalues


def a_inner(v1: ModalVector, v2: ModalVector, spectrum: OperatorSpectrum):
    """(Av1, v2) = Σ μᵢ v1ᵢ v2ᵢ."""
    v1, v2 = _check(v1, spectrum), _check(v2, spectrum)
    if v1.shape != v2.shape:
        raise PreconditionError("vectors differ in shape")
    return (v1 * v2) @ spectrum.eigenvalues


def h_inner(v1: ModalVector, v2: ModalVector):
    v1, v2 = _check(v1), _check(v2)
    if v1.shape != v2.shape:
        raise PreconditionError("vectors differ in shape")
    return np.sum(v1 * v2, axis=-1)
