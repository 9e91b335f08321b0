import math

import numpy as np
import pytest

from mgtlab.errors import ConfigError, PreconditionError
from mgtlab.services.numerics import central_difference4, trapezoid_convolution
from mgtlab.services.spectrum import (
    OperatorSpectrum,
    a_half_norm2,
    a_inner,
    dirichlet_spectrum,
    h_inner,
    h_norm2,
)


def test_dirichlet_unit_interval():
    """Test mu_k = (k pi)² on (0, 1)"""
    spectrum = dirichlet_spectrum(1.0, 3)
    expected = [math.pi**2, 4 * math.pi**2, 9 * math.pi**2]
    assert spectrum.eigenvalues == pytest.approx(expected, rel=1e-12)
    assert spectrum.lambda0 == pytest.approx(1.0 / math.pi)


def test_dirichlet_length_pi():
    """Test mu_k = k² on (0, pi)"""
    spectrum = dirichlet_spectrum(math.pi, 2)
    assert spectrum.eigenvalues == pytest.approx([1.0, 4.0], rel=1e-12)


def test_dirichlet_rejects_bad_input():
    """Test that length and mode count are validated"""
    with pytest.raises(ConfigError):
        dirichlet_spectrum(0.0, 3)
    with pytest.raises(ConfigError):
        dirichlet_spectrum(1.0, 0)


def test_spectrum_validation():
    """Test positivity, ordering and sorting on construction"""
    with pytest.raises(ConfigError):
        OperatorSpectrum(np.array([1.0, -1.0]))
    with pytest.raises(ConfigError):
        OperatorSpectrum(np.array([4.0, 1.0]))
    with pytest.raises(ConfigError):
        OperatorSpectrum(np.array([]))
    assert OperatorSpectrum.from_eigenvalues([9.0, 1.0, 4.0]).eigenvalues.tolist() == [1.0, 4.0, 9.0]


def test_norms_on_reference_vector(two_modes):
    """Test the weighted and plain norms on a two-mode vector"""
    v = np.array([1.0, 0.5])
    assert a_half_norm2(v, two_modes) == pytest.approx(2.0)
    assert h_norm2(v) == pytest.approx(1.25)
    assert a_inner(v, np.array([2.0, 1.0]), two_modes) == pytest.approx(4.0)
    assert h_inner(v, np.array([2.0, 1.0])) == pytest.approx(2.5)


def test_norms_over_histories(two_modes):
    """Test that norms act on the last axis of a time history"""
    history = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert a_half_norm2(history, two_modes).tolist() == [1.0, 4.0, 5.0]
    assert h_norm2(history).tolist() == [1.0, 1.0, 2.0]


def test_poincare_and_inner_product_properties():
    """Test H norm <= lambda0² A-norm, symmetry and Cauchy-Schwarz on random vectors"""
    rng = np.random.default_rng(3)
    spectrum = dirichlet_spectrum(2.0, 6)
    v1 = rng.normal(size=(200, 6))
    v2 = rng.normal(size=(200, 6))
    assert np.all(h_norm2(v1) <= spectrum.lambda0**2 * a_half_norm2(v1, spectrum) * (1 + 1e-12))
    assert np.allclose(a_inner(v1, v2, spectrum), a_inner(v2, v1, spectrum))
    bound = np.sqrt(a_half_norm2(v1, spectrum) * a_half_norm2(v2, spectrum))
    assert np.all(np.abs(a_inner(v1, v2, spectrum)) <= bound * (1 + 1e-12))


def test_dimension_mismatch(two_modes):
    """Test that a vector of the wrong size is refused"""
    with pytest.raises(PreconditionError):
        a_half_norm2(np.ones(3), two_modes)
    with pytest.raises(PreconditionError):
        h_inner(np.ones(2), np.ones(3))


def test_trapezoid_convolution_matches_direct_sum():
    """Test the FFT convolution against the trapezoid sum at every point"""
    h = 0.05
    times = np.arange(41) * h
    kernel = np.exp(-times)
    series = np.cos(times)
    fast = trapezoid_convolution(kernel, series, h)
    for n in (0, 1, 7, 40):
        integrand = kernel[n::-1] * series[: n + 1]
        direct = h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])) if n else 0.0
        assert fast[n] == pytest.approx(direct, abs=1e-13)


def test_central_difference4_is_exact_for_quartics():
    """Test the fourth-order stencil on a polynomial of degree four"""
    h = 0.1
    t = np.arange(11) * h
    derivative = central_difference4(t**4 - 2 * t, h)
    assert derivative == pytest.approx(4 * t[2:-2] ** 3 - 2, abs=1e-10)
    with pytest.raises(PreconditionError):
        central_difference4(np.ones(4), h)
