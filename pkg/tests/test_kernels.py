import math

import numpy as np
import pytest

from mgtlab.errors import ConfigError, DomainError, PreconditionError
from mgtlab.services.kernels import (
    KernelKind,
    MemoryKernel,
    g_circ,
    g_circ_series,
    validate_assumption_A0,
)
from mgtlab.services.spectrum import OperatorSpectrum

EXACT_G_CIRC = 2.0 - 5.0 / math.e  # ∫₀¹ e^{-r} r² dr


def unit_kernel():
    return MemoryKernel.prony([1.0], [1.0])


def test_prony_values_at_zero():
    """Test g, g', g'' and G of e^{-2t} at t = 0"""
    values = MemoryKernel.prony([1.0], [2.0]).eval(0.0)
    assert values == (1.0, -2.0, 4.0, 0.0)


def test_prony_cumulative_strength():
    """Test G(t) and G(inf) for a two-term kernel"""
    kernel = MemoryKernel.prony([0.3, 0.2], [1.0, 3.0])
    assert kernel.G_infinity == pytest.approx(0.3 + 0.2 / 3.0)
    assert kernel.G(50.0) == pytest.approx(kernel.G_infinity, rel=1e-12)
    G = kernel.G(np.linspace(0.0, 5.0, 51))
    assert np.all(np.diff(G) > 0)
    assert kernel.c0 == 1.0
    assert kernel.n_terms == 2


def test_negative_time_is_domain_error():
    """Test that kernels refuse negative times"""
    with pytest.raises(DomainError):
        unit_kernel().eval(-1.0)
    with pytest.raises(DomainError):
        MemoryKernel.zero().G(np.array([0.0, -0.5]))


def test_prony_rejects_bad_terms():
    """Test that Prony weights and rates must be positive and paired"""
    with pytest.raises(ConfigError):
        MemoryKernel.prony([1.0, 2.0], [1.0])
    with pytest.raises(ConfigError):
        MemoryKernel.prony([-1.0], [1.0])
    with pytest.raises(ConfigError):
        MemoryKernel.prony([1.0], [0.0])


def test_prony_passes_kernel_hypotheses():
    """Test the kernel hypotheses report for a decaying Prony kernel"""
    report = validate_assumption_A0(MemoryKernel.prony([0.5], [2.0]))
    assert report.satisfied
    assert report.witnesses["c0"] == 2.0
    assert report.witnesses["G_infinity"] == 0.25


def test_sampled_hat_kernel_fails_decay_clause():
    """Test that max(0, 1-t) breaks g' <= -c0 g where it reaches zero"""
    t = np.arange(201) * 0.01
    kernel = MemoryKernel.sampled(t, np.maximum(0.0, 1.0 - t))
    report = validate_assumption_A0(kernel)
    assert not report.satisfied
    assert "g_prime_le_minus_c0_g" in report.violations
    assert "g_nonnegative" not in report.violations


def test_sampled_increasing_kernel_fails_monotonicity():
    """Test that an increasing sampled kernel is flagged"""
    t = np.arange(11) * 0.1
    report = validate_assumption_A0(MemoryKernel.sampled(t, 1.0 + t))
    assert "g_prime_nonpositive" in report.violations


def test_sampled_exponential_cumulative():
    """Test G on samples of e^{-2t}, including the exponential tail"""
    t = np.arange(301) * 0.01
    kernel = MemoryKernel.sampled(t, np.exp(-2.0 * t))
    assert kernel.kind == KernelKind.sampled
    assert kernel.G(1.0) == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, rel=1e-4)
    assert kernel.G_infinity == pytest.approx(0.5, rel=1e-4)
    assert kernel.c0 == pytest.approx(2.0, rel=1e-3)
    assert validate_assumption_A0(kernel).satisfied


def test_sampled_derivative_converges_second_order():
    """Test that halving the sample step cuts the g' error by about four"""
    errors = []
    for n, h in ((301, 0.01), (601, 0.005)):
        t = np.arange(n) * h
        kernel = MemoryKernel.sampled(t, np.exp(-2.0 * t))
        nodes = kernel.sample_times[1:-1]
        errors.append(np.max(np.abs(kernel.g_prime(nodes) + 2.0 * np.exp(-2.0 * nodes))))
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_sampled_rejects_bad_grids():
    """Test start, spacing and size checks on sampled kernels"""
    with pytest.raises(ConfigError):
        MemoryKernel.sampled([0.1, 0.2, 0.3], [1.0, 0.9, 0.8])
    with pytest.raises(ConfigError):
        MemoryKernel.sampled([0.0, 0.1, 0.3], [1.0, 0.9, 0.8])
    with pytest.raises(ConfigError):
        MemoryKernel.sampled([0.0, 0.1], [1.0, 0.9])


def test_from_csv(tmp_path):
    """Test loading (t, g) samples with a header row"""
    path = tmp_path / "kernel.csv"
    rows = "\n".join(f"{i * 0.1},{math.exp(-i * 0.1)}" for i in range(21))
    path.write_text("t,g\n" + rows + "\n", encoding="utf-8")
    kernel = MemoryKernel.from_csv(path)
    assert kernel.samples.size == 21
    assert kernel.sample_step == pytest.approx(0.1)


def test_from_csv_missing_file(tmp_path):
    """Test that a missing CSV names the config key"""
    with pytest.raises(ConfigError) as exc:
        MemoryKernel.from_csv(tmp_path / "absent.csv")
    assert exc.value.key == "kernel.csv_path"


def test_scaled_kernel():
    """Test scaling Prony weights and collapsing to zero"""
    kernel = MemoryKernel.prony([0.2], [2.0])
    assert kernel.scaled(3.0).G_infinity == pytest.approx(0.3)
    assert kernel.scaled(0.0).is_zero
    with pytest.raises(ConfigError):
        kernel.scaled(-1.0)


def test_g_circ_closed_form():
    """Test g∘v(1) for v(s) = s and g = e^{-t} against 2 - 5/e"""
    times = np.arange(10_001) * 1e-4
    value = g_circ(unit_kernel(), times, times, weighted=False)
    assert value == pytest.approx(EXACT_G_CIRC, abs=1e-6)

    spectrum = OperatorSpectrum.from_eigenvalues([1.0])
    assert g_circ(unit_kernel(), times, times[:, None], spectrum) == pytest.approx(value, rel=1e-12)


def test_g_circ_series_matches_pointwise():
    """Test that the FFT series agrees with the direct quadrature"""
    times = np.arange(1001) * 1e-3
    history = np.column_stack([np.sin(3.0 * times), times**2])
    spectrum = OperatorSpectrum.from_eigenvalues([1.0, 4.0])
    kernel = MemoryKernel.prony([0.5, 0.1], [2.0, 0.5])
    series = g_circ_series(kernel, times, history, spectrum)
    for t in (0.25, 0.5, 1.0):
        direct = g_circ(kernel, times, history, spectrum, t=t)
        assert series[round(t / 1e-3)] == pytest.approx(direct, rel=1e-8, abs=1e-12)


def test_g_circ_second_order_refinement():
    """Test the O(h²) trapezoid error of g∘"""
    errors = []
    for n in (101, 201):
        times = np.linspace(0.0, 1.0, n)
        errors.append(abs(g_circ(unit_kernel(), times, times, weighted=False) - EXACT_G_CIRC))
    assert 3.0 < errors[0] / errors[1] < 5.0


def test_g_circ_invariants():
    """Test zero kernel, constant history and constant shifts"""
    times = np.arange(501) * 0.01
    history = np.sin(times)[:, None]
    spectrum = OperatorSpectrum.from_eigenvalues([2.0])
    kernel = MemoryKernel.prony([1.0], [0.5])
    assert g_circ(MemoryKernel.zero(), times, history, spectrum) == 0.0
    assert g_circ(kernel, times, np.full((501, 1), 3.0), spectrum) == 0.0
    shifted = g_circ(kernel, times, history + 7.0, spectrum)
    assert shifted == pytest.approx(g_circ(kernel, times, history, spectrum), rel=1e-10)
    assert np.all(g_circ_series(kernel, times, history, spectrum) >= 0.0)


@pytest.mark.parametrize("shift", [1e2, 1e4, 1e6])
def test_g_circ_series_shift_invariant(shift):
    """Test that the series ignores a large constant added to the history"""
    times = np.arange(5001) * 0.01
    history = np.sin(times)[:, None]
    spectrum = OperatorSpectrum.from_eigenvalues([2.0])
    kernel = MemoryKernel.prony([1.0], [0.5])
    base = g_circ_series(kernel, times, history, spectrum)
    shifted = g_circ_series(kernel, times, history + shift, spectrum)
    np.testing.assert_allclose(shifted, base, rtol=1e-7, atol=1e-12)
    assert shifted[-1] == pytest.approx(g_circ(kernel, times, history + shift, spectrum), rel=1e-7)


def test_g_circ_series_constant_history():
    """Test that a constant history gives exactly zero for g, g' and g''"""
    times = np.arange(501) * 0.01
    history = np.full((501, 2), 3.7)
    spectrum = OperatorSpectrum.from_eigenvalues([1.0, 4.0])
    kernel = MemoryKernel.prony([0.5, 0.1], [2.0, 0.5])
    for order in (0, 1, 2):
        assert np.all(g_circ_series(kernel, times, history, spectrum, order=order) == 0.0)


def test_g_circ_history_preconditions():
    """Test that gapped histories and short histories are refused"""
    spectrum = OperatorSpectrum.from_eigenvalues([1.0])
    with pytest.raises(PreconditionError):
        g_circ(unit_kernel(), [0.0, 0.1, 0.3], np.zeros((3, 1)), spectrum)
    with pytest.raises(PreconditionError):
        g_circ(unit_kernel(), np.arange(11) * 0.1, np.zeros((11, 1)), spectrum, t=2.0)
    with pytest.raises(PreconditionError):
        g_circ(unit_kernel(), np.arange(11) * 0.1, np.zeros((11, 2)), spectrum)
