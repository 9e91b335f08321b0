import math

import numpy as np
import pytest

from mgtlab.errors import PreconditionError
from mgtlab.schemas import Convention, IdentityId, IntegrationPath
from mgtlab.services.dynamics import TimeGrid, Trajectory
from mgtlab.services.energy import (
    LEDGER_FIELDS,
    build_ledger,
    composite_energies,
    damper_R0,
    energy_equivalence_bounds,
    hat_energies,
    identity_terms,
    memory_identity_pieces,
    natural_energy_E0,
    standard_energies,
)
from mgtlab.services.kernels import MemoryKernel
from tests.helpers import run, with_memory

G_CIRC_AT_ONE = 2.0 - 5.0 / math.e


@pytest.fixture
def linear_history(damped_params, one_mode):
    """u(s) = s, u_t = 1, u_tt = 0 under g = e^{-t}, sampled on [0, 1]"""
    grid = TimeGrid(1.0, 1e-4)
    times = grid.times[:, None]
    zeros = np.zeros_like(times)
    return Trajectory(
        grid,
        with_memory(damped_params, "type1"),
        one_mode,
        MemoryKernel.prony([1.0], [1.0]),
        IntegrationPath.quadrature,
        times,
        np.ones_like(times),
        zeros,
        zeros,
    )


def test_zero_state_has_zero_energy(damped_params, two_modes, weak_kernel):
    """Test that every functional vanishes on the zero trajectory"""
    for memory_type in ("type1", "type2"):
        ledger = build_ledger(run(with_memory(damped_params, memory_type), two_modes, weak_kernel))
        for name in ledger.fields:
            assert not np.any(ledger[name]), name


def test_zero_kernel_energies_equal_F0(damped_params, two_modes):
    """Test that every F-functional reduces to F0 without memory"""
    u0 = [1.0, -0.5]
    for memory_type, field, lam in (("type1", "F1", None), ("type2", "F2", None), ("type3", "F3", 1.5)):
        params = with_memory(damped_params, memory_type, lam=lam)
        ledger = standard_energies(run(params, two_modes, MemoryKernel.zero(), u0=u0))
        assert np.allclose(ledger[field], ledger["F0"])


def test_F1_closed_form(linear_history):
    """Test F1(1) = 2 + (2 - 5/e) for the linear history"""
    ledger = standard_energies(linear_history)
    assert ledger["F0"][-1] == pytest.approx(2.0)
    assert ledger["F1"][-1] == pytest.approx(2.0 + G_CIRC_AT_ONE, abs=1e-6)


def test_E12m_closed_form(linear_history):
    """Test E12m(1) = (2 - 5/e) - (1 - 1/e)"""
    pieces = memory_identity_pieces(linear_history)
    assert pieces.E12m[-1] == pytest.approx(G_CIRC_AT_ONE - (1.0 - 1.0 / math.e), abs=1e-6)
    assert pieces.E12m[-1] == pytest.approx(-0.471518, abs=1e-6)


def test_memory_pieces_at_start(damped_params, two_modes, weak_kernel):
    """Test the type-1 pieces on the empty history at t = 0"""
    traj = run(with_memory(damped_params, "type1"), two_modes, weak_kernel, u0=[1.0, 0.5])
    pieces = memory_identity_pieces(traj)
    assert pieces.E11m[0] == pytest.approx(0.4)
    assert pieces.R11m[0] == pytest.approx(-0.8)
    assert pieces.E12m[0] == pytest.approx(0.0)
    assert pieces.R12m[0] == pytest.approx(-0.4)

    corrected = pieces.sign_corrected()
    assert corrected.R11m[0] == pytest.approx(0.8)
    assert np.array_equal(corrected.E11m, pieces.E11m)


def test_memory_pieces_vanish_without_kernel(damped_params, two_modes):
    """Test that all pieces are zero for the zero kernel"""
    traj = run(with_memory(damped_params, "type1"), two_modes, MemoryKernel.zero(), u0=[1.0, 0.5])
    pieces = memory_identity_pieces(traj)
    for series in pieces:
        assert not np.any(series)


def test_memory_pieces_need_type1(damped_params, two_modes, weak_kernel):
    """Test that pieces are refused for other memory types"""
    with pytest.raises(PreconditionError):
        memory_identity_pieces(run(with_memory(damped_params, "type2"), two_modes, weak_kernel))


def test_critical_natural_energy(critical_params, one_mode):
    """Test E0cr(0) = 1 for the state u = 1"""
    traj = run(critical_params, one_mode, u0=[1.0])
    assert natural_energy_E0(traj, 1.0)[0] == pytest.approx(1.0)
    assert not np.any(damper_R0(traj, 1.0))


def test_hat_energies_reference_state(critical_params, one_mode):
    """Test Ehat1 = 2, Ehat2 = 1 for u_t = 1 with unit constants"""
    traj = run(critical_params, one_mode, u1=[1.0])
    e1, e2, total = hat_energies(traj)
    assert (e1[0], e2[0], total[0]) == pytest.approx((2.0, 1.0, 3.0))


def test_critical_E0_matches_hat_energy(critical_params, two_modes):
    """Test that E0cr and Ehat1 coincide when gamma = 0"""
    traj = run(critical_params, two_modes, u0=[1.0, 0.3], u1=[0.0, -1.0], t_end=2.0)
    assert np.allclose(natural_energy_E0(traj, 1.0), hat_energies(traj)[0], rtol=1e-12)


def test_damper_nonnegative_in_interval(damped_params, two_modes):
    """Test R0 >= 0 for k in the admissible interval and refusal outside"""
    traj = run(damped_params, two_modes, u0=[1.0, -1.0], u1=[0.5, 0.5], t_end=2.0)
    for k in (1.0, 1.5, 2.0):
        assert np.all(damper_R0(traj, k) >= 0.0)
    with pytest.raises(PreconditionError):
        damper_R0(traj, 3.0)
    with pytest.raises(PreconditionError):
        natural_energy_E0(traj, 0.5)


def test_memoryless_functionals_refuse_memory(damped_params, two_modes, weak_kernel):
    """Test that E0, R0 and hat energies need a memoryless trajectory"""
    traj = run(with_memory(damped_params, "type1"), two_modes, weak_kernel)
    for func in (lambda t: natural_energy_E0(t, 1.5), lambda t: damper_R0(t, 1.5), hat_energies):
        with pytest.raises(PreconditionError):
            func(traj)


def test_memory_energies_dominate_F0(damped_params, two_modes, weak_kernel):
    """Test F1, F2, F3 >= F0 along memory runs"""
    u0, u1 = [1.0, -0.5], [0.2, 0.4]
    for memory_type, field, lam in (("type1", "F1", None), ("type2", "F2", None), ("type3", "F3", 1.5)):
        params = with_memory(damped_params, memory_type, lam=lam)
        ledger = standard_energies(run(params, two_modes, weak_kernel, u0=u0, u1=u1, t_end=3.0))
        assert np.all(ledger[field] >= ledger["F0"] - 1e-12)


def test_type3_damper_nonnegative(damped_params, two_modes, weak_kernel):
    """Test R3 >= 0 under the non-critical type-3 assumption"""
    params = with_memory(damped_params, "type3", lam=1.5)
    traj = run(params, two_modes, weak_kernel, u0=[1.0, -0.5], u1=[0.2, 0.4], t_end=3.0)
    energies = composite_energies(traj)
    assert np.all(energies["R3"] >= -1e-12)
    assert np.all(energies["E3"] > 0.0)


def test_type3_critical_damper_at_start(critical_params, one_mode, weak_kernel):
    """Test R3cr(0) = g(0) A(w) with an empty history"""
    params = with_memory(critical_params, "type3", lam=1.0)
    traj = run(params, one_mode, weak_kernel, u0=[1.0])
    assert composite_energies(traj)["R3cr"][0] == pytest.approx(0.2)


def test_composite_energy_preconditions(damped_params, two_modes, weak_kernel):
    """Test missing memory type and a k that breaks k = lambda"""
    with pytest.raises(PreconditionError):
        composite_energies(run(damped_params, two_modes))
    traj = run(with_memory(damped_params, "type3", lam=1.5), two_modes, weak_kernel)
    with pytest.raises(PreconditionError):
        composite_energies(traj, k=1.2)


@pytest.mark.parametrize(
    "memory_type,lam,critical,expected",
    [
        ("none", None, False, ["F0", "E0", "E01", "E02", "Ehat1", "Ehat2", "Ehat", "R0"]),
        ("none", None, True, ["F0", "E0cr", "E01", "E02", "Ehat1", "Ehat2", "Ehat", "R0"]),
        (
            "type1",
            None,
            False,
            ["F0", "F1", "E0", "E01", "E02", "E1", "R0", "R1", "E11m", "R11m", "E12m", "R12m", "g_circ_u"],
        ),
        ("type2", None, False, ["F0", "F2", "E0", "E01", "E02", "E2", "R0", "R2", "g_circ_ut"]),
        ("type3", 1.5, False, ["F0", "F3", "E01", "E02", "E3", "R3", "g_circ_w"]),
        ("type3", 1.0, True, ["F0", "F3cr", "E0cr", "E01", "E02", "E3cr", "R0", "R3cr", "g_circ_w"]),
    ],
)
def test_ledger_fields_per_run(
    damped_params, critical_params, one_mode, weak_kernel, memory_type, lam, critical, expected
):
    """Test which functionals the ledger populates, in the fixed order"""
    params = with_memory(critical_params if critical else damped_params, memory_type, lam=lam)
    kernel = MemoryKernel.zero() if memory_type == "none" else weak_kernel
    ledger = build_ledger(run(params, one_mode, kernel, u0=[1.0]))
    assert list(ledger.fields) == expected
    assert all(name in LEDGER_FIELDS for name in ledger.fields)


def test_ledger_missing_field(damped_params, one_mode):
    """Test that asking for an unpopulated field is a precondition error"""
    ledger = build_ledger(run(damped_params, one_mode, u0=[1.0]))
    assert "E3" not in ledger
    with pytest.raises(PreconditionError):
        ledger["E3"]


def test_identity_terms_fall_back_to_critical_energy(critical_params, one_mode):
    """Test that the E0 identity reads E0cr in the critical regime"""
    ledger = build_ledger(run(critical_params, one_mode, u0=[1.0]))
    E, R, S = identity_terms(ledger, IdentityId.E0R0, Convention.printed)
    assert np.array_equal(E, ledger["E0cr"])
    assert not np.any(S)


def test_equivalence_bounds_hold_along_run(damped_params, two_modes):
    """Test C_lo F0 <= E0 <= C_hi F0 and the same for Ehat"""
    rng = np.random.default_rng(11)
    traj = run(damped_params, two_modes, u0=rng.normal(size=2), u1=rng.normal(size=2), u2=rng.normal(size=2))
    ledger = build_ledger(traj)
    for energy in ("E0", "Ehat"):
        lo, hi = energy_equivalence_bounds(damped_params, two_modes, energy=energy)
        assert 0.0 < lo <= hi
        ratio = ledger[energy] / ledger["F0"]
        assert np.all(ratio >= lo * (1 - 1e-10))
        assert np.all(ratio <= hi * (1 + 1e-10))


def test_equivalence_bounds_reject_unknown_energy(damped_params, two_modes):
    """Test the energy name check"""
    with pytest.raises(PreconditionError):
        energy_equivalence_bounds(damped_params, two_modes, energy="F9")
