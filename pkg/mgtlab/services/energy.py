"""Energy functionals, dampers and memory-identity pieces along a trajectory.

Every functional is evaluated at every grid point. History functionals
(g∘, g∗) use the trapezoid rule on the trajectory grid.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from mgtlab.errors import PreconditionError
from mgtlab.models import CRITICAL_RTOL, MgtParameters, admissible_k_interval
from mgtlab.schemas import Convention, IdentityId, MemoryType, Regime
from mgtlab.services.dynamics import Trajectory
from mgtlab.services.kernels import g_circ_series
from mgtlab.services.numerics import trapezoid_convolution
from mgtlab.services.spectrum import OperatorSpectrum, a_half_norm2, a_inner, h_inner, h_norm2

logger = logging.getLogger(__name__)

LEDGER_FIELDS = (
    "F0", "F1", "F2", "F3", "F3cr",
    "E0", "E0cr", "E01", "E02", "E1", "E2", "E3", "E3cr",
    "Ehat1", "Ehat2", "Ehat",
    "R0", "R1", "R2", "R3", "R3cr",
    "E11m", "R11m", "E12m", "R12m",
    "g_circ_u", "g_circ_ut", "g_circ_w",
)  # fmt: skip


@dataclass(frozen=True, eq=False)
class EnergyLedger:
    """Populated functionals of one run, keyed by name.

    `components` carries the source terms and alternative readings the
    identity audit needs; they are not part of the exported series.
    """

    times: np.ndarray
    series: Dict[str, np.ndarray]
    components: Dict[str, np.ndarray] = field(default_factory=dict)
    k: Optional[float] = None

    @property
    def fields(self) -> Tuple[str, ...]:
        return tuple(name for name in LEDGER_FIELDS if name in self.series)

    def __contains__(self, name: str) -> bool:
        return name in self.series

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.series[name]
        except KeyError:
            raise PreconditionError(f"ledger has no {name} for this run") from None


class MemoryPieces(NamedTuple):
    """Type-1 identity pieces as printed, with the source terms of their identities."""

    E11m: np.ndarray
    R11m: np.ndarray
    E12m: np.ndarray
    R12m: np.ndarray
    S11m: np.ndarray  # −2(g∗Au, u_tt)
    S12m: np.ndarray  # −2(g∗Au, u_t)

    def sign_corrected(self) -> "MemoryPieces":
        return self._replace(R11m=-self.R11m, R12m=-self.R12m)


class _Terms:
    """Norms and history integrals of one trajectory, computed on first use."""

    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.p = traj.params
        self.spectrum = traj.spectrum
        self.h = traj.grid.h
        self.u, self.v, self.a = traj.u, traj.ut, traj.utt
        self._circ: Dict[Tuple[str, int], np.ndarray] = {}

    def A(self, x):
        return a_half_norm2(x, self.spectrum)

    def H(self, x):
        return h_norm2(x)

    @cached_property
    def g(self):
        return self.traj.kernel.g(self.traj.times)

    @cached_property
    def g_prime(self):
        return self.traj.kernel.g_prime(self.traj.times)

    @cached_property
    def G(self):
        return self.traj.kernel.G(self.traj.times)

    @cached_property
    def G_trapezoid(self):
        return trapezoid_convolution(self.g, np.ones(self.traj.times.size), self.h)

    @cached_property
    def w(self):
        return self.traj.w

    @cached_property
    def w_t(self):
        return self.traj.w_t

    def history(self, name):
        return {"u": self.u, "ut": self.v, "w": self.w}[name]

    def circ(self, name: str, order: int = 0) -> np.ndarray:
        """g∘, g′∘ or g″∘ of a stored history in the A^{1/2} norm."""
        key = (name, order)
        if key not in self._circ:
            self._circ[key] = g_circ_series(
                self.traj.kernel, self.traj.times, self.history(name), self.spectrum, order=order
            )
        return self._circ[key]

    def convolution(self, name: str) -> np.ndarray:
        key = (name, -1)
        if key not in self._circ:
            self._circ[key] = trapezoid_convolution(self.g, self.history(name), self.h)
        return self._circ[key]


def _require_memoryless(traj: Trajectory):
    if not traj.is_memoryless:
        raise PreconditionError("this functional is defined for memoryless trajectories")


def _check_k(params: MgtParameters, k: float) -> float:
    """k must lie in the closed admissible range; the critical regime fixes k = c²/b."""
    r = params.c2 / params.b
    if params.regime == Regime.critical:
        if abs(k - r) > CRITICAL_RTOL * max(k, r):
            raise PreconditionError(f"critical regime needs k = c2/b = {r}, got {k}")
        return k
    interval = admissible_k_interval(params)
    if interval is None:
        raise PreconditionError("no admissible k: gamma < 0")
    slack = CRITICAL_RTOL * interval.hi
    if not interval.lo - slack <= k <= interval.hi + slack:
        raise PreconditionError(f"k={k} outside [{interval.lo}, {interval.hi}]")
    return k


# Memoryless and common functionals
def _F0(t: _Terms):
    return t.H(t.a) + t.A(t.v) + t.A(t.u)


def _E0(t: _Terms, k: float):
    p = t.p
    if p.regime == Regime.critical:
        return p.b * t.A(t.v + k * t.u) + p.tau * t.H(t.a + k * t.v)
    r = p.c2 / p.b
    return (
        p.b * t.A(t.v + r * t.u)
        + p.tau * t.H(t.a + k * t.v)
        + k * p.tau * (p.alpha / p.tau - k) * t.H(t.v)
        + p.c2 * (k - r) * t.A(t.u)
    )


def _R0(t: _Terms, k: float):
    p = t.p
    if p.regime == Regime.critical:
        return np.zeros(t.u.shape[0])
    return 2.0 * p.tau * (p.alpha / p.tau - k) * t.H(t.a) + 2.0 * p.b * (k - p.c2 / p.b) * t.A(t.v)


def _E01(t: _Terms):
    p = t.p
    return p.tau * t.H(t.a) + p.b * t.A(t.v) + 2.0 * p.c2 * a_inner(t.u, t.v, t.spectrum)


def _E02(t: _Terms):
    p = t.p
    return p.c2 * t.A(t.u) + p.alpha * t.H(t.v) + 2.0 * p.tau * h_inner(t.a, t.v)


def _hat(t: _Terms):
    p = t.p
    r = p.c2 / p.b
    e1 = p.b * t.A(t.v + r * t.u) + p.tau * t.H(t.a + r * t.v) + r * p.gamma * t.H(t.v)
    e2 = p.alpha * t.H(t.v) + p.c2 * t.A(t.u)
    return e1, e2, e1 + e2


def standard_energies(traj: Trajectory) -> EnergyLedger:
    """F₀ and the F-functional of the run's memory type."""
    t = _Terms(traj)
    return EnergyLedger(traj.times, _standard(t))


def _standard(t: _Terms) -> Dict[str, np.ndarray]:
    F0 = _F0(t)
    out = {"F0": F0}
    mt = t.p.memory_type
    if mt == MemoryType.type1:
        out["F1"] = F0 - t.circ("u", 1)
    elif mt == MemoryType.type2:
        out["F2"] = F0 + t.circ("ut")
    elif mt == MemoryType.type3:
        if t.p.regime == Regime.critical:
            out["F3cr"] = t.A(t.w) + t.H(t.w_t) + t.circ("w")
        else:
            out["F3"] = F0 + t.circ("w")
    return out


def natural_energy_E0(traj: Trajectory, k: float) -> np.ndarray:
    """E₀ for multiplier weight k; in the critical regime the collapsed form E₀^cr."""
    _require_memoryless(traj)
    return _E0(_Terms(traj), _check_k(traj.params, k))


def damper_R0(traj: Trajectory, k: float) -> np.ndarray:
    _require_memoryless(traj)
    return _R0(_Terms(traj), _check_k(traj.params, k))


def hat_energies(traj: Trajectory) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Ê₁, Ê₂, Ê); Ê₁ is conserved when γ = 0."""
    _require_memoryless(traj)
    return _hat(_Terms(traj))


def _pieces(t: _Terms) -> MemoryPieces:
    g, gp, G = t.g, t.g_prime, t.G
    Au = t.A(t.u)
    C = t.convolution("u")
    return MemoryPieces(
        E11m=-t.circ("u", 1) + g * Au - 2.0 * a_inner(t.v, C, t.spectrum),
        R11m=-t.circ("u", 2) + gp * Au,
        E12m=t.circ("u") - G * Au,
        R12m=t.circ("u", 1) - g * Au,
        S11m=-2.0 * a_inner(C, t.a, t.spectrum),
        S12m=-2.0 * a_inner(C, t.v, t.spectrum),
    )


def memory_identity_pieces(traj: Trajectory) -> MemoryPieces:
    """E₁₁m, R₁₁m, E₁₂m, R₁₂m as printed; `.sign_corrected()` flips both dampers."""
    if traj.params.memory_type != MemoryType.type1:
        raise PreconditionError("memory identity pieces are defined for type-1 memory")
    return _pieces(_Terms(traj))


def _resolve_k(params: MgtParameters, k: Optional[float]) -> float:
    if params.memory_type == MemoryType.type3:
        if k is not None and abs(k - params.lambda_) > CRITICAL_RTOL * params.lambda_:
            raise PreconditionError("type-3 energies fix k = lambda")
        return params.lambda_
    k = params.k if k is None else k
    if k is None:
        raise PreconditionError("no admissible k: gamma < 0")
    return _check_k(params, k)


def _composite(t: _Terms, k: float) -> Dict[str, np.ndarray]:
    p = t.p
    mt = p.memory_type
    if mt == MemoryType.type1:
        pieces = _pieces(t).sign_corrected()
        return {
            "E1": _E0(t, k) + pieces.E11m + k * pieces.E12m,
            "R1": _R0(t, k) + pieces.R11m + k * pieces.R12m,
        }
    if mt == MemoryType.type2:
        Av = t.A(t.v)
        return {
            "E2": _E0(t, k) + t.circ("ut") - t.G * Av,
            "R2": _R0(t, k) - t.circ("ut", 1) + t.g * Av - 2.0 * k * t.G * Av + 2.0 * k * _history_gap(t),
        }
    if mt == MemoryType.type3:
        Aw = t.A(t.w)
        memory = t.g * Aw - t.circ("w", 1)
        if p.regime == Regime.critical:
            E = (p.c2 / k - t.G) * Aw + p.tau * t.H(t.w_t) + t.circ("w")
            return {"E3cr": E, "R3cr": memory}
        E = (
            (p.c2 / k - t.G) * Aw
            + (p.b - p.c2 / k) * t.A(t.v)
            + p.tau * t.H(t.a + k * t.v)
            + k * p.tau * (p.alpha / p.tau - k) * t.H(t.v)
            + t.circ("w")
        )
        R = 2.0 * (p.alpha - k * p.tau) * t.H(t.a) + 2.0 * (p.b * k - p.c2) * t.A(t.v) + memory
        return {"E3": E, "R3": R}
    raise PreconditionError("composite energies need a memory type")


def _history_gap(t: _Terms) -> np.ndarray:
    """∫₀ᵗ g(t−s)(A(u_t(t) − u_t(s)), u_t(t)) ds by the trapezoid rule."""
    return t.G_trapezoid * t.A(t.v) - a_inner(t.v, t.convolution("ut"), t.spectrum)


def composite_energies(traj: Trajectory, k: Optional[float] = None) -> Dict[str, np.ndarray]:
    """Natural energy and damper of the run's memory type (E₁/R₁, E₂/R₂, E₃/R₃ or E₃^cr/R₃^cr)."""
    return _composite(_Terms(traj), _resolve_k(traj.params, k))


def build_ledger(traj: Trajectory) -> EnergyLedger:
    """Every functional applicable to the run's (memory type, regime)."""
    t = _Terms(traj)
    p = t.p
    mt = p.memory_type
    series = _standard(t)
    series["E01"] = _E01(t)
    series["E02"] = _E02(t)
    components: Dict[str, np.ndarray] = {}

    k = p.lambda_ if mt == MemoryType.type3 else p.k
    critical = p.regime == Regime.critical
    natural = "E0cr" if critical else "E0"
    if k is not None and (mt in (MemoryType.none, MemoryType.type1, MemoryType.type2) or critical):
        series[natural] = _E0(t, k)
        series["R0"] = _R0(t, k)
        components["R0_alt"] = series["R0"] + 4.0 * p.c2 * t.A(t.v)

    if mt == MemoryType.none:
        series["Ehat1"], series["Ehat2"], series["Ehat"] = _hat(t)
    elif mt == MemoryType.type1:
        series["g_circ_u"] = t.circ("u")
        pieces = _pieces(t)
        series.update(E11m=pieces.E11m, R11m=pieces.R11m, E12m=pieces.E12m, R12m=pieces.R12m)
        components.update(
            S11m=pieces.S11m,
            S12m=pieces.S12m,
            R11m_corrected=-pieces.R11m,
            R12m_corrected=-pieces.R12m,
        )
        if k is not None:
            series.update(_composite(t, k))
            components["R1_printed"] = series["R0"] + pieces.R11m + k * pieces.R12m
    elif mt == MemoryType.type2:
        series["g_circ_ut"] = t.circ("ut")
        if k is not None:
            series.update(_composite(t, k))
            components["R2_alt"] = series["R2"] - 4.0 * k * _history_gap(t)
    else:
        series["g_circ_w"] = t.circ("w")
        series.update(_composite(t, k))
        memory = t.g * t.A(t.w) - t.circ("w", 1)
        if critical:
            components["R3cr_alt"] = -series["R3cr"]
        else:
            components["R3_alt"] = series["R3"] - 2.0 * memory

    ledger = EnergyLedger(traj.times, series, components, k)
    logger.debug("ledger fields: %s", ", ".join(ledger.fields))
    return ledger


# Identity bookkeeping: (natural energy, damper per convention, source term)
_IDENTITIES = {
    IdentityId.E0R0: ("E0", ("R0", "R0_alt"), None),
    IdentityId.E1R1: ("E1", ("R1_printed", "R1"), None),
    IdentityId.E2R2: ("E2", ("R2", "R2_alt"), None),
    IdentityId.E3R3: ("E3", ("R3", "R3_alt"), None),
    IdentityId.E3crR3cr: ("E3cr", ("R3cr", "R3cr_alt"), None),
    IdentityId.E11m_id: ("E11m", ("R11m", "R11m_corrected"), "S11m"),
    IdentityId.E12m_id: ("E12m", ("R12m", "R12m_corrected"), "S12m"),
}


def identity_terms(ledger: EnergyLedger, identity_id: IdentityId, convention: Convention):
    """(E, R, S) with dE/dt + R = S expected under the right convention."""
    energy, dampers, source = _IDENTITIES[IdentityId(identity_id)]
    if energy == "E0" and "E0" not in ledger.series:
        energy = "E0cr"
    damper = dampers[0] if Convention(convention) == Convention.printed else dampers[1]

    def lookup(name):
        if name in ledger.series:
            return ledger.series[name]
        if name in ledger.components:
            return ledger.components[name]
        raise PreconditionError(f"ledger lacks {name} needed by {IdentityId(identity_id).value}")

    E, R = lookup(energy), lookup(damper)
    S = lookup(source) if source else np.zeros_like(E)
    return E, R, S


def energy_equivalence_bounds(
    params: MgtParameters,
    spectrum: OperatorSpectrum,
    k: Optional[float] = None,
    energy: str = "E0",
) -> Tuple[float, float]:
    """(C_lo, C_hi) with C_lo·F₀ ≤ energy ≤ C_hi·F₀ for every state of the truncated system.

    Per mode both functionals are quadratic forms in (u, u_t, u_tt); the
    constants are the extreme generalized eigenvalues over all modes.
    `energy` is "E0" (natural energy for weight k) or "Ehat".
    """
    p = params
    r = p.c2 / p.b
    if energy == "E0":
        k = _check_k(p, p.k if k is None else k)
    elif energy != "Ehat":
        raise PreconditionError(f"unknown energy {energy}")

    lo, hi = np.inf, 0.0
    for mu in spectrum.eigenvalues:
        if energy == "E0":
            uu = p.b * mu * r * r + p.c2 * (k - r) * mu
            vv = p.b * mu + k * p.alpha
            va = p.tau * k
        else:
            uu = p.b * mu * r * r + p.c2 * mu
            vv = p.b * mu + p.tau * r * r + r * p.gamma + p.alpha
            va = p.tau * r
        uv = p.b * mu * r
        M = np.array([[uu, uv, 0.0], [uv, vv, va], [0.0, va, p.tau]])
        D = np.diag([mu, mu, 1.0])
        vals = eigh(M, D, eigvals_only=True)
        lo, hi = min(lo, float(vals[0])), max(hi, float(vals[-1]))
    return max(lo, 0.0), hi
