"""Verdicts from trajectories and ledgers: identity audits, decay fits,
equivalence constants, Gronwall checks and characteristic-root stability."""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from mgtlab.errors import DomainError, FitError, PreconditionError
from mgtlab.models import CRITICAL_RTOL, MgtParameters
from mgtlab.schemas import (
    Convention,
    DecayFit,
    EquivalenceConstants,
    GronwallCheck,
    IdentityAuditResult,
    IdentityId,
    MemoryType,
    Regime,
    StabilityVerdict,
)
from mgtlab.services.dynamics import Trajectory, simulate
from mgtlab.services.energy import EnergyLedger, build_ledger, identity_terms
from mgtlab.services.numerics import central_difference4

logger = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-300
HURWITZ_RTOL = 1e-10
GRONWALL_STABILITY = 0.10
NEWTON_STEPS = 2


# Identity audits
def applicable_identities(params: MgtParameters) -> List[IdentityId]:
    mt = params.memory_type
    has_k = params.k is not None
    if mt == MemoryType.none:
        return [IdentityId.E0R0] if has_k else []
    if mt == MemoryType.type1:
        return ([IdentityId.E1R1] if has_k else []) + [IdentityId.E11m_id, IdentityId.E12m_id]
    if mt == MemoryType.type2:
        return [IdentityId.E2R2] if has_k else []
    return [IdentityId.E3crR3cr] if params.regime == Regime.critical else [IdentityId.E3R3]


def _normalized_residual(ledger: EnergyLedger, identity_id, convention, h: float, t_end: float):
    E, R, S = identity_terms(ledger, identity_id, convention)
    dE = central_difference4(E, h)
    R, S = R[2:-2], S[2:-2]
    scale = max(
        float(np.max(np.abs(dE))),
        float(np.max(np.abs(R))),
        float(np.max(np.abs(S))),
        float(np.max(np.abs(E))) / t_end,
        RESIDUAL_FLOOR,
    )
    return (dE + R - S) / scale


def refinement_order(steps, residuals) -> float:
    """Slope of log(residual) against log(h)."""
    x = np.log(np.asarray(steps, dtype=float))
    y = np.log(np.maximum(np.asarray(residuals, dtype=float), RESIDUAL_FLOOR))
    return float(np.polyfit(x, y, 1)[0])


def identity_audit(
    traj: Trajectory,
    identity_id: IdentityId,
    ledger: Optional[EnergyLedger] = None,
    refinement_levels: int = 3,
) -> Tuple[IdentityAuditResult, IdentityAuditResult]:
    """Residual of dE/dt + R = S under both sign conventions.

    The run is repeated at h/2, h/4, ... (`refinement_levels` step sizes in
    all) from the same initial data to estimate the order of the residual.
    Returns the (printed, sign_corrected) results.
    """
    identity_id = IdentityId(identity_id)
    if traj.grid.n_steps + 1 < 5:
        raise PreconditionError("identity audit needs at least 5 grid points")
    if refinement_levels < 3:
        raise PreconditionError("refinement order needs at least 3 step sizes")

    ledgers = [ledger if ledger is not None else build_ledger(traj)]
    grids = [traj.grid]
    for level in range(1, refinement_levels):
        grid = traj.grid.refined(2**level)
        fine = simulate(traj.params, traj.spectrum, traj.kernel, traj.initial, grid, traj.path)
        ledgers.append(build_ledger(fine))
        grids.append(grid)

    results = []
    for convention in (Convention.printed, Convention.sign_corrected):
        series = [
            _normalized_residual(lg, identity_id, convention, g.h, g.t_end) for lg, g in zip(ledgers, grids)
        ]
        maxima = [float(np.max(np.abs(s))) for s in series]
        steps = [g.h for g in grids]
        results.append(
            IdentityAuditResult(
                identity_id=identity_id,
                convention=convention,
                residual_series=series[0].tolist(),
                max_abs_residual=maxima[0],
                refinement_order=refinement_order(steps, maxima),
                level_residuals=list(zip(steps, maxima)),
            )
        )
    printed, corrected = results
    logger.info(
        "audit %s: printed %.2e (order %.2f), sign_corrected %.2e (order %.2f)",
        identity_id.value,
        printed.max_abs_residual,
        printed.refinement_order,
        corrected.max_abs_residual,
        corrected.refinement_order,
    )
    return printed, corrected


def audit_winner(results) -> IdentityAuditResult:
    return min(results, key=lambda r: r.max_abs_residual)


# Decay and equivalence
def fit_decay_rate(times, series, window_fraction: float = 0.5) -> DecayFit:
    """Least-squares line through (t, log series) on the tail window.

    The bound form is C·series(0)·e^{−ωt}.
    """
    if not 0.0 < window_fraction < 1.0:
        raise DomainError("window_fraction must lie in (0, 1)")
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    n = t.size
    if n < 2 or y.shape != t.shape:
        raise FitError("decay fit needs at least two points on the grid")
    start = min(int(math.floor((1.0 - window_fraction) * (n - 1))), n - 2)
    tw, yw = t[start:], y[start:]
    if not (np.all(np.isfinite(yw)) and np.all(yw > 0)) or not y[0] > 0:
        raise FitError("series must be positive on the fit window (no decay or underflow)")

    logs = np.log(yw)
    # a constant series gives exact zeros here, hence slope 0
    shifted = logs - logs[0]
    line = linregress(tw, shifted)
    slope = float(line.slope)
    intercept = float(logs[0] + line.intercept)
    r_squared = 1.0 if np.ptp(shifted) == 0.0 else min(float(line.rvalue) ** 2, 1.0)

    return DecayFit(
        omega=-slope if slope else 0.0,
        C=math.exp(intercept) / float(y[0]),
        r_squared=r_squared,
        window=(float(tw[0]), float(tw[-1])),
    )


def equivalence_constants(series_a, series_b) -> EquivalenceConstants:
    """Empirical (min, max) of series_a / series_b over the grid."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape:
        raise PreconditionError("series differ in length")
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("equivalence constants need positive series")
    ratio = a / b
    return EquivalenceConstants(C1=float(ratio.min()), C2=float(ratio.max()))


# Gronwall integral form
def _gronwall_sup(t: np.ndarray, F: np.ndarray) -> float:
    cumulative = cumulative_trapezoid(F, t, initial=0.0)
    tail = cumulative[-1] - cumulative
    half = t.size // 2 + 1
    F_head, tail_head = F[:half], tail[:half]
    if np.any((F_head == 0) & (tail_head > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(F_head > 0, tail_head / F_head, 0.0)
    return float(ratio.max())


def gronwall_integral_check(times, series) -> GronwallCheck:
    """sup over the first half of ∫_t^T F / F(t), and its stability.

    The estimate over [0, T] is compared with the one from the data
    truncated at T/2; a change below 10% counts as a horizon-independent
    constant. `bound_holds` checks F(t) ≤ F(0)·e^{1 − t/C}.
    """
    t = np.asarray(times, dtype=float)
    F = np.asarray(series, dtype=float)
    if np.any(F < 0):
        raise DomainError("Gronwall check needs a nonnegative series")
    if t.size < 5:
        raise PreconditionError("Gronwall check needs at least 5 grid points")

    c_full = _gronwall_sup(t, F)
    half = t.size // 2 + 1
    c_half = _gronwall_sup(t[:half], F[:half])
    stable = math.isfinite(c_full) and math.isfinite(c_half)
    if stable and c_full > 0:
        stable = abs(c_full - c_half) < GRONWALL_STABILITY * c_full

    if not math.isfinite(c_full):
        bound_holds = False
    elif c_full == 0.0:
        bound_holds = bool(np.all(F[1:] == 0))
    else:
        envelope = F[0] * np.exp(1.0 - t / c_full)
        bound_holds = bool(np.all(F <= envelope * (1.0 + 1e-12)))
    return GronwallCheck(C_est=c_full, C_est_half_horizon=c_half, satisfied=stable, bound_holds=bound_holds)


# Characteristic cubic
def _polish(coeffs, roots):
    poly = np.poly1d(coeffs)
    deriv = poly.deriv()
    out = []
    for r in roots:
        for _ in range(NEWTON_STEPS):
            d = deriv(r)
            if d == 0:
                break
            r = r - poly(r) / d
        out.append(complex(r))
    return sorted(out, key=lambda z: (z.real, z.imag))


def _pairs(roots):
    return [(z.real, z.imag) for z in roots]


def characteristic_roots(params: MgtParameters, mu: float) -> StabilityVerdict:
    """Roots of τr³ + αr² + bμr + c²μ and the Routh–Hurwitz verdict.

    The cubic with the opposite signs on the μ-terms is reported as
    `printed_roots` and plays no part in the verdict.
    """
    if not mu > 0:
        raise DomainError("mu must be positive")
    p = params
    coeffs = [p.tau, p.alpha, p.b * mu, p.c2 * mu]
    roots = _polish(coeffs, np.roots(coeffs))
    printed = [p.tau, p.alpha, -p.b * mu, -p.c2 * mu]
    printed_roots = _polish(printed, np.roots(printed))

    max_real = max(z.real for z in roots)
    magnitude = max(abs(z) for z in roots)
    lead, trail = p.alpha * p.b * mu, p.tau * p.c2 * mu
    routh = all(c > 0 for c in coeffs) and lead - trail > CRITICAL_RTOL * max(lead, trail)
    return StabilityVerdict(
        mu=mu,
        roots=_pairs(roots),
        max_real_part=max_real,
        hurwitz=max_real < -HURWITZ_RTOL * magnitude,
        routh_hurwitz=routh,
        gamma=p.gamma,
        printed_roots=_pairs(printed_roots),
    )


# Square lemma
def square_lemma_constant(C0: float) -> float:
    """C₁ with C₁(‖f‖² + ‖g‖²) ≤ ‖f+g‖² + C₀‖g‖²."""
    if not C0 > 0:
        raise DomainError("C0 must be positive")
    return min(1.0 - 1.0 / (1.0 + C0 / 2.0), C0 / 2.0)


def square_lemma_holds(f, g, C0: float) -> np.ndarray:
    """Pointwise check over pairs; vectors on the last axis."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    C1 = square_lemma_constant(C0)
    lhs = C1 * (np.sum(f**2, axis=-1) + np.sum(g**2, axis=-1))
    rhs = np.sum((f + g) ** 2, axis=-1) + C0 * np.sum(g**2, axis=-1)
    return lhs <= rhs * (1.0 + 1e-12)
