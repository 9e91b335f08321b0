"""Physical parameters, regime classification and assumption checks."""

import logging
import math
from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, computed_field, model_validator

from mgtlab.errors import PreconditionError
from mgtlab.schemas import AssumptionId, AssumptionReport, MemoryType, Regime
from mgtlab.services.kernels import MemoryKernel, validate_assumption_A0

logger = logging.getLogger(__name__)

CRITICAL_RTOL = 1e-12
K_GRID_POINTS = 64
THETA_GRID_POINTS = 64
THETA_SPAN = 1e3


class KInterval(NamedTuple):
    """Open interval (c²/b, α/τ) of admissible multiplier weights."""

    lo: float
    hi: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, k: float) -> bool:
        return self.lo < k < self.hi


class MgtParameters(BaseModel):
    """Constants of τu_ttt + αu_tt + c²Au + bAu_t − g∗Aw = 0.

    `lambda` is the type-3 mixing weight (zero for the other memory types).
    `k_override` replaces the default multiplier weight, the midpoint of the
    admissible interval.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    tau: PositiveFloat
    alpha: PositiveFloat
    b: PositiveFloat
    c2: PositiveFloat
    memory_type: MemoryType = MemoryType.none
    lambda_: float = Field(0.0, alias="lambda", ge=0.0)
    k_override: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def check_mixing_weight(self):
        if self.memory_type == MemoryType.type3:
            if self.lambda_ <= 0.0:
                raise ValueError("type3 memory needs lambda > 0")
            if self.k_override is not None and not _close(self.k_override, self.lambda_):
                raise ValueError("type3 memory fixes k = lambda")
        elif self.lambda_ != 0.0:
            raise ValueError("lambda is only meaningful for type3 memory")
        if self.k_override is not None and self.regime == Regime.critical:
            if not _close(self.k_override, self.c2 / self.b):
                raise ValueError("critical regime fixes k = c2/b = alpha/tau")
        return self

    @computed_field
    @property
    def gamma(self) -> float:
        return self.alpha - self.c2 * self.tau / self.b

    @property
    def regime(self) -> Regime:
        scale = max(self.alpha, self.c2 * self.tau / self.b)
        if abs(self.gamma) <= CRITICAL_RTOL * scale:
            return Regime.critical
        return Regime.non_critical if self.gamma > 0 else Regime.unstable

    @property
    def k(self) -> Optional[float]:
        """Multiplier weight used by the natural energies, None when none exists."""
        if self.memory_type == MemoryType.type3:
            return self.lambda_
        if self.regime == Regime.critical:
            return self.c2 / self.b
        if self.k_override is not None:
            return self.k_override
        interval = admissible_k_interval(self)
        return interval.midpoint if interval else None

    def with_updates(self, **changes) -> "MgtParameters":
        data = self.model_dump(by_alias=True, exclude={"gamma"})
        data.update(changes)
        return MgtParameters.model_validate(data)


def _close(a: float, b: float, rtol: float = CRITICAL_RTOL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def gamma(params: MgtParameters) -> float:
    """γ = α − c²τ/b (the form every theorem uses)."""
    return params.gamma


def admissible_k_interval(params: MgtParameters) -> Optional[KInterval]:
    if params.gamma > 0:
        return KInterval(params.c2 / params.b, params.alpha / params.tau)
    return None


def assumption_for(params: MgtParameters) -> Optional[AssumptionId]:
    """The regime/strength assumption that governs a run with these parameters."""
    if params.memory_type == MemoryType.type1:
        return AssumptionId.A1_type1
    if params.memory_type == MemoryType.type2:
        return AssumptionId.A2_type2
    if params.memory_type == MemoryType.type3:
        if params.regime == Regime.critical:
            return AssumptionId.A32_type3cr
        return AssumptionId.A31_type3
    return None


def check_assumption(
    params: MgtParameters, kernel: MemoryKernel, assumption_id: AssumptionId
) -> AssumptionReport:
    if not isinstance(kernel, MemoryKernel):
        raise PreconditionError("check_assumption needs a validated MemoryKernel")
    assumption_id = AssumptionId(assumption_id)

    if assumption_id == AssumptionId.A0_kernel:
        return validate_assumption_A0(kernel)
    if assumption_id == AssumptionId.A1_type1:
        return _check_type1(params, kernel)
    if assumption_id == AssumptionId.A2_type2:
        return _check_type2(params, kernel)
    return _check_type3(params, kernel, critical=assumption_id == AssumptionId.A32_type3cr)


def _report(assumption_id, witnesses, violations) -> AssumptionReport:
    report = AssumptionReport(
        assumption_id=assumption_id,
        satisfied=not violations,
        witnesses=witnesses,
        violations=violations,
    )
    if violations:
        logger.info("%s violated: %s", assumption_id.value, ", ".join(violations))
    return report


def _check_type1(params, kernel) -> AssumptionReport:
    violations = []
    g_inf = kernel.G_infinity
    if params.regime != Regime.non_critical:
        violations.append("gamma_positive")
    if not g_inf < params.c2:
        violations.append("G_infinity_lt_c2")
    witnesses = {"gamma": params.gamma, "G_infinity": g_inf, "c2": params.c2}
    return _report(AssumptionId.A1_type1, witnesses, violations)


def _check_type2(params, kernel) -> AssumptionReport:
    violations = []
    witnesses = {"gamma": params.gamma, "G_infinity": kernel.G_infinity, "c0": kernel.c0}
    if params.regime != Regime.non_critical:
        violations.append("gamma_positive")
        return _report(AssumptionId.A2_type2, witnesses, violations)

    witness = search_k_theta(params, kernel)
    if witness is None:
        violations.append("k_theta_feasible")
    else:
        k, theta, c1 = witness
        witnesses.update({"k": k, "theta": theta, "c1": c1})
    return _report(AssumptionId.A2_type2, witnesses, violations)


def search_k_theta(params: MgtParameters, kernel: MemoryKernel):
    """Grid search for (k, θ) with k/θ < c₀ and G(∞) ≤ min{2(bk−c²)/(2+θ), b−c²/k}.

    k runs over 64 interior points of (c²/b, α/τ); θ over 64 log-spaced interior
    points of (k/c₀, 10³·k/c₀). Returns (k, θ, c₁) for the first feasible pair,
    with c₁ the bound G(∞) must not exceed, or None.
    """
    interval = admissible_k_interval(params)
    c0 = kernel.c0
    if interval is None or not c0 > 0:
        return None
    g_inf = kernel.G_infinity
    fractions = np.arange(1, K_GRID_POINTS + 1) / (K_GRID_POINTS + 1)
    for k in interval.lo + (interval.hi - interval.lo) * fractions:
        k = float(k)
        if math.isinf(c0):
            thetas = np.geomspace(1.0 / THETA_SPAN, THETA_SPAN, THETA_GRID_POINTS)
        else:
            thetas = np.geomspace(k / c0, THETA_SPAN * k / c0, THETA_GRID_POINTS + 2)[1:-1]
        for theta in thetas:
            theta = float(theta)
            if not k / theta < c0:
                continue
            c1 = min(2.0 * (params.b * k - params.c2) / (2.0 + theta), params.b - params.c2 / k)
            if g_inf <= c1:
                return k, theta, c1
    return None


def _check_type3(params, kernel, critical: bool) -> AssumptionReport:
    assumption_id = AssumptionId.A32_type3cr if critical else AssumptionId.A31_type3
    violations = []
    lam = params.lambda_
    g_inf = kernel.G_infinity
    if critical:
        if params.regime != Regime.critical:
            violations.append("gamma_zero")
        if not _close(lam, params.alpha / params.tau):
            violations.append("lambda_eq_alpha_over_tau")
    else:
        if params.regime != Regime.non_critical:
            violations.append("gamma_positive")
        if not params.c2 / params.b < lam < params.alpha / params.tau:
            violations.append("lambda_in_interval")
    bound = params.c2 / lam if lam > 0 else math.inf
    if lam <= 0:
        violations.append("lambda_positive")
    if not g_inf < bound:
        violations.append("G_infinity_lt_c2_over_lambda")
    witnesses = {
        "gamma": params.gamma,
        "lambda": lam,
        "G_infinity": g_inf,
        "c2_over_lambda": bound,
    }
    return _report(assumption_id, witnesses, violations)
