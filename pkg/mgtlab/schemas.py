import configparser
import io
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator


class MemoryType(str, Enum):
    none = "none"
    type1 = "type1"
    type2 = "type2"
    type3 = "type3"


class Regime(str, Enum):
    non_critical = "non_critical"  # gamma > 0
    critical = "critical"  # gamma = 0 within tolerance
    unstable = "unstable"  # gamma < 0


class AssumptionId(str, Enum):
    A0_kernel = "A0_kernel"
    A1_type1 = "A1_type1"
    A2_type2 = "A2_type2"
    A31_type3 = "A31_type3"
    A32_type3cr = "A32_type3cr"


class IdentityId(str, Enum):
    E0R0 = "E0R0"
    E1R1 = "E1R1"
    E2R2 = "E2R2"
    E3R3 = "E3R3"
    E3crR3cr = "E3crR3cr"
    E11m_id = "E11m_id"
    E12m_id = "E12m_id"


class Convention(str, Enum):
    printed = "printed"
    sign_corrected = "sign_corrected"


class IntegrationPath(str, Enum):
    prony_aux = "prony_aux"
    quadrature = "quadrature"


# Verdict schemas
class _Report(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")


class AssumptionReport(_Report):
    assumption_id: AssumptionId
    satisfied: bool
    witnesses: Dict[str, float] = {}
    violations: List[str] = []

    @model_validator(mode="after")
    def satisfied_iff_no_violations(self):
        if self.satisfied != (not self.violations):
            raise ValueError("satisfied must be true exactly when violations is empty")
        return self


class DecayFit(_Report):
    omega: float
    C: PositiveFloat
    r_squared: float = Field(..., ge=0.0, le=1.0)
    window: Tuple[float, float]


class IdentityAuditResult(_Report):
    identity_id: IdentityId
    convention: Convention
    residual_series: List[float]
    max_abs_residual: float
    refinement_order: float
    level_residuals: List[Tuple[float, float]] = []  # (h, normalized max residual)


class StabilityVerdict(_Report):
    mu: PositiveFloat
    roots: List[Tuple[float, float]]  # (real, imag)
    max_real_part: float
    hurwitz: bool
    routh_hurwitz: bool
    gamma: float
    printed_roots: List[Tuple[float, float]] = []

    @field_validator("roots")
    @classmethod
    def three_roots(cls, v):
        if len(v) != 3:
            raise ValueError("a cubic has exactly three roots")
        return v


class GronwallCheck(_Report):
    C_est: float
    C_est_half_horizon: float
    satisfied: bool
    bound_holds: bool


class EquivalenceConstants(_Report):
    C1: float
    C2: float
    a_priori: Optional[Tuple[float, float]] = None


# Experiment config schemas
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @staticmethod
    def _split(v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v


class ModelSection(_Section):
    tau: PositiveFloat
    alpha: PositiveFloat
    b: PositiveFloat
    c2: PositiveFloat
    memory_type: MemoryType = MemoryType.none
    lambda_: float = Field(0.0, alias="lambda", ge=0.0)
    k_override: Optional[PositiveFloat] = None


class KernelSection(_Section):
    kind: str = "zero"
    weights: List[float] = []
    rates: List[float] = []
    csv_path: Optional[str] = None
    scale: float = Field(1.0, ge=0.0)

    @field_validator("weights", "rates", mode="before")
    @classmethod
    def split_lists(cls, v):
        return cls._split(v)

    @field_validator("kind")
    @classmethod
    def known_kind(cls, v):
        if v not in ("zero", "prony", "sampled"):
            raise ValueError("kind must be one of zero, prony, sampled")
        return v

    @model_validator(mode="after")
    def kind_fields(self):
        if self.kind == "prony" and (not self.weights or len(self.weights) != len(self.rates)):
            raise ValueError("prony kernel needs weights and rates of equal, nonzero length")
        if self.kind == "sampled" and not self.csv_path:
            raise ValueError("sampled kernel needs csv_path")
        return self


class OperatorSection(_Section):
    kind: str = "dirichlet_1d"
    length: Optional[PositiveFloat] = None
    modes: Optional[int] = Field(None, ge=1)
    eigenvalues: List[float] = []

    @field_validator("eigenvalues", mode="before")
    @classmethod
    def split_lists(cls, v):
        return cls._split(v)

    @model_validator(mode="after")
    def kind_fields(self):
        if self.kind == "dirichlet_1d":
            if self.length is None or self.modes is None:
                raise ValueError("dirichlet_1d needs length and modes")
        elif self.kind == "explicit":
            if not self.eigenvalues:
                raise ValueError("explicit operator needs eigenvalues")
        else:
            raise ValueError("kind must be dirichlet_1d or explicit")
        return self


class InitialSection(_Section):
    preset: str = "explicit"
    u0: List[float] = []
    u1: List[float] = []
    u2: List[float] = []
    seed: int = 0
    amplitude: float = 1.0

    @field_validator("u0", "u1", "u2", mode="before")
    @classmethod
    def split_lists(cls, v):
        return cls._split(v)

    @field_validator("preset")
    @classmethod
    def known_preset(cls, v):
        if v not in ("explicit", "first_mode_bump", "random_seeded"):
            raise ValueError("preset must be explicit, first_mode_bump or random_seeded")
        return v


class TimeSection(_Section):
    t_end: PositiveFloat
    h: PositiveFloat
    path: IntegrationPath = IntegrationPath.prony_aux


class AnalysisSection(_Section):
    window_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    audit: bool = True
    refinement_levels: int = Field(3, ge=3)


class StabilitySection(_Section):
    tau: Optional[List[PositiveFloat]] = None
    alpha: Optional[List[PositiveFloat]] = None
    b: Optional[List[PositiveFloat]] = None
    c2: Optional[List[PositiveFloat]] = None
    mu: Optional[List[PositiveFloat]] = None

    @field_validator("tau", "alpha", "b", "c2", "mu", mode="before")
    @classmethod
    def split_lists(cls, v):
        v = cls._split(v)
        if v is not None and len(v) == 0:
            raise ValueError("range must not be empty")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelSection
    kernel: KernelSection
    operator: OperatorSection
    initial: InitialSection
    time: TimeSection
    analysis: AnalysisSection
    stability: Optional[StabilitySection] = None

    def to_ini(self) -> str:
        """Serialize back to the sectioned key = value format."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in SECTION_ORDER:
            section = getattr(self, name)
            if section is None:
                continue
            parser[name] = {
                key: _ini_value(value)
                for key, value in section.model_dump(by_alias=True, exclude_none=True, mode="json").items()
                if value != []
            }
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()


SECTION_ORDER = ("model", "kernel", "operator", "initial", "time", "analysis", "stability")


def _ini_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(_ini_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# Report schemas
class AuditSummary(_Report):
    identity_id: IdentityId
    convention: Convention
    max_abs_residual: float
    refinement_order: float
    winner: bool
    level_residuals: List[Tuple[float, float]] = []  # (h, normalized max residual)


class RunMetadata(_Report):
    t_end: float
    h: float
    n_steps: int
    path: IntegrationPath
    memory_type: MemoryType
    regime: Regime
    gamma: float
    k: Optional[float] = None
    n_modes: int
    forced: bool = False
    versions: Dict[str, str] = {}


class VerdictReport(_Report):
    metadata: RunMetadata
    assumptions: List[AssumptionReport] = []
    decay_fits: Dict[str, DecayFit] = {}
    audits: List[AuditSummary] = []
    stability: List[StabilityVerdict] = []
    conservation_drift: Optional[float] = None
    gronwall: Dict[str, GronwallCheck] = {}
    equivalence: Dict[str, EquivalenceConstants] = {}
    failure: Optional[str] = None
    exit_code: int = 0


class SweepRow(_Report):
    parameter: str
    value: float
    exit_code: int
    gamma: Optional[float] = None
    omegas: Dict[str, float] = {}
    max_audit_residual: Optional[float] = None
    violations: List[str] = []
    failure: Optional[str] = None
