"""
Pydantic schemas for experiment configuration and simulation records.
Parsing is strict: unknown keys are rejected at every level.
"""
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.econ import (
    ABILITY_ORDER,
    DEFAULT_ANCHORS,
    DEFAULT_GAMMAS,
    Ability,
    ClassCalibration,
    EffortBounds,
)
from utils.manipulation import PenaltyScheme

RECORDS_SCHEMA_VERSION = "cycle-records/v1"
SUMMARY_SCHEMA_VERSION = "summary/v1"
MAX_CYCLES = 100
MAX_SEED = (1 << 64) - 1
# Market fields the experiment overrides per run (see point_configs).
RUN_LEVEL_FIELDS = ("structure",)


class Arm(str, Enum):
    """Signal-precision condition of an experiment arm."""
    WITH_AI = "with_ai"
    WITHOUT_AI = "without_ai"


class MarketStructure(str, Enum):
    COMPETITIVE = "competitive"
    OLIGOPOLY = "oligopoly"
    MONOPOLY = "monopoly"


class ContractMode(str, Enum):
    """How the principal writes contracts."""
    POSTED = "posted"
    EVIDENCE_WEIGHTED = "evidence_weighted"
    DYNAMIC = "dynamic"
    MENU = "menu"


class ExperimentMode(str, Enum):
    SINGLE = "single"
    CYCLES = "cycles"


class AbilityShares(BaseModel):
    """Population shares of the three ability classes."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    high: float = Field(0.3, ge=0.0, le=1.0)
    medium: float = Field(0.2, ge=0.0, le=1.0)
    low: float = Field(0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_sum(self):
        total = self.high + self.medium + self.low
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ability_shares must sum to 1, got {total}")
        return self

    def as_map(self) -> dict:
        return {Ability.HIGH: self.high, Ability.MEDIUM: self.medium, Ability.LOW: self.low}


class ClassValues(BaseModel):
    """One real value per ability class."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    high: float
    medium: float
    low: float

    def as_map(self) -> dict:
        return {Ability.HIGH: self.high, Ability.MEDIUM: self.medium, Ability.LOW: self.low}


def _class_values(values: dict) -> ClassValues:
    return ClassValues(**{ability.value: values[ability] for ability in ABILITY_ORDER})


class MarketConfig(BaseModel):
    """Population, signal channels, market structure and run sizes of one experiment."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_agents: int = Field(300, gt=0, description="Agents per replication")
    ability_shares: AbilityShares = Field(default_factory=AbilityShares)
    sigma_theta: float = Field(0.05, ge=0.0, description="Type-signal noise sd of the AI channel")
    sigma_e: float = Field(0.05, ge=0.0, description="Effort-signal noise sd of the AI channel")
    control_accuracy: float = Field(0.8, gt=0.0, le=1.0,
                                    description="MAP classification accuracy of the control channel")
    control_sigma_e: float = Field(0.2, ge=0.0, description="Effort-signal noise sd of the control channel")
    structure: MarketStructure = MarketStructure.COMPETITIVE
    oligopoly_firms: int = Field(3, ge=2, description="Number of principals under oligopoly")
    cycles: int = Field(10, ge=1, le=MAX_CYCLES)
    discount: float = Field(0.95, gt=0.0, lt=1.0, description="Per-period discount factor δ")
    replications: int = Field(30, ge=1)
    master_seed: int = Field(20240501, ge=0, le=MAX_SEED)
    manipulation: Optional[PenaltyScheme] = Field(None, description="Enables signal manipulation")
    correlation_rho: float = Field(0.0, gt=-1.0, lt=1.0, description="Prior type correlation within agent pairs")
    theta_jitter: float = Field(0.0, ge=0.0, le=0.1, description="Half-width of uniform within-class θ jitter")
    contract_mode: ContractMode = ContractMode.POSTED
    effort_prior_variance: float = Field(0.09, gt=0.0, description="Principal's prior variance over effort")
    hiring_bar: float = Field(0.3, description="Minimum posterior mean type the principal hires")
    outside_option_spread: float = Field(0.0, ge=0.0,
                                         description="Width of ξ ~ U[-w/2, w/2] in U₀ + ξ·W^FB outside options")
    learning_weight: float = Field(0.3, ge=0.0, le=1.0, description="EMA weight of realized surprises")
    lifetime_ir: bool = Field(False, description="Participation decided once at cycle 0")
    menu_scale: float = Field(2.0, ge=0.0, description="Menu half-width per unit of σ_θ²")
    audit_reference_sd: float = Field(0.1, gt=0.0, description="Channel sd at which detection is unscaled")
    anchors: ClassValues = Field(default_factory=lambda: _class_values(DEFAULT_ANCHORS))
    gammas: ClassValues = Field(default_factory=lambda: _class_values(DEFAULT_GAMMAS))
    reservation_utilities: ClassValues = Field(
        default_factory=lambda: ClassValues(high=0.0, medium=0.0, low=0.0)
    )
    effort_bounds: EffortBounds = Field(default_factory=EffortBounds)

    @model_validator(mode="after")
    def check_calibration(self):
        # raises on non-monotone anchors or gammas
        self.calibration()
        return self

    def calibration(self) -> ClassCalibration:
        return ClassCalibration(
            anchors=self.anchors.as_map(),
            gammas=self.gammas.as_map(),
            reservation_utilities=self.reservation_utilities.as_map(),
        )


class StructureRule(BaseModel):
    """How expected surplus divides between principal and agent."""
    model_config = ConfigDict(frozen=True)

    kind: MarketStructure
    n_principals: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_principals(self):
        if self.kind == MarketStructure.MONOPOLY and self.n_principals != 1:
            raise ValueError("a monopoly has one principal")
        if self.kind == MarketStructure.OLIGOPOLY and self.n_principals < 2:
            raise ValueError("an oligopoly needs at least two principals")
        return self

    @classmethod
    def from_config(cls, config: MarketConfig) -> "StructureRule":
        if config.structure == MarketStructure.MONOPOLY:
            return cls(kind=config.structure, n_principals=1)
        if config.structure == MarketStructure.OLIGOPOLY:
            return cls(kind=config.structure, n_principals=config.oligopoly_firms)
        # free entry: the count only matters through the zero-profit condition
        return cls(kind=config.structure, n_principals=2)

    @property
    def principal_share(self) -> float:
        """Share of the monopoly margin the principal keeps."""
        if self.kind == MarketStructure.MONOPOLY:
            return 1.0
        if self.kind == MarketStructure.OLIGOPOLY:
            return 1.0 / self.n_principals
        return 0.0

    @property
    def rent_split(self) -> str:
        if self.kind == MarketStructure.MONOPOLY:
            return "principal keeps the surplus, agent held at U0"
        if self.kind == MarketStructure.OLIGOPOLY:
            return f"principal keeps 1/{self.n_principals} of the monopoly margin"
        return "transfers bid up to zero expected profit"


class CycleRecord(BaseModel):
    """Outcome of one agent in one cycle of one arm."""
    model_config = ConfigDict(frozen=True)

    replication: int
    cycle: int
    agent_id: int
    structure: MarketStructure
    arm: Arm
    ability: Ability
    map_ability: Ability
    theta: float
    accepted: bool
    effort: float
    wage: float
    output: float
    effort_cost: float
    agent_utility: float
    principal_profit: float
    welfare_contribution: float
    rent: float
    manipulated: bool
    manipulation_cost: float
    fine_paid: float
    posterior_mean: float
    posterior_variance: float
    first_best_welfare: float


RECORD_COLUMNS = list(CycleRecord.model_fields)


class SweepAxis(BaseModel):
    """One MarketConfig field and the values it takes."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    param: str
    values: List[Union[int, float, str]] = Field(..., min_length=1)

    @field_validator("param")
    @classmethod
    def validate_param(cls, v):
        if v not in MarketConfig.model_fields:
            raise ValueError(f"sweep parameter '{v}' is not a market field")
        if v in RUN_LEVEL_FIELDS:
            raise ValueError(f"sweep parameter '{v}' is set by the experiment, list it under 'structures' instead")
        return v


class ExperimentSpec(BaseModel):
    """A market configuration plus run mode, outputs and an optional sweep."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    market: MarketConfig = Field(default_factory=MarketConfig)
    mode: ExperimentMode = ExperimentMode.CYCLES
    structures: List[MarketStructure] = Field(
        default_factory=lambda: [MarketStructure.COMPETITIVE, MarketStructure.OLIGOPOLY, MarketStructure.MONOPOLY],
        min_length=1,
    )
    output_dir: Path = Field(Path("default"), description="Run directory; relative paths resolve under OUTPUT_DIR")
    report_formats: List[Literal["csv", "json", "md"]] = Field(default_factory=lambda: ["csv", "json"])
    sweep: Optional[SweepAxis] = None
    workers: Optional[int] = Field(None, ge=1, description="Replication worker pool size")

    @model_validator(mode="after")
    def check_sweep_values(self):
        if self.sweep is not None and self.sweep.param == "cycles" and self.mode == ExperimentMode.SINGLE:
            raise ValueError("a cycles sweep has no effect in single mode")
        # every sweep point has to form a valid market
        self.resolved_markets()
        return self

    def resolved_markets(self) -> List[MarketConfig]:
        """One MarketConfig per sweep point (just the base market without a sweep)."""
        if self.sweep is None:
            return [self.market]
        base = self.market.model_dump()
        return [
            MarketConfig.model_validate({**base, self.sweep.param: value})
            for value in self.sweep.values
        ]
