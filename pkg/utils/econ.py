"""
Economic primitives of the principal-agent model.

Types, cost, production, utilities and first-best benchmarks. Everything here
is a pure function of its inputs.
"""
from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import DomainError

# Tolerance for effort bound checks, absorbs rounding in clamp/argmax callers.
BOUND_TOLERANCE = 1e-12


class Ability(str, Enum):
    """Ability class of an agent."""
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


# Canonical ordering, highest type first. Used for tables and CSV sorting.
ABILITY_ORDER = (Ability.HIGH, Ability.MEDIUM, Ability.LOW)

DEFAULT_ANCHORS = {Ability.HIGH: 1.0, Ability.MEDIUM: 0.6, Ability.LOW: 0.3}
DEFAULT_GAMMAS = {Ability.HIGH: 1.0, Ability.MEDIUM: 1.5, Ability.LOW: 2.5}


class EffortBounds(BaseModel):
    """Admissible effort interval [lo, hi]."""
    model_config = ConfigDict(frozen=True)

    lo: float = Field(0.0, ge=0.0, description="Lowest admissible effort")
    hi: float = Field(1.0, description="Highest admissible effort")

    @model_validator(mode="after")
    def check_order(self):
        if not self.lo < self.hi:
            raise ValueError(f"effort bounds need lo < hi, got [{self.lo}, {self.hi}]")
        return self

    def clamp(self, effort: float) -> float:
        return min(max(effort, self.lo), self.hi)

    def contains(self, effort: float) -> bool:
        return self.lo - BOUND_TOLERANCE <= effort <= self.hi + BOUND_TOLERANCE


DEFAULT_BOUNDS = EffortBounds()


class AgentProfile(BaseModel):
    """Latent type, ability class, cost sensitivity and reservation utility."""
    model_config = ConfigDict(frozen=True)

    theta: float = Field(..., gt=0.0, description="Latent type θ")
    ability: Ability = Field(..., description="Ability class")
    gamma: float = Field(..., gt=0.0, description="Cost sensitivity γ(θ)")
    reservation_utility: float = Field(0.0, description="Reservation utility U₀")


class ClassCalibration(BaseModel):
    """Per-class anchors θ, cost sensitivities γ and reservation utilities U₀."""
    model_config = ConfigDict(frozen=True)

    anchors: Dict[Ability, float] = Field(default_factory=lambda: dict(DEFAULT_ANCHORS))
    gammas: Dict[Ability, float] = Field(default_factory=lambda: dict(DEFAULT_GAMMAS))
    reservation_utilities: Dict[Ability, float] = Field(
        default_factory=lambda: {ability: 0.0 for ability in ABILITY_ORDER}
    )

    @field_validator("anchors", "gammas", "reservation_utilities")
    @classmethod
    def validate_complete(cls, v):
        missing = [a.value for a in ABILITY_ORDER if a not in v]
        if missing:
            raise ValueError(f"missing ability classes: {missing}")
        return v

    @model_validator(mode="after")
    def check_monotone(self):
        thetas = [self.anchors[a] for a in ABILITY_ORDER]
        gammas = [self.gammas[a] for a in ABILITY_ORDER]
        if any(t <= 0 for t in thetas) or any(g <= 0 for g in gammas):
            raise ValueError("anchors and gammas must be positive")
        if not all(hi > lo for hi, lo in zip(thetas, thetas[1:])):
            raise ValueError("anchors must be strictly decreasing from high to low")
        if not all(hi <= lo for hi, lo in zip(gammas, gammas[1:])):
            raise ValueError("gamma must be non-increasing in theta")
        return self

    def profile(self, ability: Ability, theta: Optional[float] = None) -> AgentProfile:
        return make_profile(ability, self, theta)


class Outcome(BaseModel):
    """Realized payoffs of one contract execution (Eqs. 1-2)."""
    model_config = ConfigDict(frozen=True)

    effort: float
    output: float = Field(..., description="V(e, θ)")
    wage: float
    agent_utility: float = Field(..., description="U_A = w − c(e, θ)")
    principal_utility: float = Field(..., description="U_P = V − w")


def make_profile(ability: Ability, calibration: Optional[ClassCalibration] = None,
                 theta: Optional[float] = None) -> AgentProfile:
    """
    Build an agent profile from the class calibration.

    Args:
        ability: Ability class
        calibration: Class constants (defaults to the standard calibration)
        theta: Latent type override (e.g. anchor plus jitter)

    Returns:
        AgentProfile with the class γ and U₀
    """
    calibration = calibration or ClassCalibration()
    return AgentProfile(
        theta=calibration.anchors[ability] if theta is None else theta,
        ability=ability,
        gamma=calibration.gammas[ability],
        reservation_utility=calibration.reservation_utilities[ability],
    )


def cost(e: float, profile: AgentProfile, bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """
    Quadratic effort cost c(e, θ) = γ(θ)/2 · e².

    Raises:
        DomainError: If e lies outside the effort bounds
    """
    if not bounds.contains(e):
        raise DomainError(f"effort {e} outside bounds [{bounds.lo}, {bounds.hi}]")
    return 0.5 * profile.gamma * e * e


def production(e: float, theta: float) -> float:
    """
    Output V(e, θ) = θ·e.

    Raises:
        DomainError: If theta is not positive
    """
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return theta * e


def first_best_effort(theta: float, gamma: float, bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Welfare-maximizing effort: V_e = c_e gives e* = θ/γ, clamped to bounds."""
    if theta <= 0 or gamma <= 0:
        raise DomainError(f"theta and gamma must be positive, got θ={theta}, γ={gamma}")
    return bounds.clamp(theta / gamma)


def first_best_welfare(theta: float, gamma: float, bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Welfare V − c at the first-best effort."""
    e = first_best_effort(theta, gamma, bounds)
    return theta * e - 0.5 * gamma * e * e


def settle(profile: AgentProfile, effort: float, wage: float,
           bounds: EffortBounds = DEFAULT_BOUNDS) -> Outcome:
    """
    Compute realized utilities for an executed contract.

    Args:
        profile: True agent profile
        effort: Chosen effort
        wage: Realized wage

    Returns:
        Outcome with U_A = w − c and U_P = V − w
    """
    output = production(effort, profile.theta)
    return Outcome(
        effort=effort,
        output=output,
        wage=wage,
        agent_utility=wage - cost(effort, profile, bounds),
        principal_utility=output - wage,
    )
