"""
Signal-manipulation game.

The agent may inflate its type and effort signals at a quadratic cost and risks
a fine when detected; the principal sets the fine. Detection probability is
piecewise linear, p(Δ) = min(1, λ·(Δ_θ + Δ_e)).
"""
import logging
import math
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field

from utils.bayes import SignalChannel
from utils.contracts import LinearContract, best_response_effort
from utils.econ import DEFAULT_BOUNDS, AgentProfile, EffortBounds

logger = logging.getLogger(__name__)

# Smallest channel standard deviation used when scaling detection.
MIN_AUDIT_SD = 1e-12


class ManipulationPolicy(BaseModel):
    """Upward shifts applied to the type and effort signals."""
    model_config = ConfigDict(frozen=True)

    delta_theta: float = Field(0.0, ge=0.0, description="Type-signal inflation Δ_θ")
    delta_e: float = Field(0.0, ge=0.0, description="Effort-signal inflation Δ_e")

    @property
    def is_active(self) -> bool:
        return self.delta_theta > 0.0 or self.delta_e > 0.0


NO_MANIPULATION = ManipulationPolicy()


class PenaltyScheme(BaseModel):
    """Manipulation cost coefficients, detection slope and fine."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kappa_theta: float = Field(1.0, gt=0.0, description="Quadratic cost coefficient on Δ_θ")
    kappa_e: float = Field(1.0, gt=0.0, description="Quadratic cost coefficient on Δ_e")
    detection_slope: float = Field(1.0, ge=0.0, description="λ in p = min(1, λ(Δ_θ+Δ_e))")
    fine: float = Field(0.0, ge=0.0, description="Fine F charged on detection")


def manipulation_cost(policy: ManipulationPolicy, scheme: PenaltyScheme) -> float:
    """k(Δ) = κ_θ/2·Δ_θ² + κ_e/2·Δ_e²."""
    return 0.5 * scheme.kappa_theta * policy.delta_theta ** 2 + 0.5 * scheme.kappa_e * policy.delta_e ** 2


def detection_probability(policy: ManipulationPolicy, scheme: PenaltyScheme) -> float:
    return min(1.0, scheme.detection_slope * (policy.delta_theta + policy.delta_e))


def expected_manipulation_payoff(policy: ManipulationPolicy, contract: LinearContract,
                                 scheme: PenaltyScheme, type_loading: float = 0.0) -> float:
    """Wage gain α·Δ_e + b·Δ_θ net of manipulation cost and expected fine."""
    gain = contract.alpha * policy.delta_e + type_loading * policy.delta_theta
    return gain - manipulation_cost(policy, scheme) - detection_probability(policy, scheme) * scheme.fine


def _on_certain_detection_line(alpha: float, loading: float, scheme: PenaltyScheme) -> ManipulationPolicy:
    # maximize αx + by − κe/2·x² − κθ/2·y² on x + y = 1/λ, x, y ≥ 0
    total = 1.0 / scheme.detection_slope
    ke, kt = scheme.kappa_e, scheme.kappa_theta
    mu = (alpha / ke + loading / kt - total) / (1.0 / ke + 1.0 / kt)
    x = (alpha - mu) / ke
    y = (loading - mu) / kt
    if x < 0:
        x, y = 0.0, total
    elif y < 0:
        x, y = total, 0.0
    return ManipulationPolicy(delta_theta=y, delta_e=x)


def _candidates(contract: LinearContract, scheme: PenaltyScheme, type_loading: float,
                include_fine: bool) -> List[ManipulationPolicy]:
    alpha, loading = contract.alpha, type_loading
    lam = scheme.detection_slope
    fine = scheme.fine if include_fine else 0.0
    candidates = [NO_MANIPULATION]

    # interior of the linear-detection region
    interior = ManipulationPolicy(
        delta_theta=max(0.0, (loading - lam * fine) / scheme.kappa_theta),
        delta_e=max(0.0, (alpha - lam * fine) / scheme.kappa_e),
    )
    if lam * (interior.delta_theta + interior.delta_e) <= 1.0:
        candidates.append(interior)

    if lam > 0:
        # detection certain: the fine is a constant, manipulation is set by cost alone
        saturated = ManipulationPolicy(delta_theta=loading / scheme.kappa_theta,
                                       delta_e=alpha / scheme.kappa_e)
        if lam * (saturated.delta_theta + saturated.delta_e) >= 1.0:
            candidates.append(saturated)
        candidates.append(_on_certain_detection_line(alpha, loading, scheme))
    return candidates


def manip_best_response(contract: LinearContract, profile: AgentProfile, scheme: PenaltyScheme,
                        bounds: EffortBounds = DEFAULT_BOUNDS,
                        type_loading: float = 0.0) -> Tuple[ManipulationPolicy, float]:
    """
    Agent's joint choice of manipulation and effort.

    Effort and manipulation separate: effort solves α = c'(e) as without
    manipulation, and Δ maximizes the wage gain net of k(Δ) and p(Δ)·F. The
    interior solution is Δ_e* = max(0, (α − λF)/κ_e) (Δ_θ* likewise with the
    type loading); the p = 1 kink and the certain-detection region are checked
    as well. Ties keep the smaller manipulation.

    Args:
        contract: Posted contract (its slope is the effort-signal loading)
        profile: True agent profile
        scheme: Cost and penalty parameters
        bounds: Effort bounds
        type_loading: Wage loading on the type signal

    Returns:
        (ManipulationPolicy, effort)
    """
    best = NO_MANIPULATION
    best_payoff = 0.0
    for candidate in _candidates(contract, scheme, type_loading, include_fine=True):
        payoff = expected_manipulation_payoff(candidate, contract, scheme, type_loading)
        if payoff > best_payoff:
            best, best_payoff = candidate, payoff
    return best, best_response_effort(contract, profile, bounds)


def deterrence_threshold(contract: LinearContract, scheme_without_fine: PenaltyScheme,
                         type_loading: float = 0.0) -> float:
    """
    Smallest fine F* making zero manipulation a best response for every F ≥ F*.

    In the linear-detection region F* = max(α, b)/λ; when certain detection
    still leaves a positive gain, F* also has to exceed that gain.

    Returns:
        F*, or +inf when detection is impossible and manipulation pays
    """
    alpha, loading = contract.alpha, type_loading
    if alpha <= 0 and loading <= 0:
        return 0.0
    lam = scheme_without_fine.detection_slope
    if lam == 0:
        return math.inf

    free = scheme_without_fine.model_copy(update={"fine": 0.0})
    saturated_gain = 0.0
    for candidate in _candidates(contract, free, type_loading, include_fine=False):
        if lam * (candidate.delta_theta + candidate.delta_e) >= 1.0:
            saturated_gain = max(
                saturated_gain, expected_manipulation_payoff(candidate, contract, free, type_loading)
            )
    return max(max(alpha, loading) / lam, saturated_gain)


def audited_scheme(scheme: PenaltyScheme, channel: SignalChannel,
                   reference_sd: float = 0.1) -> PenaltyScheme:
    """
    Scale the detection slope by the channel's precision.

    A shift Δ is flagged in proportion to how many noise standard deviations
    it spans, so λ_eff = λ·reference_sd/σ. At σ = reference_sd the scheme is
    unchanged.
    """
    sd = max(channel.sd, MIN_AUDIT_SD)
    return scheme.model_copy(update={"detection_slope": scheme.detection_slope * reference_sd / sd})
