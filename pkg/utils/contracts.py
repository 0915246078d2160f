"""
Contract optimization for the linear-wage principal-agent model.

Agent best responses, IR-binding transfers, optimal linear contracts under a
posterior belief, screening menus, information rents, payment variance and the
per-period dynamic wage.
"""
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.bayes import GaussianBelief, SignalChannel, effort_evidence_weight
from utils.econ import DEFAULT_BOUNDS, AgentProfile, EffortBounds, cost
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# Utility edge given to each type's own menu item over the next-lower item.
SEPARATION_MARGIN = 1e-9


class LinearContract(BaseModel):
    """Wage w(s_e) = alpha·s_e + beta."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., ge=0.0, description="Incentive slope α")
    beta: float = Field(..., description="Fixed transfer β")

    @field_validator("alpha", "beta")
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("contract terms must be finite")
        return v

    def wage(self, effort_signal: float) -> float:
        return self.alpha * effort_signal + self.beta

    def with_bonus(self, bonus: float) -> "LinearContract":
        return LinearContract(alpha=self.alpha, beta=self.beta + bonus)


class MenuItem(BaseModel):
    """One screening-menu entry: a signal interval and its contract."""
    model_config = ConfigDict(frozen=True)

    anchor: float
    lo: float
    hi: float
    contract: LinearContract

    def contains(self, signal: float) -> bool:
        return self.lo <= signal <= self.hi


class ContractMenu(BaseModel):
    """Interval-indexed contract menu, ordered by anchor."""
    model_config = ConfigDict(frozen=True)

    items: List[MenuItem]

    @model_validator(mode="after")
    def check_intervals(self):
        for prev, item in zip(self.items, self.items[1:]):
            if not (prev.anchor < item.anchor and prev.hi <= item.lo):
                raise ValueError("menu intervals must be ordered and disjoint")
        return self

    def item_for(self, signal: float) -> int:
        """
        Index of the item whose interval holds the signal.

        A signal on a shared boundary goes to the lower interval; a signal in a
        gap goes to the nearest interval (ties to the lower).
        """
        for k, item in enumerate(self.items):
            if item.contains(signal):
                return k

        def distance(k: int) -> float:
            item = self.items[k]
            return item.lo - signal if signal < item.lo else signal - item.hi

        return min(range(len(self.items)), key=lambda k: (distance(k), k))

    def select(self, profile: AgentProfile, bounds: EffortBounds = DEFAULT_BOUNDS) -> int:
        """Index of the item maximizing the agent's expected utility (ties to the lower)."""
        utilities = [expected_utility(item.contract, profile, bounds) for item in self.items]
        best = max(utilities)
        return utilities.index(best)


class RentReport(BaseModel):
    """Expected wage, effort cost and information rent of an agent under a contract."""
    model_config = ConfigDict(frozen=True)

    expected_wage: float
    effort_cost: float
    rent: float


def best_response_effort(contract: LinearContract, profile: AgentProfile,
                         bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Effort maximizing α·e + β − γ/2·e², i.e. clamp(α/γ)."""
    return bounds.clamp(contract.alpha / profile.gamma)


def expected_utility(contract: LinearContract, profile: AgentProfile,
                     bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Agent's expected utility at its best response (E[s_e | e] = e)."""
    e = best_response_effort(contract, profile, bounds)
    return contract.alpha * e + contract.beta - cost(e, profile, bounds)


def _ir_transfer(alpha: float, gamma: float, reservation_utility: float, bounds: EffortBounds) -> float:
    e = bounds.clamp(alpha / gamma)
    return reservation_utility + 0.5 * gamma * e * e - alpha * e


def ir_binding_transfer(alpha: float, profile: AgentProfile,
                        bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """
    Fixed transfer that leaves the agent exactly at its reservation utility.

    Args:
        alpha: Incentive slope (≥ 0)
        profile: Agent profile the contract is designed for
        bounds: Effort bounds

    Returns:
        β = U₀ + c(e*) − α·e*
    """
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    return _ir_transfer(alpha, profile.gamma, profile.reservation_utility, bounds)


def _slope_for(target_slope: float, gamma: float, bounds: EffortBounds) -> float:
    # slopes beyond γ·hi induce the same (clamped) effort, keep the smallest one
    return min(max(target_slope, gamma * bounds.lo), gamma * bounds.hi)


def optimal_terms(theta_hat, gamma_hat, U0, bounds: EffortBounds = DEFAULT_BOUNDS,
                  slope_weight: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    (α, β) of the IR-binding linear contract for a batch of believed types.

    The target slope is ``slope_weight``·θ̂, clamped to [γ̂·lo, γ̂·hi]; β binds
    IR at the believed γ̂ and U₀. A non-positive θ̂ gets the no-trade terms
    (α = 0, β = U₀). Arguments broadcast against each other.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    alpha = np.minimum(np.maximum(slope_weight * theta_hat, gamma_hat * bounds.lo), gamma_hat * bounds.hi)
    e = np.minimum(np.maximum(alpha / gamma_hat, bounds.lo), bounds.hi)
    beta = U0 + 0.5 * gamma_hat * e * e - alpha * e
    trade = theta_hat > 0
    return np.where(trade, alpha, 0.0), np.where(trade, beta, U0)


def optimal_contract(belief: GaussianBelief, channel_e: SignalChannel, profile_gamma: float,
                     U0: float, bounds: EffortBounds = DEFAULT_BOUNDS) -> LinearContract:
    """
    Profit-maximizing linear contract under a posterior belief over θ.

    With risk neutrality and V = θe the principal sets α* = E[θ | s_θ] (effort
    noise only adds variance to pay) and binds IR with β. A non-positive
    posterior mean returns the no-trade contract (α = 0, β = U₀).

    Args:
        belief: Posterior over θ
        channel_e: Effort-signal channel
        profile_gamma: Believed cost sensitivity
        U0: Reservation utility
        bounds: Effort bounds

    Returns:
        LinearContract
    """
    alpha, beta = optimal_terms(belief.mean, profile_gamma, U0, bounds)
    return LinearContract(alpha=float(alpha), beta=float(beta))


def evidence_weighted_contract(belief: GaussianBelief, channel_e: SignalChannel,
                               effort_prior_variance: float, profile_gamma: float, U0: float,
                               bounds: EffortBounds = DEFAULT_BOUNDS) -> LinearContract:
    """
    Contract paying E[θ | s_θ] per unit of the principal's posterior effort estimate.

    The estimate E[e | s_e] moves κ per unit of signal, so the slope on the raw
    signal is κ·E[θ | s_θ]; the prior-mean part of the estimate folds into β.
    Equals optimal_contract when the effort channel is perfect.
    """
    kappa = effort_evidence_weight(effort_prior_variance, channel_e)
    alpha, beta = optimal_terms(belief.mean, profile_gamma, U0, bounds, slope_weight=kappa)
    return LinearContract(alpha=float(alpha), beta=float(beta))


def expected_margins(alpha, beta, believed_theta, believed_gamma,
                     bounds: EffortBounds = DEFAULT_BOUNDS) -> np.ndarray:
    """Array form of expected_margin."""
    e = np.minimum(np.maximum(np.asarray(alpha, dtype=float) / believed_gamma, bounds.lo), bounds.hi)
    return believed_theta * e - (alpha * e + beta)


def expected_margin(contract: LinearContract, believed_theta: float, believed_gamma: float,
                    bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Principal's expected profit θ̂·ê − E[w] at believed parameters."""
    return float(expected_margins(contract.alpha, contract.beta, believed_theta, believed_gamma, bounds))


def design_menu(anchors: Sequence[float], sigma_theta: float, scale: float,
                gammas: Sequence[float], reservation_utilities: Sequence[float],
                bounds: EffortBounds = DEFAULT_BOUNDS) -> ContractMenu:
    """
    Screening menu with one item per anchor type.

    Intervals are centered at the anchors with half-width scale·σ_θ², truncated
    at the midpoints between neighbours. Slopes are the perfect-information
    optimal slopes. The lowest item binds IR; every higher item carries the rent
    that keeps the next-lower type's item just less attractive to it, which
    makes each type's own item its strict best choice.

    Args:
        anchors: Strictly increasing anchor types
        sigma_theta: Type-signal noise standard deviation (≥ 0)
        scale: Interval half-width per unit of σ_θ²
        gammas: Cost sensitivity per anchor
        reservation_utilities: U₀ per anchor
        bounds: Effort bounds

    Returns:
        ContractMenu

    Raises:
        DomainError: If anchors are not strictly increasing or inputs misalign
    """
    anchors = list(anchors)
    if not anchors:
        raise DomainError("menu needs at least one anchor")
    if any(b <= a for a, b in zip(anchors, anchors[1:])):
        raise DomainError(f"anchors must be strictly increasing, got {anchors}")
    if len(gammas) != len(anchors) or len(reservation_utilities) != len(anchors):
        raise DomainError("gammas and reservation utilities must align with anchors")
    if sigma_theta < 0 or scale < 0:
        raise DomainError("sigma_theta and scale must be non-negative")

    half_width = scale * sigma_theta ** 2
    lows = [a - half_width for a in anchors]
    highs = [a + half_width for a in anchors]
    for k in range(len(anchors) - 1):
        mid = 0.5 * (anchors[k] + anchors[k + 1])
        highs[k] = min(highs[k], mid)
        lows[k + 1] = max(lows[k + 1], mid)

    contracts: List[LinearContract] = []
    for k, (theta, gamma, u0) in enumerate(zip(anchors, gammas, reservation_utilities)):
        alpha = _slope_for(theta, gamma, bounds)
        beta = _ir_transfer(alpha, gamma, u0, bounds)
        if contracts:
            own = _gross_utility(alpha, gamma, bounds) + beta
            below = _gross_utility(contracts[-1].alpha, gamma, bounds) + contracts[-1].beta
            if own < below + SEPARATION_MARGIN:
                beta += below + SEPARATION_MARGIN - own
        contracts.append(LinearContract(alpha=alpha, beta=beta))

    items = [
        MenuItem(anchor=a, lo=lo, hi=hi, contract=c)
        for a, lo, hi, c in zip(anchors, lows, highs, contracts)
    ]
    logger.debug(f"Designed {len(items)}-item menu, half-width {half_width:.3g}")
    return ContractMenu(items=items)


def _gross_utility(alpha: float, gamma: float, bounds: EffortBounds) -> float:
    e = bounds.clamp(alpha / gamma)
    return alpha * e - 0.5 * gamma * e * e


def separation_threshold(anchors: Sequence[float], scale: float) -> float:
    """σ_θ at which menu half-widths reach half the smallest anchor gap."""
    gaps = [b - a for a, b in zip(anchors, anchors[1:])]
    if not gaps or scale <= 0:
        return math.inf
    return math.sqrt(min(gaps) / (2.0 * scale))


def information_rent(contract: LinearContract, profile: AgentProfile,
                     bounds: EffortBounds = DEFAULT_BOUNDS) -> RentReport:
    """Surplus over U₀ the agent keeps at its best response."""
    e = best_response_effort(contract, profile, bounds)
    expected_wage = contract.alpha * e + contract.beta
    effort_cost = cost(e, profile, bounds)
    return RentReport(
        expected_wage=expected_wage,
        effort_cost=effort_cost,
        rent=expected_wage - effort_cost - profile.reservation_utility,
    )


def payment_variance(contract: LinearContract, channel_e: SignalChannel) -> float:
    """Variance of the wage, α²·σ_e²."""
    return contract.alpha ** 2 * channel_e.noise_variance


def dynamic_wage(theta_hat_t: float, effort_t: float, transfer_t: float) -> float:
    """Per-period wage V(e_t, θ̂_t) − Δ_t."""
    return theta_hat_t * effort_t - transfer_t


def dynamic_transfer(theta_hat_t: float, believed_gamma: float, U0: float,
                     bounds: EffortBounds = DEFAULT_BOUNDS) -> float:
    """Δ_t leaving the believed type at U₀ for the period: V − c − U₀ at e = θ̂/γ̂ (elementwise on arrays)."""
    e = np.minimum(np.maximum(np.maximum(theta_hat_t, 0.0) / believed_gamma, bounds.lo), bounds.hi)
    return theta_hat_t * e - 0.5 * believed_gamma * e * e - U0


def dynamic_contract(theta_hat_t: float, believed_gamma: float, U0: float,
                     bounds: EffortBounds = DEFAULT_BOUNDS) -> LinearContract:
    """The dynamic wage written as a linear contract on the raw effort signal."""
    transfer = float(dynamic_transfer(theta_hat_t, believed_gamma, U0, bounds))
    return LinearContract(alpha=max(theta_hat_t, 0.0), beta=-transfer)


def multi_agent_wage(alpha_i: float, beta_i: float, s_e_i: float, s_theta_i: float) -> float:
    """Multi-agent wage α_i·s_e + β_i·s_θ; β_i here loads on the type signal."""
    return alpha_i * s_e_i + beta_i * s_theta_i
