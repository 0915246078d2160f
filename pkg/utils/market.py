"""
Market simulation drivers.

Single-period and multi-period experiments with a with-AI and a without-AI
arm under competitive, oligopolistic or monopolistic contracting. Each
replication is an independent work unit whose randomness comes only from
counter-based streams keyed by (replication, agent, cycle); both arms and all
structures read the same draws. Within an arm each cycle is computed for all
agents at once.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import stats

from utils.bayes import (
    PERFECT_VARIANCE,
    GaussianBelief,
    PairBelief,
    SignalChannel,
    calibrate_control_sigma,
    effort_evidence_weight,
    map_class_indices,
    pair_posterior,
    population_prior,
    posterior_step,
)
from utils.contracts import (
    LinearContract,
    design_menu,
    dynamic_transfer,
    dynamic_wage,
    expected_margins,
    optimal_terms,
)
from utils.econ import ABILITY_ORDER, AgentProfile, first_best_welfare
from utils.manipulation import (
    PenaltyScheme,
    audited_scheme,
    detection_probability,
    expected_manipulation_payoff,
    manip_best_response,
    manipulation_cost,
)
from utils.metrics import frame_records
from utils.rng import agent_stream, derive_stream, population_stream
from utils.schema import RECORD_COLUMNS, Arm, ContractMode, CycleRecord, MarketConfig, StructureRule

logger = logging.getLogger(__name__)

ARMS = (Arm.WITH_AI, Arm.WITHOUT_AI)
ACCEPT_TOLERANCE = 1e-12
# Noise floor for the pair update, which needs a noisy channel.
PAIR_NOISE_FLOOR = 1e-12

_ABILITY_VALUES = np.array([a.value for a in ABILITY_ORDER], dtype=object)


class Offer(BaseModel):
    """A contract the principal intends to post to one agent."""
    model_config = ConfigDict(frozen=True)

    agent_id: int
    contract: LinearContract
    margin: float


@dataclass(frozen=True)
class ReplicationDraws:
    """Standard draws of one replication, indexed [cycle, agent] (outside: [agent])."""
    type_noise: np.ndarray
    effort_noise: np.ndarray
    detection: np.ndarray
    outside: np.ndarray


@lru_cache(maxsize=64)
def replication_draws(master_seed: int, replication: int, n_agents: int, cycles: int) -> ReplicationDraws:
    """
    Draws of every (agent, cycle) stream of a replication.

    Each stream yields, in order, the type-signal normal, the effort-signal
    normal and the detection uniform. The draws depend only on the stream
    indices, so a shorter horizon reads a prefix of a longer one. Arrays are
    read-only since the cache hands the same object to every caller.
    """
    shape = (cycles, n_agents)
    type_noise, effort_noise, detection = np.empty(shape), np.empty(shape), np.empty(shape)
    for cycle in range(cycles):
        for i in range(n_agents):
            stream = derive_stream(master_seed, replication, i, cycle)
            type_noise[cycle, i] = stream.standard_normal()
            effort_noise[cycle, i] = stream.standard_normal()
            detection[cycle, i] = stream.random()
    outside = np.array([agent_stream(master_seed, replication, i).random() for i in range(n_agents)])
    for array in (type_noise, effort_noise, detection, outside):
        array.setflags(write=False)
    return ReplicationDraws(type_noise, effort_noise, detection, outside)


@lru_cache(maxsize=256)
def arm_channels(config: MarketConfig, arm: Arm) -> Tuple[SignalChannel, SignalChannel]:
    """
    Type and effort channels of an arm.

    The control arm's type noise is calibrated so MAP classification over the
    class anchors hits ``control_accuracy``; at accuracy 1 both arms coincide.
    """
    if arm == Arm.WITH_AI or config.control_accuracy >= 1.0:
        return SignalChannel.from_sd(config.sigma_theta), SignalChannel.from_sd(config.sigma_e)
    sigma = calibrate_control_sigma(
        config.anchors.as_map(), config.ability_shares.as_map(), config.control_accuracy
    )
    return SignalChannel.from_sd(sigma), SignalChannel.from_sd(config.control_sigma_e)


def draw_population(config: MarketConfig, stream: np.random.Generator) -> List[AgentProfile]:
    """
    Draw agent profiles with classes by the configured shares.

    Class draws use a Gaussian copula so agents (2k, 2k+1) share the
    configured correlation; with ρ = 0 the draws are independent uniforms.
    θ sits at the class anchor plus optional uniform jitter.

    Args:
        config: Market configuration
        stream: Population stream

    Returns:
        n_agents profiles, deterministic given the stream
    """
    n = config.n_agents
    if n <= 0:
        return []
    z = stream.standard_normal(n)
    rho = config.correlation_rho
    if rho != 0.0:
        z[1::2] = rho * z[0:n - 1:2] + math.sqrt(1.0 - rho * rho) * z[1::2]
    u = stats.norm.cdf(z)
    jitter = (
        stream.uniform(-config.theta_jitter, config.theta_jitter, n)
        if config.theta_jitter > 0 else np.zeros(n)
    )

    shares = config.ability_shares.as_map()
    cutoffs = np.cumsum([shares[a] for a in ABILITY_ORDER])
    calibration = config.calibration()
    classes = np.minimum(np.searchsorted(cutoffs, u, side="right"), len(ABILITY_ORDER) - 1)
    profiles = []
    for k, offset in zip(classes, jitter):
        ability = ABILITY_ORDER[int(k)]
        profiles.append(calibration.profile(ability, calibration.anchors[ability] + float(offset)))
    return profiles


def degrade_signal(true_value: float, arm: Arm, config: MarketConfig, stream: np.random.Generator,
                   kind: str = "type") -> float:
    """
    Pass a true type or effort through the arm's noisy channel.

    Args:
        true_value: θ or e
        arm: Experiment arm
        config: Market configuration
        stream: Agent-cycle stream (one standard normal is consumed)
        kind: "type" or "effort"

    Returns:
        Observed signal
    """
    type_channel, effort_channel = arm_channels(config, arm)
    channel = type_channel if kind == "type" else effort_channel
    return true_value + channel.sd * float(stream.standard_normal())


def structure_bonus(margin, rule: StructureRule):
    """Part of the expected margin passed to the agent: (1 − principal share)·max(margin, 0)."""
    return (1.0 - rule.principal_share) * np.maximum(margin, 0.0)


def apply_structure(offers: Sequence[Offer], rule: StructureRule) -> List[Offer]:
    """
    Divide each offer's expected margin between principal and agent.

    Monopoly keeps the IR-binding transfer; competition bids the transfer up
    until expected profit is zero; an oligopoly of k leaves the principal 1/k
    of the monopoly margin.
    """
    adjusted = []
    for offer in offers:
        bonus = float(structure_bonus(offer.margin, rule))
        adjusted.append(Offer(
            agent_id=offer.agent_id,
            contract=offer.contract.with_bonus(bonus),
            margin=offer.margin - bonus,
        ))
    return adjusted


def run_frame(config: MarketConfig) -> pd.DataFrame:
    """All replications of a config as one records frame."""
    frames = [simulate_frame(config, replication) for replication in range(config.replications)]
    return pd.concat(frames, ignore_index=True)


def run_single_period(config: MarketConfig) -> List[CycleRecord]:
    """Single-period experiment over all replications (cycles forced to 1)."""
    return frame_records(run_frame(config.model_copy(update={"cycles": 1})))


def run_cycles(config: MarketConfig) -> List[CycleRecord]:
    """Multi-period experiment over all replications."""
    return frame_records(run_frame(config))


def simulate_replication(config: MarketConfig, replication: int) -> List[CycleRecord]:
    """
    All cycles of both arms for one replication.

    Returns:
        Records ordered by (arm, cycle, agent_id)
    """
    return frame_records(simulate_frame(config, replication))


def simulate_frame(config: MarketConfig, replication: int) -> pd.DataFrame:
    """simulate_replication as a frame with RECORD_COLUMNS, enums stored as their values."""
    population = draw_population(config, population_stream(config.master_seed, replication))
    draws = replication_draws(config.master_seed, replication, len(population), config.cycles)
    frame = pd.concat(
        [_simulate_arm(config, replication, arm, population, draws) for arm in ARMS],
        ignore_index=True,
    )
    logger.debug(f"Replication {replication}: {len(frame)} records ({config.structure.value})")
    return frame


def _update_pair_beliefs(config: MarketConfig, prior: GaussianBelief, channel: SignalChannel,
                         pair_beliefs: Dict[int, PairBelief], signals: Sequence[float]) -> List[GaussianBelief]:
    # agents 2k and 2k+1 share a joint belief updated with both signals
    noisy = SignalChannel(noise_variance=max(channel.noise_variance, PAIR_NOISE_FLOOR))
    beliefs: List[GaussianBelief] = []
    for first in range(0, len(signals), 2):
        if first + 1 >= len(signals):
            state = pair_beliefs.get(first, PairBelief.from_marginals(prior, prior, 0.0))
            state = pair_posterior(state, float(signals[first]), noisy)
            pair_beliefs[first] = state
            beliefs.append(state.marginal(0))
            continue
        state = pair_beliefs.get(first, PairBelief.from_marginals(prior, prior, config.correlation_rho))
        state = pair_posterior(state, float(signals[first]), noisy)
        state = pair_posterior(state.swapped(), float(signals[first + 1]), noisy).swapped()
        pair_beliefs[first] = state
        beliefs.extend([state.marginal(0), state.marginal(1)])
    return beliefs


def _menu_terms(config: MarketConfig, type_channel: SignalChannel,
                population: Sequence[AgentProfile]) -> Tuple[np.ndarray, np.ndarray]:
    # agents self-select, so the pick depends on the true profile only
    calibration = config.calibration()
    ascending = list(reversed(ABILITY_ORDER))
    menu = design_menu(
        [calibration.anchors[a] for a in ascending], type_channel.sd, config.menu_scale,
        [calibration.gammas[a] for a in ascending],
        [calibration.reservation_utilities[a] for a in ascending],
        config.effort_bounds,
    )
    picks = [menu.items[menu.select(profile, config.effort_bounds)].contract for profile in population]
    return np.array([c.alpha for c in picks]), np.array([c.beta for c in picks])


@dataclass
class _Manipulation:
    """Per-agent manipulation choice in one cycle."""
    active: np.ndarray
    delta_e: np.ndarray
    cost: np.ndarray
    detection: np.ndarray
    payoff: np.ndarray

    @classmethod
    def none(cls, n: int) -> "_Manipulation":
        return cls(np.zeros(n, dtype=bool), np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))


def _manipulation(scheme: PenaltyScheme, offered: np.ndarray, alpha: np.ndarray, beta: np.ndarray,
                  population: Sequence[AgentProfile], config: MarketConfig) -> _Manipulation:
    choice = _Manipulation.none(len(population))
    for i in np.flatnonzero(offered):
        contract = LinearContract(alpha=float(alpha[i]), beta=float(beta[i]))
        policy, _ = manip_best_response(contract, population[i], scheme, config.effort_bounds)
        if not policy.is_active:
            continue
        choice.active[i] = True
        choice.delta_e[i] = policy.delta_e
        choice.cost[i] = manipulation_cost(policy, scheme)
        choice.detection[i] = detection_probability(policy, scheme)
        choice.payoff[i] = expected_manipulation_payoff(policy, contract, scheme)
    return choice


def _simulate_arm(config: MarketConfig, replication: int, arm: Arm,
                  population: Sequence[AgentProfile], draws: ReplicationDraws) -> pd.DataFrame:
    calibration = config.calibration()
    bounds = config.effort_bounds
    shares = config.ability_shares.as_map()
    anchors = calibration.anchors
    rule = StructureRule.from_config(config)
    type_channel, effort_channel = arm_channels(config, arm)
    prior = population_prior(shares, anchors, config.theta_jitter)
    n, n_cycles = len(population), config.cycles

    class_gamma = np.array([calibration.gammas[a] for a in ABILITY_ORDER])
    class_u0 = np.array([calibration.reservation_utilities[a] for a in ABILITY_ORDER])
    true_class = np.array([ABILITY_ORDER.index(p.ability) for p in population], dtype=int)
    theta = np.array([p.theta for p in population])
    gamma = np.array([p.gamma for p in population])
    u0 = np.array([p.reservation_utility for p in population])
    first_best = np.array([first_best_welfare(p.theta, p.gamma, bounds) for p in population])
    # heterogeneous outside options are centered on the class U₀
    outside = u0 + (draws.outside - 0.5) * config.outside_option_spread * first_best

    scheme: Optional[PenaltyScheme] = None
    if config.manipulation is not None:
        scheme = audited_scheme(config.manipulation, effort_channel, config.audit_reference_sd)
    menu_alpha = menu_beta = None
    if config.contract_mode == ContractMode.MENU:
        menu_alpha, menu_beta = _menu_terms(config, type_channel, population)
    kappa = effort_evidence_weight(config.effort_prior_variance, effort_channel)
    w = config.learning_weight

    means = np.full(n, prior.mean)
    variance = prior.variance
    signal_sum = np.zeros(n)
    memory = np.zeros(n)
    committed: Optional[np.ndarray] = None
    pair_beliefs: Dict[int, PairBelief] = {}
    columns: Dict[str, List[np.ndarray]] = {}

    for cycle in range(n_cycles):
        signals = theta + type_channel.sd * draws.type_noise[cycle]
        signal_sum = signal_sum + signals
        n_seen = cycle + 1

        if config.correlation_rho != 0.0:
            beliefs = _update_pair_beliefs(config, prior, type_channel, pair_beliefs, signals)
            means = np.array([b.mean for b in beliefs])
            variances = np.array([b.variance for b in beliefs])
        elif type_channel.is_perfect:
            means = signal_sum / n_seen
            variances = np.full(n, PERFECT_VARIANCE)
        else:
            means, variance = posterior_step(means, variance, signals, type_channel)
            variances = np.full(n, variance)

        # principal: classify, write contracts, decide whom to hire
        believed = map_class_indices(signal_sum / n_seen, shares, anchors, type_channel.averaged(n_seen))
        gamma_hat, u0_hat = class_gamma[believed], class_u0[believed]
        if config.contract_mode == ContractMode.DYNAMIC:
            alpha = np.maximum(means, 0.0)
            beta = -dynamic_transfer(means, gamma_hat, u0_hat, bounds)
        elif config.contract_mode == ContractMode.MENU:
            alpha, beta = menu_alpha, menu_beta
        elif config.contract_mode == ContractMode.EVIDENCE_WEIGHTED:
            alpha, beta = optimal_terms(means, gamma_hat, u0_hat, bounds, slope_weight=kappa)
        else:
            alpha, beta = optimal_terms(means, gamma_hat, u0_hat, bounds)
        margin = expected_margins(alpha, beta, means, gamma_hat, bounds)
        offered = (means >= config.hiring_bar) & (margin >= 0.0)
        beta = beta + structure_bonus(margin, rule)

        # agents: best response, then participation against the outside option
        effort = np.where(offered, np.minimum(np.maximum(alpha / gamma, bounds.lo), bounds.hi), 0.0)
        expected = np.where(offered, alpha * effort + beta - 0.5 * gamma * effort * effort, 0.0)
        manip = (
            _manipulation(scheme, offered, alpha, beta, population, config)
            if scheme is not None else _Manipulation.none(n)
        )
        expected = expected + manip.payoff

        willing = offered & (expected + memory >= outside - ACCEPT_TOLERANCE)
        if config.lifetime_ir:
            if committed is None:
                committed = willing
            accepted = offered & committed
        else:
            accepted = willing

        effort_signals = (
            np.where(accepted, effort + manip.delta_e, 0.0) + effort_channel.sd * draws.effort_noise[cycle]
        )
        if config.contract_mode == ContractMode.DYNAMIC:
            wage = dynamic_wage(alpha, effort_signals, -beta)
        else:
            wage = alpha * effort_signals + beta
        fine = np.zeros(n)
        if scheme is not None:
            fine = np.where(manip.active & (draws.detection[cycle] < manip.detection), scheme.fine, 0.0)

        output = theta * effort
        effort_cost = 0.5 * gamma * effort * effort
        agent_utility = wage - effort_cost - manip.cost - fine
        # realized-minus-expected utility feeds the agent's participation memory
        memory = np.where(accepted, (1.0 - w) * memory + w * (agent_utility - expected), memory)

        realized = {
            "effort": effort,
            "wage": wage,
            "output": output,
            "effort_cost": effort_cost,
            "agent_utility": agent_utility,
            "principal_profit": output - wage + fine,
            "welfare_contribution": output - effort_cost - manip.cost,
            "rent": alpha * effort + beta - effort_cost - u0,
            "manipulation_cost": manip.cost,
            "fine_paid": fine,
        }
        cycle_columns = {name: np.where(accepted, values, 0.0) for name, values in realized.items()}
        cycle_columns.update(
            accepted=accepted,
            manipulated=accepted & manip.active,
            map_ability=_ABILITY_VALUES[believed],
            posterior_mean=means,
            posterior_variance=variances,
        )
        for name, values in cycle_columns.items():
            columns.setdefault(name, []).append(values)

    frame = {name: np.concatenate(parts) for name, parts in columns.items()}
    frame.update(
        replication=np.full(n * n_cycles, replication, dtype=np.int64),
        cycle=np.repeat(np.arange(n_cycles, dtype=np.int64), n),
        agent_id=np.tile(np.arange(n, dtype=np.int64), n_cycles),
        structure=np.full(n * n_cycles, config.structure.value, dtype=object),
        arm=np.full(n * n_cycles, arm.value, dtype=object),
        ability=np.tile(_ABILITY_VALUES[true_class], n_cycles),
        theta=np.tile(theta, n_cycles),
        first_best_welfare=np.tile(first_best, n_cycles),
    )
    return pd.DataFrame(frame, columns=RECORD_COLUMNS)
