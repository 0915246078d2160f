"""
Conjugate Gaussian belief updates.

Covers the single-signal update over type or effort, sequential multi-period
updating, discrete type classification and the two-agent correlated-prior
update. Densities are evaluated in the log domain so the small-noise limits
stay finite.
"""
import logging
import math
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import optimize, stats
from scipy.special import logsumexp

from utils.econ import ABILITY_ORDER, Ability
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# Variance assigned to a belief pinned by a perfect signal.
PERFECT_VARIANCE = 1e-300


class GaussianBelief(BaseModel):
    """Normal belief N(mean, variance) over θ or e."""
    model_config = ConfigDict(frozen=True)

    mean: float = Field(..., description="μ")
    variance: float = Field(..., gt=0.0, description="σ²")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


class SignalChannel(BaseModel):
    """Additive Gaussian noise channel s = x + ε, ε ~ N(0, noise_variance)."""
    model_config = ConfigDict(frozen=True)

    noise_variance: float = Field(..., ge=0.0, description="σ_θ² or σ_e²")

    @classmethod
    def from_sd(cls, sd: float) -> "SignalChannel":
        return cls(noise_variance=sd * sd)

    @property
    def is_perfect(self) -> bool:
        return self.noise_variance == 0.0

    @property
    def sd(self) -> float:
        return math.sqrt(self.noise_variance)

    def averaged(self, n_signals: int) -> "SignalChannel":
        """Channel of the mean of n independent signals (variance σ²/n)."""
        return SignalChannel(noise_variance=self.noise_variance / max(n_signals, 1))


class TypePosterior(BaseModel):
    """Posterior class probabilities P(class | s)."""
    model_config = ConfigDict(frozen=True)

    probabilities: Dict[Ability, float]

    @field_validator("probabilities")
    @classmethod
    def validate_distribution(cls, v):
        if any(p < 0.0 or p > 1.0 for p in v.values()):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(v.values()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {sum(v.values())}")
        return v

    def map_class(self) -> Ability:
        """Most probable class; exact ties go to the lower type."""
        best = None
        for ability in reversed(ABILITY_ORDER):
            p = self.probabilities.get(ability, 0.0)
            if best is None or p > self.probabilities.get(best, 0.0):
                best = ability
        return best


class PairBelief(BaseModel):
    """Joint normal belief over the types of two agents."""
    model_config = ConfigDict(frozen=True)

    means: Tuple[float, float]
    covariance: Tuple[Tuple[float, float], Tuple[float, float]]

    @model_validator(mode="after")
    def check_covariance(self):
        (a, b), (c, d) = self.covariance
        if a <= 0 or d <= 0:
            raise ValueError("covariance diagonal must be positive")
        if not math.isclose(b, c, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("covariance must be symmetric")
        if abs(b) >= math.sqrt(a * d):
            raise ValueError("correlation must lie strictly inside (-1, 1)")
        return self

    @classmethod
    def from_marginals(cls, first: GaussianBelief, second: GaussianBelief, rho: float) -> "PairBelief":
        cov = rho * first.sd * second.sd
        return cls(
            means=(first.mean, second.mean),
            covariance=((first.variance, cov), (cov, second.variance)),
        )

    @property
    def rho(self) -> float:
        (a, b), (_, d) = self.covariance
        return b / math.sqrt(a * d)

    def marginal(self, index: int) -> GaussianBelief:
        return GaussianBelief(mean=self.means[index], variance=self.covariance[index][index])

    def swapped(self) -> "PairBelief":
        (a, b), (c, d) = self.covariance
        return PairBelief(means=(self.means[1], self.means[0]), covariance=((d, c), (b, a)))


def normal_posterior(prior: GaussianBelief, signal: float, channel: SignalChannel) -> GaussianBelief:
    """
    Update a normal prior with one noisy observation s = x + ε.

    Args:
        prior: Prior belief
        signal: Observed signal
        channel: Noise channel of the signal

    Returns:
        Posterior belief; a perfect channel pins the belief at the signal

    Raises:
        DomainError: If the prior variance is not positive
    """
    if prior.variance <= 0:
        raise DomainError(f"prior variance must be positive, got {prior.variance}")
    if channel.is_perfect:
        return GaussianBelief(mean=signal, variance=PERFECT_VARIANCE)

    precision = 1.0 / prior.variance + 1.0 / channel.noise_variance
    variance = 1.0 / precision
    mean = variance * (prior.mean / prior.variance + signal / channel.noise_variance)
    return GaussianBelief(mean=mean, variance=variance)


def sequential_posterior(prior: GaussianBelief, signals: Sequence[float],
                         channel: SignalChannel) -> GaussianBelief:
    """
    Fold normal_posterior over a sequence of signals from the same channel.

    An empty sequence returns the prior unchanged.
    """
    if len(signals) == 0:
        return prior
    if channel.is_perfect:
        return normal_posterior(prior, float(np.mean(signals)), channel)

    belief = prior
    for s in signals:
        belief = normal_posterior(belief, s, channel)
    return belief


def classify_type(signal: float, priors: Dict[Ability, float], anchors: Dict[Ability, float],
                  channel: SignalChannel) -> TypePosterior:
    """
    Posterior probabilities of each ability class given a type signal.

    P(class | s) ∝ N(s; θ_class, σ²)·prior(class), normalized in the log domain.
    A perfect channel puts all mass on the nearest anchor.

    Args:
        signal: Observed type signal
        priors: Class prior probabilities (sum to 1)
        anchors: Class anchor types θ
        channel: Type-signal channel

    Returns:
        TypePosterior over the classes present in ``anchors``
    """
    classes = [a for a in ABILITY_ORDER if a in anchors]
    if abs(sum(priors.get(a, 0.0) for a in classes) - 1.0) > 1e-9:
        raise DomainError("class priors must sum to 1")

    if channel.is_perfect:
        # nearest anchor with positive prior; iterate low to high so ties go to the lower type
        candidates = [a for a in reversed(classes) if priors.get(a, 0.0) > 0]
        nearest = min(candidates, key=lambda a: abs(signal - anchors[a]))
        return TypePosterior(probabilities={a: float(a == nearest) for a in classes})

    theta = np.array([anchors[a] for a in classes])
    prior = np.array([priors.get(a, 0.0) for a in classes])
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    log_like = -0.5 * math.log(2.0 * math.pi * channel.noise_variance) - (signal - theta) ** 2 / (2.0 * channel.noise_variance)
    log_joint = log_prior + log_like
    log_post = log_joint - logsumexp(log_joint)
    probs = np.exp(log_post)
    probs = probs / probs.sum()
    return TypePosterior(probabilities={a: float(p) for a, p in zip(classes, probs)})


def posterior_step(means: np.ndarray, variance, signals: np.ndarray,
                   channel: SignalChannel) -> Tuple[np.ndarray, np.ndarray]:
    """
    normal_posterior applied elementwise to a batch of beliefs.

    Carrying (means, variance) forward one signal at a time reproduces
    sequential_posterior for each agent. A perfect channel is not handled here.
    """
    precision = 1.0 / variance + 1.0 / channel.noise_variance
    new_variance = 1.0 / precision
    new_means = new_variance * (means / variance + signals / channel.noise_variance)
    return new_means, new_variance


def map_class_indices(signals: np.ndarray, priors: Dict[Ability, float], anchors: Dict[Ability, float],
                      channel: SignalChannel) -> np.ndarray:
    """
    classify_type(...).map_class() for a batch of signals.

    Returns:
        Position in ABILITY_ORDER of each signal's MAP class, with the same
        tie rule (lower type) and perfect-channel rule (nearest anchor)
    """
    if abs(sum(priors.get(a, 0.0) for a in ABILITY_ORDER) - 1.0) > 1e-9:
        raise DomainError("class priors must sum to 1")
    signals = np.asarray(signals, dtype=float)
    # columns run low to high so the first maximum is the lower type
    ascending = list(reversed(ABILITY_ORDER))
    theta = np.array([anchors[a] for a in ascending])
    prior = np.array([priors.get(a, 0.0) for a in ascending])
    gap = signals[:, None] - theta[None, :]

    if channel.is_perfect:
        distance = np.where(prior[None, :] > 0, np.abs(gap), np.inf)
        pick = np.argmin(distance, axis=1)
    else:
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior)
        pick = np.argmax(log_prior[None, :] - gap ** 2 / (2.0 * channel.noise_variance), axis=1)
    return len(ABILITY_ORDER) - 1 - pick


def pair_posterior(prior: PairBelief, signal_for_agent_1: float, channel: SignalChannel) -> PairBelief:
    """
    Condition a two-agent joint normal belief on agent 1's type signal.

    Observing s₁ = θ₁ + ε moves both means through the prior covariance;
    agent 2's variance shrinks only when the prior correlation is non-zero.

    Raises:
        DomainError: On a perfect channel or a singular prior covariance
    """
    if channel.is_perfect:
        raise DomainError("pair_posterior needs a noisy channel")
    cov = np.array(prior.covariance, dtype=float)
    if np.linalg.det(cov) <= 0:
        raise DomainError("prior covariance is singular")

    mean = np.array(prior.means, dtype=float)
    gain = cov[:, 0] / (cov[0, 0] + channel.noise_variance)
    new_mean = mean + gain * (signal_for_agent_1 - mean[0])
    new_cov = cov - np.outer(gain, cov[0, :])
    # keep exact symmetry
    off = 0.5 * (new_cov[0, 1] + new_cov[1, 0])
    return PairBelief(
        means=(float(new_mean[0]), float(new_mean[1])),
        covariance=((float(new_cov[0, 0]), float(off)), (float(off), float(new_cov[1, 1]))),
    )


def population_prior(shares: Dict[Ability, float], anchors: Dict[Ability, float],
                     jitter: float = 0.0) -> GaussianBelief:
    """
    Normal prior over θ matching the population's first two moments.

    Uniform jitter of half-width ``jitter`` adds jitter²/3 to the variance.
    """
    p = np.array([shares[a] for a in ABILITY_ORDER])
    theta = np.array([anchors[a] for a in ABILITY_ORDER])
    mean = float(p @ theta)
    variance = float(p @ (theta - mean) ** 2) + jitter * jitter / 3.0
    return GaussianBelief(mean=mean, variance=max(variance, 1e-12))


def map_decision_regions(anchors: Dict[Ability, float], priors: Dict[Ability, float],
                         noise_variance: float) -> Dict[Ability, Optional[Tuple[float, float]]]:
    """
    Signal intervals on which each class is the MAP classification.

    The log posterior is linear in s after dropping the common s² term, so each
    region is the interval where that line lies on the upper envelope.

    Returns:
        Mapping class -> (lo, hi), or None when the class never wins
    """
    if noise_variance <= 0:
        raise DomainError("decision regions need a noisy channel")
    classes = sorted((a for a in anchors if priors.get(a, 0.0) > 0), key=lambda a: anchors[a])
    regions: Dict[Ability, Optional[Tuple[float, float]]] = {a: None for a in anchors}
    for k, cls_k in enumerate(classes):
        lo, hi = -math.inf, math.inf
        for j, cls_j in enumerate(classes):
            if j == k:
                continue
            t_j, t_k = anchors[cls_j], anchors[cls_k]
            crossing = 0.5 * (t_j + t_k) + noise_variance * (
                math.log(priors[cls_j]) - math.log(priors[cls_k])
            ) / (t_k - t_j)
            if j < k:
                lo = max(lo, crossing)
            else:
                hi = min(hi, crossing)
        if lo < hi:
            regions[cls_k] = (lo, hi)
    return regions


def map_accuracy(anchors: Dict[Ability, float], priors: Dict[Ability, float],
                 noise_variance: float) -> float:
    """Probability that the MAP class equals the true class."""
    if noise_variance <= 0:
        return 1.0
    sd = math.sqrt(noise_variance)
    accuracy = 0.0
    for ability, region in map_decision_regions(anchors, priors, noise_variance).items():
        if region is None:
            continue
        lo, hi = region
        theta = anchors[ability]
        accuracy += priors[ability] * (stats.norm.cdf((hi - theta) / sd) - stats.norm.cdf((lo - theta) / sd))
    return float(accuracy)


def calibrate_control_sigma(anchors: Dict[Ability, float], priors: Dict[Ability, float],
                            target_accuracy: float) -> float:
    """
    Noise standard deviation at which MAP classification accuracy equals the target.

    Args:
        anchors: Class anchors
        priors: Class priors (population shares)
        target_accuracy: Desired accuracy in (max prior, 1]

    Returns:
        Calibrated σ (0.0 for a target of 1)

    Raises:
        DomainError: If the target is not above the best blind guess
    """
    key = (
        tuple(anchors[a] for a in ABILITY_ORDER),
        tuple(priors[a] for a in ABILITY_ORDER),
        float(target_accuracy),
    )
    return _calibrate_cached(*key)


@lru_cache(maxsize=64)
def _calibrate_cached(anchor_values: Tuple[float, ...], prior_values: Tuple[float, ...],
                      target: float) -> float:
    if target >= 1.0:
        return 0.0
    if target <= max(prior_values):
        raise DomainError(
            f"control accuracy {target} is not above the largest class share {max(prior_values)}"
        )
    anchors = dict(zip(ABILITY_ORDER, anchor_values))
    priors = dict(zip(ABILITY_ORDER, prior_values))

    def gap(sd: float) -> float:
        return map_accuracy(anchors, priors, sd * sd) - target

    lo, hi = 1e-9, 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e4:
            raise DomainError(f"could not bracket control accuracy {target}")
    sigma = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-12)
    logger.debug(f"Calibrated control sigma {sigma:.6f} for accuracy {target}")
    return float(sigma)


def effort_evidence_weight(effort_prior_variance: float, channel_e: SignalChannel) -> float:
    """
    Weight κ = τ²/(τ²+σ_e²) of the effort signal in the posterior effort estimate.

    With a normal prior of variance τ² on effort, E[e | s_e] moves κ per unit of
    signal. A perfect channel gives κ = 1.
    """
    if effort_prior_variance <= 0:
        raise DomainError(f"effort prior variance must be positive, got {effort_prior_variance}")
    return effort_prior_variance / (effort_prior_variance + channel_e.noise_variance)
