import numpy as np
import pytest
from pydantic import ValidationError
from scipy import optimize

from utils.bayes import PERFECT_VARIANCE, GaussianBelief, SignalChannel
from utils.contracts import (
    LinearContract,
    best_response_effort,
    design_menu,
    dynamic_contract,
    dynamic_transfer,
    dynamic_wage,
    evidence_weighted_contract,
    expected_margin,
    expected_margins,
    expected_utility,
    information_rent,
    ir_binding_transfer,
    multi_agent_wage,
    optimal_contract,
    optimal_terms,
    payment_variance,
    separation_threshold,
)
from utils.econ import Ability, AgentProfile, make_profile
from utils.errors import DomainError

PERFECT = SignalChannel(noise_variance=0.0)
ASCENDING = [Ability.LOW, Ability.MEDIUM, Ability.HIGH]


def agent(gamma: float, u0: float = 0.0, theta: float = 1.0) -> AgentProfile:
    return AgentProfile(theta=theta, ability=Ability.HIGH, gamma=gamma, reservation_utility=u0)


def default_menu(sigma_theta: float, scale: float = 1.0):
    profiles = [make_profile(a) for a in ASCENDING]
    return profiles, design_menu(
        [p.theta for p in profiles], sigma_theta, scale,
        [p.gamma for p in profiles], [p.reservation_utility for p in profiles],
    )


class TestBestResponse:

    def test_examples(self):
        assert best_response_effort(LinearContract(alpha=0.5, beta=0.0), agent(1.0)) == 0.5
        assert best_response_effort(LinearContract(alpha=0.0, beta=0.3), agent(2.0)) == 0.0
        assert best_response_effort(LinearContract(alpha=2.0, beta=0.0), agent(1.0)) == 1.0

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(1)
        grid = np.linspace(0.0, 1.0, 10_001)
        for _ in range(200):
            contract = LinearContract(alpha=rng.uniform(0.0, 2.0), beta=rng.normal())
            gamma = rng.uniform(0.5, 3.0)
            utility = contract.alpha * grid + contract.beta - 0.5 * gamma * grid ** 2
            assert best_response_effort(contract, agent(gamma)) == pytest.approx(grid[np.argmax(utility)], abs=1e-4)

    def test_interior_matches_golden_section(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            gamma = rng.uniform(0.5, 3.0)
            contract = LinearContract(alpha=rng.uniform(0.01, 0.99) * gamma, beta=rng.normal())
            result = optimize.minimize_scalar(
                lambda e: -(contract.alpha * e + contract.beta - 0.5 * gamma * e * e),
                bracket=(0.0, 1.0), method="golden", tol=1e-10,
            )
            assert best_response_effort(contract, agent(gamma)) == pytest.approx(result.x, abs=1e-4)

    def test_contract_rejects_negative_slope(self):
        with pytest.raises(ValidationError):
            LinearContract(alpha=-0.1, beta=0.0)


class TestIRTransfer:

    def test_examples(self):
        assert ir_binding_transfer(1.0, agent(1.0)) == pytest.approx(-0.5)
        assert ir_binding_transfer(0.0, agent(1.0)) == 0.0
        assert ir_binding_transfer(0.6, agent(1.5, u0=0.1)) == pytest.approx(-0.02)

    def test_leaves_agent_at_reservation(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            profile = agent(rng.uniform(0.5, 3.0), u0=rng.uniform(-0.5, 0.5))
            alpha = rng.uniform(0.0, 2.0)
            contract = LinearContract(alpha=alpha, beta=ir_binding_transfer(alpha, profile))
            assert expected_utility(contract, profile) == pytest.approx(profile.reservation_utility, abs=1e-12)

    def test_monte_carlo_participation(self):
        profile = agent(1.0)
        contract = LinearContract(alpha=1.0, beta=ir_binding_transfer(1.0, profile))
        rng = np.random.default_rng(13)
        signals = 1.0 + 0.2 * rng.standard_normal(1_000_000)
        utilities = contract.alpha * signals + contract.beta - 0.5
        assert abs(utilities.mean()) < 4 * utilities.std() / np.sqrt(utilities.size)

    def test_negative_slope_raises(self):
        with pytest.raises(DomainError):
            ir_binding_transfer(-1.0, agent(1.0))


class TestOptimalContract:

    def test_perfect_signal_high_type(self):
        belief = GaussianBelief(mean=1.0, variance=PERFECT_VARIANCE)
        contract = optimal_contract(belief, PERFECT, 1.0, 0.0)
        assert contract.alpha == 1.0
        assert contract.beta == pytest.approx(-0.5)
        assert expected_margin(contract, 1.0, 1.0) == pytest.approx(0.5)

    def test_medium_belief(self):
        contract = optimal_contract(GaussianBelief(mean=0.6, variance=0.01), PERFECT, 1.5, 0.0)
        assert contract.alpha == pytest.approx(0.6)
        assert best_response_effort(contract, agent(1.5)) == pytest.approx(0.4)
        assert expected_margin(contract, 0.6, 1.5) == pytest.approx(0.12)
        assert expected_margin(contract, 0.6, 1.5) == pytest.approx(0.6 ** 2 / (2 * 1.5))

    def test_non_positive_belief_is_no_trade(self):
        contract = optimal_contract(GaussianBelief(mean=-0.2, variance=0.1), PERFECT, 1.0, 0.25)
        assert (contract.alpha, contract.beta) == (0.0, 0.25)

    def test_beats_grid_alternatives(self):
        rng = np.random.default_rng(17)
        slopes = np.linspace(0.0, 2.0, 10_001)
        for _ in range(50):
            theta_hat = rng.uniform(0.1, 1.5)
            gamma = rng.uniform(0.5, 3.0)
            u0 = rng.uniform(0.0, 0.2)
            contract = optimal_contract(GaussianBelief(mean=theta_hat, variance=0.05), PERFECT, gamma, u0)
            best = expected_margin(contract, theta_hat, gamma)
            effort = np.clip(slopes / gamma, 0.0, 1.0)
            grid_profit = theta_hat * effort - 0.5 * gamma * effort ** 2 - u0
            assert best >= grid_profit.max() - 1e-12
            assert best == pytest.approx(grid_profit.max(), abs=1e-6)

    def test_evidence_weight_scales_slope(self):
        belief = GaussianBelief(mean=0.8, variance=0.02)
        assert evidence_weighted_contract(belief, PERFECT, 0.09, 1.0, 0.0) == optimal_contract(belief, PERFECT, 1.0, 0.0)
        noisy = evidence_weighted_contract(belief, SignalChannel(noise_variance=0.09), 0.09, 1.0, 0.0)
        assert noisy.alpha == pytest.approx(0.4)
        assert expected_utility(noisy, agent(1.0)) == pytest.approx(0.0, abs=1e-12)


class TestMenu:

    def test_zero_noise_full_separation(self):
        profiles, menu = default_menu(0.0)
        assert len(menu.items) == 3
        for item in menu.items:
            assert item.lo == item.hi == item.anchor
        for k, profile in enumerate(profiles):
            assert menu.select(profile) == k

    def test_each_type_prefers_own_item(self):
        profiles, menu = default_menu(0.05, scale=1.0)
        for k, profile in enumerate(profiles):
            utilities = [expected_utility(item.contract, profile) for item in menu.items]
            others = [u for j, u in enumerate(utilities) if j != k]
            assert utilities[k] > max(others)
            assert utilities[k] >= profile.reservation_utility - 1e-12

    def test_self_selection_below_threshold(self):
        threshold = separation_threshold([0.3, 0.6, 1.0], 2.0)
        for sigma in np.linspace(0.0, threshold, 10):
            profiles, menu = default_menu(float(sigma), scale=2.0)
            assert [menu.select(p) for p in profiles] == [0, 1, 2]

    def test_intervals_truncated_at_midpoints(self):
        _, menu = default_menu(0.5, scale=2.0)
        assert menu.items[0].hi == pytest.approx(0.45)
        assert menu.items[1].lo == pytest.approx(0.45)
        assert menu.items[1].hi == pytest.approx(0.8)
        assert menu.items[2].lo == pytest.approx(0.8)

    def test_item_lookup_ties_and_gaps(self):
        _, menu = default_menu(0.5, scale=2.0)
        assert menu.item_for(menu.items[0].hi) == 0
        assert menu.item_for(menu.items[1].hi) == 1
        _, narrow = default_menu(0.05, scale=1.0)
        assert narrow.item_for(0.4) == 0
        assert narrow.item_for(0.95) == 2
        assert narrow.item_for(0.62) == 1

    def test_single_anchor_pools(self):
        menu = design_menu([0.6], 0.1, 2.0, [1.5], [0.0])
        assert len(menu.items) == 1
        profile = make_profile(Ability.MEDIUM)
        assert expected_utility(menu.items[0].contract, profile) == pytest.approx(0.0, abs=1e-12)

    def test_unsorted_anchors_raise(self):
        with pytest.raises(DomainError):
            design_menu([1.0, 0.6, 0.3], 0.05, 1.0, [1.0, 1.5, 2.5], [0.0, 0.0, 0.0])


class TestRentAndVariance:

    def test_own_type_contract_leaves_no_rent(self):
        profile = make_profile(Ability.MEDIUM)
        contract = optimal_contract(GaussianBelief(mean=0.6, variance=0.01), PERFECT, profile.gamma, 0.0)
        report = information_rent(contract, profile)
        assert report.rent == pytest.approx(0.0, abs=1e-12)
        assert report.rent == report.expected_wage - report.effort_cost - profile.reservation_utility

    def test_high_type_on_medium_contract_keeps_rent(self):
        medium = make_profile(Ability.MEDIUM)
        contract = optimal_contract(GaussianBelief(mean=0.6, variance=0.01), PERFECT, medium.gamma, 0.0)
        report = information_rent(contract, make_profile(Ability.HIGH))
        assert report.rent == pytest.approx(0.06)
        assert report.rent > 0

    def test_flat_contract(self):
        profile = agent(1.0, u0=0.2)
        assert information_rent(LinearContract(alpha=0.0, beta=0.2), profile).rent == 0.0

    def test_payment_variance_examples(self):
        assert payment_variance(LinearContract(alpha=2.0, beta=0.0), SignalChannel(noise_variance=0.25)) == 1.0
        assert payment_variance(LinearContract(alpha=0.0, beta=1.0), SignalChannel(noise_variance=0.7)) == 0.0
        assert payment_variance(LinearContract(alpha=1.5, beta=0.0), SignalChannel(noise_variance=0.1)) == pytest.approx(0.225)

    def test_halving_noise_halves_variance(self):
        contract = LinearContract(alpha=0.7, beta=0.1)
        assert payment_variance(contract, SignalChannel(noise_variance=0.05)) == \
            0.5 * payment_variance(contract, SignalChannel(noise_variance=0.1))

    @pytest.mark.parametrize("alpha,noise", [(0.5, 0.01), (1.0, 0.04), (1.5, 0.1), (0.8, 0.25), (2.0, 0.5)])
    def test_payment_variance_monte_carlo(self, alpha, noise):
        contract = LinearContract(alpha=alpha, beta=-0.3)
        rng = np.random.default_rng(int(alpha * 100 + noise * 1000))
        wages = contract.wage(0.6 + np.sqrt(noise) * rng.standard_normal(1_000_000))
        formula = payment_variance(contract, SignalChannel(noise_variance=noise))
        assert wages.var() == pytest.approx(formula, rel=0.01)


class TestDynamicAndMultiAgent:

    def test_dynamic_wage_examples(self):
        assert dynamic_wage(1.0, 1.0, 0.5) == 0.5
        assert dynamic_wage(0.7, 0.0, 0.0) == 0.0

    def test_dynamic_transfer_binds_period_ir(self):
        assert dynamic_transfer(0.6, 1.5, 0.0) == pytest.approx(0.12)
        contract = dynamic_contract(0.6, 1.5, 0.0)
        assert contract.alpha == 0.6
        assert contract.beta == pytest.approx(-0.12)
        assert expected_utility(contract, make_profile(Ability.MEDIUM)) == pytest.approx(0.0, abs=1e-12)

    def test_multi_agent_wage(self):
        assert multi_agent_wage(1.0, 0.0, 0.4, 0.9) == 0.4
        assert multi_agent_wage(0.0, 1.0, 0.3, 0.6) == 0.6

    def test_multi_agent_effort_foc(self):
        profile = agent(1.5)
        contract = LinearContract(alpha=0.9, beta=0.0)
        effort = best_response_effort(contract, profile)
        assert contract.alpha == pytest.approx(profile.gamma * effort)


class TestBatchTerms:

    def test_terms_match_scalar_contracts(self):
        channel = SignalChannel(noise_variance=0.04)
        thetas = np.array([-0.2, 0.0, 0.3, 0.6, 1.0, 1.8, 3.0])
        gammas = np.array([1.0, 1.5, 2.5, 1.5, 1.0, 1.5, 2.5])
        alpha, beta = optimal_terms(thetas, gammas, 0.05)
        kappa = 0.09 / 0.13
        weighted_alpha, weighted_beta = optimal_terms(thetas, gammas, 0.05, slope_weight=kappa)
        for i, (theta_hat, gamma_hat) in enumerate(zip(thetas, gammas)):
            belief = GaussianBelief(mean=theta_hat, variance=0.01)
            posted = optimal_contract(belief, channel, gamma_hat, 0.05)
            weighted = evidence_weighted_contract(belief, channel, 0.09, gamma_hat, 0.05)
            assert (alpha[i], beta[i]) == pytest.approx((posted.alpha, posted.beta), abs=1e-15)
            assert (weighted_alpha[i], weighted_beta[i]) == pytest.approx((weighted.alpha, weighted.beta), abs=1e-15)
            margins = expected_margins(alpha[i], beta[i], theta_hat, gamma_hat)
            assert margins == pytest.approx(expected_margin(posted, theta_hat, gamma_hat), abs=1e-15)

    def test_no_trade_below_zero(self):
        alpha, beta = optimal_terms(np.array([-0.1, 0.0]), 1.0, 0.2)
        assert list(alpha) == [0.0, 0.0]
        assert list(beta) == [0.2, 0.2]
