import math

import numpy as np
import pytest

from utils.bayes import SignalChannel, normal_posterior, population_prior
from utils.contracts import LinearContract, best_response_effort, optimal_contract
from utils.econ import DEFAULT_ANCHORS, Ability, make_profile
from utils.manipulation import (
    NO_MANIPULATION,
    ManipulationPolicy,
    PenaltyScheme,
    audited_scheme,
    deterrence_threshold,
    detection_probability,
    expected_manipulation_payoff,
    manip_best_response,
    manipulation_cost,
)

SHARES = {Ability.HIGH: 0.3, Ability.MEDIUM: 0.2, Ability.LOW: 0.5}


def grid_best_payoff(alpha, loading, scheme, upper=2.0, step=1e-3):
    axis = np.arange(0.0, upper + step / 2, step)
    d_theta, d_e = np.meshgrid(axis, axis, indexing="ij")
    gain = alpha * d_e + loading * d_theta
    cost = 0.5 * scheme.kappa_theta * d_theta ** 2 + 0.5 * scheme.kappa_e * d_e ** 2
    detection = np.minimum(1.0, scheme.detection_slope * (d_theta + d_e))
    return float((gain - cost - detection * scheme.fine).max())


class TestBestResponse:

    def setup_method(self):
        self.profile = make_profile(Ability.HIGH)

    def test_interior_example(self):
        scheme = PenaltyScheme(kappa_e=1.0, detection_slope=1.0, fine=0.2)
        policy, effort = manip_best_response(LinearContract(alpha=0.5, beta=0.0), self.profile, scheme)
        assert policy.delta_e == pytest.approx(0.3)
        assert policy.delta_theta == 0.0
        assert effort == 0.5

    def test_fine_at_threshold_deters(self):
        scheme = PenaltyScheme(detection_slope=1.0, fine=0.5)
        policy, _ = manip_best_response(LinearContract(alpha=0.5, beta=0.0), self.profile, scheme)
        assert policy == NO_MANIPULATION

    def test_no_slope_no_manipulation(self):
        policy, effort = manip_best_response(LinearContract(alpha=0.0, beta=0.1), self.profile, PenaltyScheme())
        assert policy == NO_MANIPULATION
        assert effort == 0.0

    def test_effort_unaffected_by_manipulation(self):
        contract = LinearContract(alpha=0.8, beta=-0.2)
        _, effort = manip_best_response(contract, self.profile, PenaltyScheme(detection_slope=0.1))
        assert effort == best_response_effort(contract, self.profile)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            scheme = PenaltyScheme(
                kappa_theta=rng.uniform(0.5, 2.0), kappa_e=rng.uniform(0.5, 2.0),
                detection_slope=rng.uniform(0.2, 3.0), fine=rng.uniform(0.0, 1.0),
            )
            alpha, loading = rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)
            contract = LinearContract(alpha=alpha, beta=0.0)
            policy, _ = manip_best_response(contract, self.profile, scheme, type_loading=loading)
            payoff = expected_manipulation_payoff(policy, contract, scheme, loading)
            oracle = grid_best_payoff(alpha, loading, scheme)
            assert payoff >= oracle - 1e-9
            assert payoff == pytest.approx(oracle, abs=1e-2)

    def test_non_increasing_in_fine_and_slope(self):
        contract = LinearContract(alpha=0.7, beta=0.0)
        by_fine = [
            manip_best_response(contract, self.profile, PenaltyScheme(detection_slope=0.8, fine=f), type_loading=0.4)[0]
            for f in np.linspace(0.0, 1.5, 50)
        ]
        by_slope = [
            manip_best_response(contract, self.profile, PenaltyScheme(detection_slope=lam, fine=0.4), type_loading=0.4)[0]
            for lam in np.linspace(0.0, 4.0, 50)
        ]
        for sweep in (by_fine, by_slope):
            for before, after in zip(sweep, sweep[1:]):
                assert after.delta_e <= before.delta_e + 1e-12
                assert after.delta_theta <= before.delta_theta + 1e-12


class TestDeterrence:

    def test_examples(self):
        contract = LinearContract(alpha=0.5, beta=0.0)
        assert deterrence_threshold(contract, PenaltyScheme(detection_slope=1.0)) == pytest.approx(0.5)
        assert deterrence_threshold(contract, PenaltyScheme(detection_slope=2.0)) == pytest.approx(0.25)
        assert deterrence_threshold(LinearContract(alpha=0.0, beta=0.3), PenaltyScheme()) == 0.0

    def test_undetectable_manipulation(self):
        assert deterrence_threshold(LinearContract(alpha=0.5, beta=0.0), PenaltyScheme(detection_slope=0.0)) == math.inf

    def test_threshold_is_minimal(self):
        profile = make_profile(Ability.MEDIUM)
        rng = np.random.default_rng(4)
        for _ in range(30):
            base = PenaltyScheme(kappa_e=rng.uniform(0.5, 2.0), kappa_theta=rng.uniform(0.5, 2.0),
                                 detection_slope=rng.uniform(0.3, 3.0))
            contract = LinearContract(alpha=rng.uniform(0.1, 1.0), beta=0.0)
            loading = rng.uniform(0.0, 1.0)
            threshold = deterrence_threshold(contract, base, type_loading=loading)
            above = base.model_copy(update={"fine": threshold + 1e-9})
            below = base.model_copy(update={"fine": max(threshold - 1e-3, 0.0)})
            assert not manip_best_response(contract, profile, above, type_loading=loading)[0].is_active
            assert manip_best_response(contract, profile, below, type_loading=loading)[0].is_active

    def test_no_manipulation_events_at_threshold(self):
        rng = np.random.default_rng(99)
        events = 0
        for _ in range(10_000):
            profile = make_profile(Ability.LOW, theta=rng.uniform(0.2, 0.4))
            contract = LinearContract(alpha=rng.uniform(0.0, 1.0), beta=rng.normal())
            base = PenaltyScheme(kappa_e=rng.uniform(0.5, 2.0), detection_slope=rng.uniform(0.1, 3.0))
            fine = deterrence_threshold(contract, base) * rng.uniform(1.0, 2.0)
            policy, _ = manip_best_response(contract, profile, base.model_copy(update={"fine": fine}))
            events += policy.is_active
        assert events == 0


class TestPrimitives:

    def test_cost_and_detection(self):
        scheme = PenaltyScheme(kappa_theta=2.0, kappa_e=1.0, detection_slope=2.0)
        policy = ManipulationPolicy(delta_theta=0.1, delta_e=0.2)
        assert manipulation_cost(policy, scheme) == pytest.approx(0.01 + 0.02)
        assert detection_probability(policy, scheme) == pytest.approx(0.6)
        assert detection_probability(ManipulationPolicy(delta_e=1.0), scheme) == 1.0
        assert manipulation_cost(NO_MANIPULATION, scheme) == 0.0
        assert detection_probability(NO_MANIPULATION, scheme) == 0.0

    def test_audit_scales_with_precision(self):
        scheme = PenaltyScheme(detection_slope=1.0)
        assert audited_scheme(scheme, SignalChannel.from_sd(0.1)).detection_slope == pytest.approx(1.0)
        assert audited_scheme(scheme, SignalChannel.from_sd(0.05)).detection_slope == pytest.approx(2.0)


class TestManipulationGainDecay:

    def test_gain_shrinks_as_signals_sharpen(self):
        prior = population_prior(SHARES, DEFAULT_ANCHORS)
        profile = make_profile(Ability.HIGH)
        base = PenaltyScheme(detection_slope=1.0, fine=1.0)
        shift = ManipulationPolicy(delta_e=0.1)
        gains = []
        for sigma in np.linspace(0.3, 0.02, 15):
            channel = SignalChannel.from_sd(float(sigma))
            belief = normal_posterior(prior, DEFAULT_ANCHORS[Ability.HIGH], channel)
            contract = optimal_contract(belief, channel, profile.gamma, profile.reservation_utility)
            scheme = audited_scheme(base, channel, reference_sd=0.1)
            gains.append(expected_manipulation_payoff(shift, contract, scheme))
        assert all(b < a for a, b in zip(gains, gains[1:]))
