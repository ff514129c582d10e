import math

import numpy as np
import pytest
from scipy import stats

from liqlab import theory
from liqlab.stochastic import RngStream


class TestLinearSpreadTheory:
    def test_symmetric_rates_give_zero_alpha_c(self):
        assert theory.linear_spread_theory(1.0, 1.0, 0.0).alpha_c == 0.0

    def test_stationary_point(self):
        th = theory.linear_spread_theory(0.5, 1.0, 0.25)
        assert th.alpha_c == pytest.approx(0.5)
        assert th.p_open == pytest.approx(2.0 / 3.0, rel=1e-12)
        assert th.drift == 0.0
        assert th.diffusion == pytest.approx(1.0 + 0.5 / 0.75 ** 3, rel=1e-12)
        assert th.regime == theory.STATIONARY

    def test_growth_point(self):
        th = theory.linear_spread_theory(0.5, 1.0, 0.75)
        assert th.drift == pytest.approx(1.0, rel=1e-12)
        assert th.regime == theory.LINEAR_GROWTH

    def test_explosive_signalled(self):
        th = theory.linear_spread_theory(0.5, 1.0, 1.0)
        assert th.regime == theory.EXPLOSIVE
        assert th.drift is None and th.diffusion is None

    def test_p_open_clipped_and_continuous(self):
        assert theory.linear_spread_theory(0.5, 1.0, 0.6).p_open == 1.0
        near = theory.linear_spread_theory(0.5, 1.0, 0.4999)
        assert near.p_open == pytest.approx(1.0, abs=1e-3)


class TestFirstPassage:
    def test_zero_drift_matches_reflection_principle(self):
        for barrier, horizon, diff in [(1.0, 100.0, 1.0), (5.0, 30.0, 2.0), (40.0, 400.0, 5.0)]:
            via_quad = theory.first_passage_prob(barrier, horizon, 0.0, diff)
            closed = theory.reflection_principle_prob(barrier, horizon, diff)
            assert via_quad == pytest.approx(closed, rel=1e-6)

    def test_vanishes_at_zero_horizon(self):
        assert theory.first_passage_prob(1.0, 0.0, 0.5, 1.0) == 0.0
        assert theory.first_passage_prob(1.0, 1e-12, 0.5, 1.0) < 1e-12

    def test_monte_carlo_brownian_oracle(self):
        # barrier hitting of driftless Brownian motion, 1e5 paths; the
        # Brownian-bridge crossing probability between grid points removes
        # the discretisation bias of the sampled running max
        barrier, horizon, diff = 1.0, 100.0, 1.0
        gen = RngStream(41, 0).generator()
        n_paths, n_steps = 100_000, 250
        dt = horizon / n_steps
        probs = np.empty(n_paths)
        batch = 5000
        for start in range(0, n_paths, batch):
            steps = gen.normal(0.0, math.sqrt(diff * dt), size=(batch, n_steps))
            paths = np.concatenate([np.zeros((batch, 1)), np.cumsum(steps, axis=1)], axis=1)
            gap_l = np.maximum(barrier - paths[:, :-1], 0.0)
            gap_r = np.maximum(barrier - paths[:, 1:], 0.0)
            no_cross = 1.0 - np.exp(-2.0 * gap_l * gap_r / (diff * dt))
            no_cross[(gap_l == 0.0) | (gap_r == 0.0)] = 0.0
            probs[start : start + batch] = 1.0 - np.prod(no_cross, axis=1)
        p_mc = float(probs.mean())
        se = float(probs.std(ddof=1)) / math.sqrt(n_paths)
        p = theory.first_passage_prob(barrier, horizon, 0.0, diff)
        assert abs(p_mc - p) < 3.0 * se

    def test_drift_sign_flag(self):
        away = theory.first_passage_prob(5.0, 50.0, 0.5, 1.0, drift_sign=1.0)
        toward = theory.first_passage_prob(5.0, 50.0, 0.5, 1.0, drift_sign=-1.0)
        assert toward > away


class TestSusceptibility:
    def test_unreachable_barrier_gives_zero(self):
        assert theory.chi_quadrature(500.0, 10.0, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_positive(self):
        for alpha in (0.3, 0.5, 0.62):
            assert theory.chi_theory(alpha, 200.0, 20.0, 0.5, 1.0) >= 0.0

    def test_scaling_identity_effective_constants(self):
        # chi(alpha, T, N) == T^2 G(N T^-1/2, T^1/2 (alpha - alpha_c)) exactly
        # when G carries the same drift slope and diffusion
        for alpha, horizon, barrier in [(0.6, 400.0, 40.0), (0.45, 150.0, 12.0), (0.7, 60.0, 25.0)]:
            direct = theory.chi_theory(alpha, horizon, barrier, 0.5, 1.0)
            scaled = theory.chi_scaling_form(alpha, horizon, barrier, 0.5, 1.0, at_criticality=False)
            assert scaled == pytest.approx(direct, rel=1e-6)

    def test_scaling_identity_critical_constants(self):
        # the published critical form: same identity with D(alpha_c), Lambda
        alpha, horizon, barrier = 0.6, 400.0, 40.0
        alpha_c = 0.5
        lam_slope = 0.5 / (1 - alpha_c) ** 2
        d_c = 1.0 + 0.5 / (1 - alpha_c) ** 3
        direct = theory.chi_quadrature(barrier, horizon, lam_slope * (alpha - alpha_c), d_c)
        scaled = theory.chi_scaling_form(alpha, horizon, barrier, 0.5, 1.0, at_criticality=True)
        assert scaled == pytest.approx(direct, rel=1e-6)

    def test_identity_on_grid(self):
        for da in (-0.1, 0.0, 0.1, 0.2, 0.3):
            for horizon in (50.0, 200.0, 800.0):
                for barrier in (5.0, 20.0, 80.0):
                    alpha = 0.5 + da
                    direct = theory.chi_theory(alpha, horizon, barrier, 0.5, 1.0)
                    scaled = theory.chi_scaling_form(
                        alpha, horizon, barrier, 0.5, 1.0, at_criticality=False
                    )
                    assert scaled == pytest.approx(direct, rel=1e-6, abs=1e-12)

    def test_quadrature_convergence(self):
        # halving the tolerance leaves the value unchanged at 1e-8 relative
        from scipy import integrate

        val = theory.chi_theory(0.6, 400.0, 40.0, 0.5, 1.0)
        th = theory.linear_spread_theory(0.5, 1.0, 0.6)
        tight = integrate.quad(
            lambda u: (400.0 - u) ** 2
            * theory._fpt_density(u, 40.0, th.drift, th.diffusion, 1.0),
            0.0,
            400.0,
            epsabs=1e-13,
            epsrel=1e-11,
            limit=800,
        )[0] - integrate.quad(
            lambda u: (400.0 - u)
            * theory._fpt_density(u, 40.0, th.drift, th.diffusion, 1.0),
            0.0,
            400.0,
            epsabs=1e-13,
            epsrel=1e-11,
            limit=800,
        )[0] ** 2
        assert val == pytest.approx(tight, rel=1e-8)


class TestHawkesCumulants:
    def test_mean_and_variance(self):
        mean, var, _ = theory.hawkes_cumulants(1.0, 0.5, 1.0)
        assert mean == pytest.approx(2.0, rel=1e-12)
        assert var == pytest.approx(2.0, rel=1e-12)

    def test_laplace_normalisation(self):
        _, _, laplace = theory.hawkes_cumulants(1.0, 0.5, 1.0)
        assert laplace(0.0) == 1.0

    def test_laplace_slope_is_minus_mean(self):
        mean, _, laplace = theory.hawkes_cumulants(1.0, 0.5, 1.0)
        h = 1e-5
        slope = -(math.log(laplace(h)) - math.log(laplace(0.0))) / h
        assert slope == pytest.approx(mean, rel=1e-4)

    def test_laplace_log_convex(self):
        _, _, laplace = theory.hawkes_cumulants(0.7, 0.3, 2.0)
        us = np.linspace(0.0, 3.0, 13)
        logs = np.array([math.log(laplace(u)) for u in us])
        assert np.all(np.diff(logs, 2) > -1e-10)

    def test_rejects_supercritical(self):
        with pytest.raises(ValueError):
            theory.hawkes_cumulants(1.0, 1.0, 1.0)


class TestMetastability:
    def test_stationary_points_and_barrier(self):
        th = theory.metastability_theory(1.0, 0.0, 1.0, 0.2)
        # exact roots of (1-alpha) X - lambda0 - eps X^2
        assert th.x_eq == pytest.approx((1 - math.sqrt(0.2)) / 0.4, rel=1e-12)
        assert th.x_star == pytest.approx((1 + math.sqrt(0.2)) / 0.4, rel=1e-12)
        assert th.x_star_asymptotic == pytest.approx(5.0)
        assert th.barrier_asymptotic == pytest.approx(25.0 / 6.0, rel=1e-12)
        assert th.barrier > 0.0

    def test_asymptotic_log_time_alpha_zero(self):
        got = theory.log_escape_time_asymptotic(1.0, 0.0, 1.0, 0.2)
        assert got == pytest.approx((math.log(5.0) - 2.0) / 0.2, rel=1e-12)
        assert got == pytest.approx(-1.9528, abs=1e-4)

    def test_alpha_positive_branch(self):
        got = theory.log_escape_time_asymptotic(1.0, 0.5, 1.0, 0.05)
        expected = -2.0 * ((0.5 - math.log(0.5)) / 0.05 + 1.0 / 0.25 * math.log(20.0)) - 0.5 * math.log(20.0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_kramers_time_diverges_as_eps_shrinks(self):
        times = [theory.metastability_theory(1.0, 0.3, 1.0, e).kramers_time for e in (0.1, 0.05, 0.025)]
        assert times[0] < times[1] < times[2]
        assert times[2] > 100 * times[0]

    def test_no_barrier_signalled(self):
        with pytest.raises(ValueError, match="no barrier"):
            theory.metastability_theory(1.0, 0.0, 1.0, 0.3)


class TestPriceFeedbackTheory:
    def test_drift_vanishes_at_threshold(self):
        th = theory.price_feedback_theory(0.5, 1.0, 0.5)
        assert th.drift == 0.0

    def test_drift_value(self):
        th = theory.price_feedback_theory(0.5, 1.0, 1.0)
        assert th.drift == pytest.approx(1.0, rel=1e-12)
        assert th.regime == theory.LINEAR_GROWTH

    def test_explosive_at_two(self):
        assert theory.price_feedback_theory(0.5, 1.0, 2.0).regime == theory.EXPLOSIVE
        near = theory.price_feedback_theory(0.5, 1.0, 1.999)
        assert near.drift > 500.0  # pole at the explosive boundary

    def test_diffusivity_stationary(self):
        th = theory.price_feedback_theory(0.5, 1.0, 0.25)
        assert th.price_diffusivity == pytest.approx((th.p_open + 0.5) / 1.75, rel=1e-12)
