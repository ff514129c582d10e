import math
from dataclasses import replace

import numpy as np
import pytest

from liqlab.spread import EscapeCensus, SpreadModelParams, escape_time_census, run_spread
from liqlab.theory import linear_spread_theory, price_feedback_theory


def params(**kw) -> SpreadModelParams:
    defaults = dict(
        variant="linear",
        lambda0_plus=0.5,
        lambda0_minus=1.0,
        alpha=0.25,
        beta=1.0,
        horizon=1000.0,
        seed=7,
    )
    defaults.update(kw)
    return SpreadModelParams(**defaults)


class TestParams:
    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            params(variant="cubic")

    def test_eps_only_for_quadratic(self):
        with pytest.raises(ValueError, match="eps"):
            params(variant="linear", eps=0.1)

    def test_spread_cap_floor(self):
        with pytest.raises(ValueError, match="spread_cap"):
            params(spread_cap=1)


class TestPathStructure:
    def test_unit_steps_and_floor(self):
        path = run_spread(params(alpha=0.4, horizon=3000.0), record_path=True)
        spreads = np.concatenate([[1], path.spreads])
        steps = np.diff(spreads)
        assert set(np.unique(steps)) <= {-1, 1}
        assert spreads.min() == 1
        # at the floor the next move can only open the spread
        at_floor = np.nonzero(spreads[:-1] == 1)[0]
        assert np.all(steps[at_floor] == 1)

    def test_occupancy_accounts_all_time(self):
        path = run_spread(params(horizon=500.0))
        assert path.occupancy.sum() == pytest.approx(path.final_time, rel=1e-12)

    def test_determinism_and_stream_independence(self):
        a = run_spread(params(), record_path=True)
        b = run_spread(params(), record_path=True)
        c = run_spread(params(stream_id=1), record_path=True)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.spreads, b.spreads)
        assert not np.array_equal(a.times, c.times)

    def test_budget_abort_flag(self):
        path = run_spread(params(max_events=50))
        assert path.aborted and path.n_events == 50 and path.escape_time is None

    def test_escape_at_spread_cap(self):
        path = run_spread(params(variant="linear", alpha=0.9, spread_cap=30, horizon=1e6), record_path=True)
        assert path.escape_time is not None
        assert path.spreads[-1] == 30


class TestLinearModel:
    def test_open_probability(self):
        th = linear_spread_theory(0.5, 1.0, 0.25)
        path = run_spread(params(alpha=0.25, horizon=2e5, seed=11))
        p_open = 1.0 - path.occupancy[1] / path.occupancy.sum()
        assert p_open == pytest.approx(th.p_open, abs=0.02)

    def test_alpha_zero_birth_death_ratio(self):
        # stationary occupancy of the gated birth-death chain: ratio 1/2
        path = run_spread(params(alpha=0.0, horizon=2e5, seed=12))
        occ = path.occupancy
        ratios = occ[2:6] / occ[1:5]
        assert np.allclose(ratios, 0.5, atol=0.03)

    def test_subcritical_opening_rate(self):
        # long-run opening rate lambda0+/(1 - alpha)
        path = run_spread(params(alpha=0.25, horizon=2e5, seed=13))
        rate = path.n_open / path.final_time
        assert rate == pytest.approx(0.5 / 0.75, rel=0.02)


class TestStabilizedModel:
    def test_stationary_below_one(self):
        # alpha in the window where the plain linear model already grows
        path = run_spread(
            params(variant="stabilized", alpha=0.9, horizon=5e4, spread_cap=500, seed=14),
            record_path=True,
        )
        assert path.escape_time is None
        # time-average spread over the two halves agrees: no linear growth
        half = path.final_time / 2
        occ_t = path.times
        first = path.spreads[occ_t < half].mean()
        second = path.spreads[occ_t >= half].mean()
        assert second < 2.0 * first + 2.0

    def test_escapes_above_one(self):
        path = run_spread(
            params(variant="stabilized", alpha=1.4, horizon=1e6, spread_cap=400, seed=15)
        )
        assert path.escape_time is not None


class TestQuadraticModel:
    def test_census_requires_quadratic(self):
        with pytest.raises(ValueError, match="quadratic"):
            escape_time_census(params(variant="linear"), replicas=2)

    def test_census_threshold_and_censoring(self):
        p = params(variant="quadratic", alpha=0.0, lambda0_plus=1.0, lambda0_minus=0.5, eps=0.2, horizon=1e9, seed=16)
        census = escape_time_census(p, replicas=100)
        assert isinstance(census, EscapeCensus)
        assert census.x_threshold == pytest.approx(5.0 * (1.0 - 0.0) / 0.2)
        assert census.escape_times.size + census.n_censored == 100
        assert np.all(census.escape_times <= census.censor_time)
        assert census.ci_low < census.mean < census.ci_high


class TestPriceFeedbackModel:
    def test_stationary_matches_theory(self):
        th = price_feedback_theory(0.5, 1.0, 0.25)
        p = params(variant="price_feedback", alpha=0.25, horizon=1e5, seed=17)
        path = run_spread(p)
        p_open = 1.0 - path.occupancy[1] / path.occupancy.sum()
        d_hat = path.realized_price_var / path.final_time
        assert p_open == pytest.approx(th.p_open, abs=0.02)
        assert d_hat == pytest.approx(th.price_diffusivity, rel=0.08)

    def test_mid_is_balanced(self):
        p = params(variant="price_feedback", alpha=0.25, horizon=2e4, seed=18)
        path = run_spread(p, record_path=True)
        # sides are fair coins: terminal mid is a mean-zero diffusion
        assert abs(path.mids[-1]) < 4.0 * math.sqrt(path.realized_price_var)

    def test_explosive_burst(self):
        p = params(variant="price_feedback", alpha=2.5, horizon=1e5, spread_cap=400, seed=19)
        path = run_spread(p, record_path=True)
        assert path.escape_time is not None
        frac_late = np.mean(path.times > 0.9 * path.escape_time)
        assert frac_late > 0.15  # terminal blow-up concentrates the events
