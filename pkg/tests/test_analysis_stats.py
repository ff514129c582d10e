import math

import numpy as np
import pytest
from scipy import integrate, stats

from liqlab.analysis import (
    empirical_sf,
    fit_drift_diffusion,
    fit_geometric,
    fit_tail_exponent,
    step_function_at,
    susceptibility,
)
from liqlab.stochastic import RngStream


class TestEmpiricalSf:
    def test_direct_count(self):
        cc = empirical_sf([2, 2, 3])
        assert np.array_equal(cc.values, [2, 3])
        assert np.allclose(cc.sf, [1.0, 1.0 / 3.0])
        assert cc.prob_at_least(2) == 1.0
        assert cc.prob_at_least(3) == pytest.approx(1.0 / 3.0)
        assert cc.prob_at_least(4) == 0.0
        assert cc.prob_at_least(0) == 1.0

    def test_weights_equal_duplication(self):
        samples = [1.0, 2.0, 3.0, 4.0]
        doubled = empirical_sf(samples, weights=[2.0, 2.0, 1.0, 1.0])
        duplicated = empirical_sf([1.0, 1.0, 2.0, 2.0, 3.0, 4.0])
        assert np.array_equal(doubled.values, duplicated.values)
        assert np.array_equal(doubled.sf, duplicated.sf)

    def test_geometric_slope(self, rng):
        draws = rng.geometric(0.5, size=100_000)  # P[X >= n] = 0.5^(n-1)
        cc = empirical_sf(draws)
        keep = cc.sf > 1e-3
        slope = np.polyfit(cc.values[keep], np.log(cc.sf[keep]), 1)[0]
        assert slope == pytest.approx(math.log(0.5), abs=0.02)

    def test_rejections(self):
        with pytest.raises(ValueError):
            empirical_sf([])
        with pytest.raises(ValueError):
            empirical_sf([1.0, 2.0], weights=[0.0, 0.0])
        with pytest.raises(ValueError):
            empirical_sf([1.0, 2.0], weights=[1.0, -1.0])


class TestFitGeometric:
    def test_exact_geometric_recovery(self, rng):
        draws = rng.geometric(0.7, size=100_000) + 1  # support {2, 3, ...}, ratio 0.3
        r = fit_geometric(empirical_sf(draws))
        assert r == pytest.approx(0.3, abs=0.01)

    def test_degenerate_tail_rejected(self):
        cc = empirical_sf([1, 1, 2, 2, 3, 5, 5, 5])
        with pytest.raises(ValueError):
            fit_geometric(cc, min_support=5)

    def test_needs_three_support_points(self):
        with pytest.raises(ValueError):
            fit_geometric(empirical_sf([2, 3, 2, 3]))


class TestTailFit:
    def test_pareto_recovery(self, rng):
        x = (1.0 - rng.random(100_000)) ** (-1.0 / 1.5)
        fit = fit_tail_exponent(empirical_sf(x))
        assert fit.kappa == pytest.approx(1.5, abs=0.1)
        assert fit.power_law_ok
        assert fit.hill_kappa == pytest.approx(1.5, abs=0.25)

    def test_exponential_flagged(self, rng):
        fit = fit_tail_exponent(empirical_sf(rng.exponential(1.0, 100_000)))
        assert not fit.power_law_ok
        assert abs(fit.curvature) > 0.5

    def test_insufficient_tail(self, rng):
        with pytest.raises(ValueError, match="insufficient tail"):
            fit_tail_exponent(empirical_sf(rng.random(60)))


class TestSusceptibility:
    def test_all_censored_is_zero(self):
        assert susceptibility([None, None, None], horizon=5.0) == 0.0

    def test_exponential_unbounded_horizon(self, rng):
        taus = rng.exponential(1.0, size=10_000)
        chi = susceptibility(taus, horizon=1e9)
        assert chi == pytest.approx(1.0, abs=0.05)

    def test_capped_exponential_matches_quadrature(self, rng):
        # Var[min(Exp(1), 1)] by quadrature of the capped density
        m1 = integrate.quad(lambda t: t * math.exp(-t), 0.0, 1.0)[0] + math.exp(-1.0)
        m2 = integrate.quad(lambda t: t * t * math.exp(-t), 0.0, 1.0)[0] + math.exp(-1.0)
        var_true = m2 - m1 * m1
        n = 40_000
        taus = rng.exponential(1.0, size=n)
        chi = susceptibility(taus, horizon=1.0)
        capped = np.minimum(taus, 1.0)
        se = math.sqrt((np.mean((capped - capped.mean()) ** 4) - var_true**2) / n)
        assert abs(chi - var_true) < 3.0 * se

    def test_needs_two_replicas(self):
        with pytest.raises(ValueError):
            susceptibility([1.0], horizon=2.0)


class TestDriftDiffusion:
    def test_brownian_recovery(self):
        gen = RngStream(33, 0).generator()
        drift, diff, w = 0.7, 2.5, 4.0
        inc1 = gen.normal(drift * w, math.sqrt(diff * w), size=20_000)
        pairs = [(w, inc1)]
        for k in (2, 4):
            pairs.append((w * k, inc1[: 20_000 // k * k].reshape(-1, k).sum(axis=1)))
        fit = fit_drift_diffusion(pairs)
        assert fit.drift == pytest.approx(drift, rel=0.02)
        assert fit.diffusion == pytest.approx(diff, rel=0.05)

    def test_needs_two_scales(self):
        with pytest.raises(ValueError):
            fit_drift_diffusion([(1.0, np.ones(10))])


class TestStepFunction:
    def test_lookup(self):
        times = np.array([1.0, 2.0, 5.0])
        values = np.array([10.0, 20.0, 30.0])
        at = np.array([0.5, 1.0, 1.5, 2.0, 4.9, 5.0, 9.0])
        got = step_function_at(times, values, at, initial=1.0)
        assert np.array_equal(got, [1.0, 10.0, 10.0, 20.0, 20.0, 30.0, 30.0])
