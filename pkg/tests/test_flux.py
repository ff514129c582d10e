import math

import numpy as np
import pytest

from liqlab.analysis import (
    ASK,
    BID,
    CANCEL,
    LO,
    MARKET,
    correlation_surface,
    flux_features,
    flux_regression,
)
from liqlab.analysis.flux import ewma_backward, ewma_forward
from liqlab.synthetic import planted_flux_stream

BETA, BETA_PRIME = 0.05, 0.5


def tiny_stream():
    times = np.array([0.0, 1.0, 2.5, 3.0, 4.5, 6.0])
    kinds = np.array([MARKET, LO, CANCEL, MARKET, LO, LO])
    sides = np.array([BID, ASK, BID, ASK, BID, ASK])
    mids = np.array([1.0, 0.0, 0.0, -1.0, 0.0, 0.0])
    return times, kinds, sides, mids


class TestFeatures:
    def test_no_price_changes_gives_zero_state(self):
        times, kinds, sides, _ = tiny_stream()
        f = flux_features(times, kinds, sides, np.zeros(6), BETA, BETA_PRIME)
        assert np.all(f.r == 0.0)
        assert np.all(f.sigma2 == 0.0)

    def test_single_mark_trend_kernel(self):
        # one +1 move at t0: r(t) = sqrt(2 beta) e^{-beta (t-t0)}
        times = np.array([0.0, 0.7, 2.0])
        kinds = np.array([MARKET, LO, LO])
        sides = np.array([BID, ASK, BID])
        mids = np.array([1.0, 0.0, 0.0])
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        expected = math.sqrt(2 * BETA) * np.exp(-BETA * times)
        assert np.allclose(f.r, expected, rtol=1e-12)
        assert np.allclose(f.sigma2, 2 * BETA * np.exp(-2 * BETA * times), rtol=1e-12)

    def test_single_event_forward_flux(self):
        # one LO one unit of time ahead: beta' F(t0) = beta' e^{-beta'}
        times = np.array([0.0, 1.0])
        kinds = np.array([MARKET, LO])
        sides = np.array([BID, BID])
        mids = np.zeros(2)
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        assert f.f_sym[0] == pytest.approx(BETA_PRIME * math.exp(-BETA_PRIME), rel=1e-12)
        assert f.f_sym[1] == 0.0

    def test_asym_flux_signs(self):
        times, kinds, sides, mids = tiny_stream()
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        di_sym = np.where(kinds == LO, 1.0, -1.0)
        di_asym = di_sym * np.where(sides == BID, 1.0, -1.0)
        manual = BETA_PRIME * ewma_forward(times, di_asym, BETA_PRIME)
        assert np.allclose(f.f_asym, manual, rtol=1e-12)

    def test_reverse_stream_adjoint(self, rng):
        # reversing time swaps the forward pass and the (exclusive) backward pass
        times = np.sort(rng.random(500) * 100.0)
        marks = rng.normal(size=500)
        rate = 0.3
        fwd = ewma_forward(times, marks, rate)
        rev_bwd = ewma_backward(-times[::-1], marks[::-1], rate)[::-1] - marks
        assert np.allclose(fwd, rev_bwd, atol=1e-10)

    def test_weights_are_backward_gaps(self):
        times, kinds, sides, mids = tiny_stream()
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        gaps = np.append(0.0, np.diff(times))
        assert np.allclose(f.weights, gaps / 6.0)
        assert f.weights.sum() == pytest.approx(1.0)

    def test_rejects_unordered_stream(self):
        times, kinds, sides, mids = tiny_stream()
        times = times.copy()
        times[3] = 0.5
        with pytest.raises(ValueError, match="record 4"):
            flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)

    def test_rejects_bad_codes(self):
        times, kinds, sides, mids = tiny_stream()
        with pytest.raises(ValueError, match="kind"):
            flux_features(times, kinds + 5, sides, mids, BETA, BETA_PRIME)
        with pytest.raises(ValueError, match="side"):
            flux_features(times, kinds, sides + 5, mids, BETA, BETA_PRIME)

    def test_hawkes_forward_column(self):
        times, kinds, sides, mids = tiny_stream()
        lam = np.full(6, 2.0)
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME, hawkes_sym=lam)
        # constant intensity: beta' H = beta' * lam / beta' = lam
        assert np.allclose(f.h_sym, 2.0, rtol=1e-12)


class TestRegression:
    def test_binned_equals_unbinned_on_tiny_stream(self, rng):
        n = 40
        times = np.sort(rng.random(n) * 50.0)
        kinds = rng.integers(0, 3, n)
        sides = rng.integers(0, 2, n)
        mids = rng.integers(-1, 2, n).astype(float)
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        res = flux_regression(f, n_bins=4 * n)  # one record per bin
        x = np.column_stack([np.ones(n), f.r**2, f.sigma2])
        sw = np.sqrt(f.weights)
        direct = np.linalg.lstsq(x * sw[:, None], f.f_sym * sw, rcond=None)[0]
        assert res.c0 == pytest.approx(direct[0], rel=1e-9, abs=1e-12)
        assert res.c1 == pytest.approx(direct[1], rel=1e-9, abs=1e-12)
        assert res.c2 == pytest.approx(direct[2], rel=1e-9, abs=1e-12)

    def test_hawkes_column_enters_at_unit_coefficient(self, rng):
        n = 400
        times = np.sort(rng.random(n) * 500.0)
        kinds = rng.integers(0, 3, n)
        sides = rng.integers(0, 2, n)
        mids = rng.integers(-1, 2, n).astype(float)
        lam = rng.random(n)
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME, hawkes_sym=lam, hawkes_asym=lam)
        res = flux_regression(f, n_bins=5)
        # subtracting beta' H from the target is the unit-coefficient constraint
        f2 = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        f2.f_sym = f2.f_sym - f.h_sym
        f2.f_asym = f2.f_asym - f.h_asym
        f2.h_sym = f.h_sym
        f2.h_asym = f.h_asym
        res2 = flux_regression(f2, n_bins=5)
        assert res.hawkes_used
        assert res.c1 == pytest.approx(res2.c1, rel=1e-12, abs=1e-12)

    def test_rank_deficient_rejected(self):
        times = np.linspace(0, 10, 50)
        kinds = np.full(50, LO)
        sides = np.tile([BID, ASK], 25)
        mids = np.zeros(50)  # r and sigma2 identically zero
        f = flux_features(times, kinds, sides, mids, BETA, BETA_PRIME)
        with pytest.raises(ValueError, match="rank-deficient"):
            flux_regression(f, n_bins=10)

    def test_planted_recovery_module_scale(self):
        s = planted_flux_stream(
            0.5, -2.0, -1.0, 0.1, beta=BETA, beta_prime=BETA_PRIME, horizon=1.5e5,
            seed=101, base_market=1.0, base_cancel=1.0, price_rate=0.5,
        )
        f = flux_features(s.times, s.kinds, s.sides, s.mid_changes, BETA, BETA_PRIME)
        res = flux_regression(f)
        assert res.c0 == pytest.approx(0.5, rel=0.15)
        assert res.c1 == pytest.approx(-2.0, rel=0.10)
        assert res.c2 == pytest.approx(-1.0, rel=0.15)
        assert res.raw["trend_squared"] == pytest.approx(2 * BETA * res.c1)

    def test_null_model_t_stats(self):
        s = planted_flux_stream(
            0.5, 0.0, 0.0, 0.0, beta=BETA, beta_prime=BETA_PRIME, horizon=2e5,
            seed=303, base_market=1.0, base_cancel=1.0, price_rate=0.5,
        )
        f = flux_features(s.times, s.kinds, s.sides, s.mid_changes, BETA, BETA_PRIME)
        res = flux_regression(f)
        for key in ("c1", "c2", "c3"):
            assert abs(res.t_stat[key]) < 3.0, key


class TestCorrelationSurface:
    def test_planted_argmax_within_one_cell(self):
        s = planted_flux_stream(
            0.5, -2.0, -1.0, 0.1, beta=BETA, beta_prime=BETA_PRIME, horizon=2e5,
            seed=101, base_market=1.0, base_cancel=1.0, price_rate=0.5,
        )
        betas = [0.0125, 0.025, 0.05, 0.1, 0.2]
        bps = [0.125, 0.25, 0.5, 1.0, 2.0]
        surf = correlation_surface(s.times, s.kinds, s.sides, s.mid_changes, betas, bps)
        ib = betas.index(surf.argmax_beta)
        jb = bps.index(surf.argmax_beta_prime)
        assert abs(ib - betas.index(BETA)) <= 1
        assert abs(jb - bps.index(BETA_PRIME)) <= 1
        assert surf.corr_at_argmax < 0  # feedback coefficients are negative
