import numpy as np
import pytest

from liqlab.analysis import InsufficientGridError, fss_pipeline
from liqlab.synthetic import planted_chi_curves

ALPHAS = np.round(np.arange(0.02, 0.701, 0.02), 4)
HORIZONS = [50.0, 100.0, 200.0, 400.0]
SIZES = [60, 120, 240]


@pytest.fixture(scope="module")
def planted_fit():
    chi = planted_chi_curves(ALPHAS, HORIZONS, SIZES, gamma=2.0, zeta=3.0, eta=3.0, alpha_star=0.063)
    return fss_pipeline(chi, ALPHAS, HORIZONS, SIZES)


class TestPlantedRecovery:
    def test_exponents_within_ten_percent(self, planted_fit):
        assert planted_fit.gamma == pytest.approx(2.0, rel=0.10)
        assert planted_fit.zeta == pytest.approx(3.0, rel=0.10)
        assert planted_fit.eta == pytest.approx(3.0, rel=0.10)
        assert planted_fit.alpha_star == pytest.approx(0.063, rel=0.10)
        assert not planted_fit.excluded_cells

    def test_diagnostic_curves_minimise_at_fit(self, planted_fit):
        zg, zv = planted_fit.zeta_scan
        assert abs(zg[np.argmin(zv)] - planted_fit.zeta) < 0.1
        eg, ev = planted_fit.eta_scan
        assert abs(eg[np.argmin(ev)] - planted_fit.eta) < 0.1
        sg, sv = planted_fit.alpha_star_scan
        assert abs(sg[np.argmin(sv)] - planted_fit.alpha_star) < 0.01

    def test_linear_model_exponents(self):
        # curves obeying the drifting-diffusion scaling form with all three
        # exponents equal to 2 and the critical point at alpha_c; five sizes
        # so the piecewise-linear collapse can follow the curved shape
        alphas = np.round(np.arange(0.25, 0.951, 0.0125), 4)
        horizons = [100.0, 200.0, 400.0, 800.0]
        sizes = [15, 21, 30, 42, 60]
        chi = planted_chi_curves(
            alphas, horizons, sizes, gamma=2.0, zeta=2.0, eta=2.0, alpha_star=0.5, width=1.5
        )
        fit = fss_pipeline(chi, alphas, horizons, sizes)
        assert fit.gamma == pytest.approx(2.0, rel=0.10)
        assert fit.zeta == pytest.approx(2.0, rel=0.10)
        assert fit.eta == pytest.approx(2.0, rel=0.10)
        assert fit.alpha_star == pytest.approx(0.5, rel=0.10)

    def test_scale_equivariance(self, planted_fit):
        chi = planted_chi_curves(ALPHAS, HORIZONS, SIZES, gamma=2.0, zeta=3.0, eta=3.0, alpha_star=0.063)
        scaled = fss_pipeline(17.0 * chi, ALPHAS, HORIZONS, SIZES)
        assert scaled.gamma == pytest.approx(planted_fit.gamma, rel=1e-9)
        assert scaled.zeta == pytest.approx(planted_fit.zeta, abs=1e-9)
        assert scaled.eta == pytest.approx(planted_fit.eta, abs=1e-9)
        assert scaled.alpha_star == pytest.approx(planted_fit.alpha_star, abs=1e-9)


class TestPreconditions:
    def test_too_few_horizons(self):
        chi = planted_chi_curves(ALPHAS, HORIZONS[:3], SIZES, 2.0, 3.0, 3.0, 0.063)
        with pytest.raises(InsufficientGridError, match="4 horizons"):
            fss_pipeline(chi, ALPHAS, HORIZONS[:3], SIZES)

    def test_too_few_sizes(self):
        chi = planted_chi_curves(ALPHAS, HORIZONS, SIZES[:2], 2.0, 3.0, 3.0, 0.063)
        with pytest.raises(InsufficientGridError, match="3 sizes"):
            fss_pipeline(chi, ALPHAS, HORIZONS, SIZES[:2])

    def test_too_few_alphas(self):
        chi = planted_chi_curves(ALPHAS[:5], HORIZONS, SIZES, 2.0, 3.0, 3.0, 0.063)
        with pytest.raises(InsufficientGridError, match="8 alpha"):
            fss_pipeline(chi, ALPHAS[:5], HORIZONS, SIZES)

    def test_unbracketed_peaks_excluded(self):
        # shift the planted critical point so low-T peaks fall off the grid
        alphas = np.round(np.arange(0.02, 0.32, 0.02), 4)
        chi = planted_chi_curves(alphas, HORIZONS, SIZES, 2.0, 3.0, 3.0, alpha_star=0.063)
        with pytest.raises(InsufficientGridError, match="excluded"):
            fss_pipeline(chi, alphas, HORIZONS, SIZES)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            fss_pipeline(np.zeros((2, 2, 2)), ALPHAS, HORIZONS, SIZES)
