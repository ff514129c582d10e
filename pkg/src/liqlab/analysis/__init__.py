"""Statistical estimators: survival functions, tail fits, susceptibility,
finite-size scaling, and the liquidity-flux regression."""

from .stats import (
    Ccdf,
    DriftDiffusionFit,
    TailFit,
    empirical_sf,
    fit_drift_diffusion,
    fit_geometric,
    fit_tail_exponent,
    step_function_at,
    susceptibility,
)
from .fss import InsufficientGridError, ScalingFit, fss_pipeline
from .flux import (
    ASK,
    BID,
    CANCEL,
    LO,
    MARKET,
    CorrelationSurface,
    FluxFeatures,
    FluxRegressionResult,
    correlation_surface,
    flux_features,
    flux_regression,
    weighted_corr,
)

__all__ = [
    "Ccdf",
    "DriftDiffusionFit",
    "TailFit",
    "empirical_sf",
    "fit_drift_diffusion",
    "fit_geometric",
    "fit_tail_exponent",
    "step_function_at",
    "susceptibility",
    "InsufficientGridError",
    "ScalingFit",
    "fss_pipeline",
    "LO",
    "CANCEL",
    "MARKET",
    "BID",
    "ASK",
    "CorrelationSurface",
    "FluxFeatures",
    "FluxRegressionResult",
    "correlation_surface",
    "flux_features",
    "flux_regression",
    "weighted_corr",
]
