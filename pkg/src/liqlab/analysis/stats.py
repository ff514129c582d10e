"""Weighted survival functions, tail fits, and crisis-time statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Ccdf",
    "empirical_sf",
    "fit_geometric",
    "TailFit",
    "fit_tail_exponent",
    "susceptibility",
    "DriftDiffusionFit",
    "fit_drift_diffusion",
    "step_function_at",
]


@dataclass(frozen=True)
class Ccdf:
    """Weighted complementary CDF: ``sf[i] = P[X >= values[i]]``."""

    values: np.ndarray  # ascending support
    sf: np.ndarray  # non-increasing, sf[0] <= 1
    total_weight: float

    def __post_init__(self):
        if self.values.size == 0:
            raise ValueError("empty support")
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("support must be strictly ascending")
        if np.any(np.diff(self.sf) > 1e-15) or self.sf[0] > 1.0 + 1e-12 or self.sf[-1] < -1e-15:
            raise ValueError("survival probabilities must be non-increasing in [0, 1]")

    def prob_at_least(self, v: float) -> float:
        """P[X >= v] (1 below the support, 0 above it)."""
        i = int(np.searchsorted(self.values, v, side="left"))
        return 0.0 if i >= self.values.size else float(self.sf[i])

    def masses(self) -> np.ndarray:
        """Probability mass at each support point."""
        return self.sf - np.append(self.sf[1:], 0.0)


def empirical_sf(samples: Sequence[float], weights: Optional[Sequence[float]] = None) -> Ccdf:
    """Weighted empirical survival function.

    Doubling a point's weight is exactly equivalent to duplicating it.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != x.shape:
            raise ValueError("weights must match the sample shape")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("all weights are zero")
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    values, start = np.unique(xs, return_index=True)
    mass = np.add.reduceat(ws, start)
    sf = mass[::-1].cumsum()[::-1] / total
    return Ccdf(values=values, sf=sf, total_weight=total)


def fit_geometric(ccdf: Ccdf, min_support: int = 2) -> float:
    """Maximum-likelihood geometric ratio on the conditional tail.

    Conditions on ``X >= min_support`` and fits P[X = n] ~ (1-r) r^(n-min_support);
    the MLE is r = m / (1 + m) with m the conditional mean excess.
    """
    mask = ccdf.values >= min_support
    vals = ccdf.values[mask]
    mass = ccdf.masses()[mask]
    pos = mass > 0
    if np.count_nonzero(pos) < 2:
        raise ValueError("degenerate tail: need at least two support points with mass")
    if vals.size < 3:
        raise ValueError(f"need >= 3 support points at or above {min_support}")
    m = float(np.sum(mass[pos] * (vals[pos] - min_support)) / np.sum(mass[pos]))
    return m / (1.0 + m)


@dataclass(frozen=True)
class TailFit:
    """Log-log tail slope with bootstrap CI and cross-check diagnostics.

    ``curvature`` is the quadratic coefficient of a log-log fit; large
    magnitudes (heuristically > 0.5) mean the tail bends away from a power
    law and ``power_law_ok`` is cleared.  ``hill_kappa`` is the weighted Hill
    estimate over the same tail, as an independent cross-check.
    """

    kappa: float
    ci_low: float
    ci_high: float
    hill_kappa: float
    curvature: float
    power_law_ok: bool
    n_tail: int


def fit_tail_exponent(
    ccdf: Ccdf,
    tail_fraction: float = 0.1,
    sf_floor: Optional[float] = None,
    min_tail_points: int = 50,
    n_bootstrap: int = 500,
    seed: int = 7,
) -> TailFit:
    """Tail exponent kappa of ``sf ~ x^-kappa`` over a probability window.

    The fitted window is the tail mass ``sf_floor <= sf <= tail_fraction``
    (floor defaults to ``tail_fraction / 100``): selecting by mass rather
    than by support range keeps the fit inside the scaling region and out of
    the few-observation cutoff where the empirical sf collapses.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    floor = tail_fraction / 100.0 if sf_floor is None else sf_floor
    window = (ccdf.values > 0) & (ccdf.sf >= floor) & (ccdf.sf <= tail_fraction)
    vals = ccdf.values[window]
    sf = ccdf.sf[window]
    n_tail = int(vals.size)
    if n_tail < min_tail_points:
        raise ValueError(
            f"insufficient tail: {n_tail} support points with sf in "
            f"[{floor:g}, {tail_fraction:g}], need >= {min_tail_points}"
        )
    lx = np.log(vals)
    ly = np.log(sf)
    slope, _ = np.polyfit(lx, ly, 1)
    kappa = -float(slope)

    quad = np.polyfit(lx, ly, 2)
    curvature = float(quad[0])

    # weighted Hill estimate on the conditional tail mass, as a cross-check
    mass = ccdf.masses()[window]
    x_min = vals[0]
    mw = mass.sum()
    with np.errstate(divide="ignore"):
        log_ratio = np.log(vals / x_min)
    hill = float(mw / np.sum(mass * log_ratio)) if mw > 0 and np.sum(mass * log_ratio) > 0 else math.nan

    rng = np.random.default_rng(seed)
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n_tail, n_tail)
        if np.unique(lx[idx]).size < 2:
            boots[b] = kappa
            continue
        s, _ = np.polyfit(lx[idx], ly[idx], 1)
        boots[b] = -s
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return TailFit(
        kappa=kappa,
        ci_low=float(lo),
        ci_high=float(hi),
        hill_kappa=hill,
        curvature=curvature,
        power_law_ok=abs(curvature) <= 0.5,
        n_tail=n_tail,
    )


def susceptibility(crisis_times: Sequence[float], horizon: float) -> float:
    """Unbiased sample variance of min(tau_c, horizon).

    Censored replicas enter as ``None``/NaN and contribute the horizon.
    """
    arr = np.array([horizon if t is None else t for t in crisis_times], dtype=float)
    if arr.size < 2:
        raise ValueError("need at least two replicas")
    arr = np.where(np.isnan(arr), horizon, np.minimum(arr, horizon))
    return float(np.var(arr, ddof=1))


def step_function_at(times: np.ndarray, values: np.ndarray, at: np.ndarray, initial: float) -> np.ndarray:
    """Right-continuous step-path values at query times."""
    idx = np.searchsorted(times, at, side="right") - 1
    out = np.where(idx >= 0, values[np.maximum(idx, 0)], initial)
    return out.astype(float)


@dataclass(frozen=True)
class DriftDiffusionFit:
    drift: float
    diffusion: float
    n_increments: int


def fit_drift_diffusion(
    increments_by_scale: Sequence[tuple[float, np.ndarray]],
) -> DriftDiffusionFit:
    """Long-run drift and diffusion from window increments at several scales.

    Input: (window length, increment sample) pairs with nested window sizes.
    The drift is the pooled mean rate; the diffusion constant is the slope of
    the increment variance against the window length, which cancels the
    finite-memory constant offset that biases single-window estimates.
    """
    if len(increments_by_scale) < 2:
        raise ValueError("need increments at >= 2 window scales")
    ws = np.array([w for w, _ in increments_by_scale])
    vs = np.array([np.var(inc, ddof=1) for _, inc in increments_by_scale])
    slope, _ = np.polyfit(ws, vs, 1)
    w0, inc0 = increments_by_scale[0]
    drift = float(np.mean(inc0) / w0)
    return DriftDiffusionFit(drift=drift, diffusion=float(slope), n_increments=inc0.size)
