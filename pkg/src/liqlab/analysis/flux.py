"""Liquidity-flux features and the binned weighted regression on them.

An event stream (time, kind, side, mid-price change) is reduced, per event,
to backward state variables and forward response variables:

* ``r``       trend EWMA, sqrt(2 beta) * sum of past mid changes against
              e^(-beta dt)  (the current event included),
* ``sigma2``  volatility EWMA, 2 beta * sum of past squared mid changes
              against e^(-2 beta dt),
* ``f_sym``   beta' * forward net order flux (limit orders minus market
              orders and cancellations, both sides), kernel e^(-beta' dt),
              the current event excluded,
* ``f_asym``  same with the bid flux minus the ask flux.

With these normalisations the symmetric regression reads
``f_sym = C0 + C1 r^2 + C2 sigma2 (+ h_sym)`` and the antisymmetric one
``f_asym = C3 r / sqrt(2) (+ h_asym)``, with the forward self-excitation
contribution ``h`` entering at fixed unit coefficient when supplied.  Raw
coefficients against the unnormalised EWMAs are reported alongside.

Each record carries the fraction of time spent in its state (the gap to the
next event); records are aggregated into weighted quantile bins per
conditioning axis before the least-squares step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

__all__ = [
    "LO",
    "CANCEL",
    "MARKET",
    "BID",
    "ASK",
    "FluxFeatures",
    "FluxRegressionResult",
    "CorrelationSurface",
    "flux_features",
    "flux_regression",
    "correlation_surface",
    "weighted_corr",
]

LO, CANCEL, MARKET = 0, 1, 2
BID, ASK = 0, 1


@njit(cache=True)
def ewma_backward(times, marks, rate):
    """Inclusive backward EWMA: out[i] = sum_{j<=i} e^{-rate (t_i-t_j)} m_j."""
    n = times.shape[0]
    out = np.empty(n)
    acc = 0.0
    t_prev = times[0]
    for i in range(n):
        acc *= math.exp(-rate * (times[i] - t_prev))
        acc += marks[i]
        out[i] = acc
        t_prev = times[i]
    return out


@njit(cache=True)
def ewma_forward(times, marks, rate):
    """Exclusive forward EWMA: out[i] = sum_{j>i} e^{-rate (t_j-t_i)} m_j."""
    n = times.shape[0]
    out = np.empty(n)
    out[n - 1] = 0.0
    for i in range(n - 2, -1, -1):
        decay = math.exp(-rate * (times[i + 1] - times[i]))
        out[i] = decay * (marks[i + 1] + out[i + 1])
    return out


@njit(cache=True)
def _intensity_forward(times, lam, rate):
    # integral of a piecewise-constant intensity against e^{-rate (s-t_i)},
    # the level after the last event held forever
    n = times.shape[0]
    out = np.empty(n)
    out[n - 1] = lam[n - 1] / rate
    for i in range(n - 2, -1, -1):
        decay = math.exp(-rate * (times[i + 1] - times[i]))
        out[i] = lam[i] * (1.0 - decay) / rate + decay * out[i + 1]
    return out


@dataclass
class FluxFeatures:
    """Per-event conditioning and response variables with time weights."""

    times: np.ndarray
    weights: np.ndarray
    r: np.ndarray
    sigma2: np.ndarray
    f_sym: np.ndarray
    f_asym: np.ndarray
    h_sym: Optional[np.ndarray]
    h_asym: Optional[np.ndarray]
    beta: float
    beta_prime: float


def _validate_stream(times, kinds, sides, mid_changes):
    times = np.asarray(times, dtype=float)
    kinds = np.asarray(kinds, dtype=np.int64)
    sides = np.asarray(sides, dtype=np.int64)
    mid_changes = np.asarray(mid_changes, dtype=float)
    n = times.size
    if not (kinds.size == sides.size == mid_changes.size == n):
        raise ValueError("stream columns have mismatched lengths")
    if n < 2:
        raise ValueError("need at least two events")
    bad = np.nonzero(np.diff(times) < 0)[0]
    if bad.size:
        raise ValueError(f"stream is not time-ordered at record {int(bad[0]) + 1}")
    if not np.all(np.isin(kinds, (LO, CANCEL, MARKET))):
        raise ValueError("unknown event kind; expected LO/C/MO codes 0/1/2")
    if not np.all(np.isin(sides, (BID, ASK))):
        raise ValueError("unknown side; expected B/A codes 0/1")
    if not np.all(np.isfinite(mid_changes)):
        raise ValueError("mid-price changes must be finite")
    return times, kinds, sides, mid_changes


def flux_features(
    times,
    kinds,
    sides,
    mid_changes,
    beta: float,
    beta_prime: float,
    hawkes_sym=None,
    hawkes_asym=None,
) -> FluxFeatures:
    """Backward EWMAs, forward fluxes and time weights for an event stream.

    ``hawkes_sym``/``hawkes_asym`` are optional per-event expected net
    intensities (piecewise constant until the next event); when given, their
    forward kernel averages are returned for use as unit-coefficient
    regressors.
    """
    times, kinds, sides, mid_changes = _validate_stream(times, kinds, sides, mid_changes)
    if beta <= 0.0 or beta_prime <= 0.0:
        raise ValueError("beta and beta_prime must be positive")
    di_sym = np.where(kinds == LO, 1.0, -1.0)
    di_asym = di_sym * np.where(sides == BID, 1.0, -1.0)

    r = math.sqrt(2.0 * beta) * ewma_backward(times, mid_changes, beta)
    sigma2 = 2.0 * beta * ewma_backward(times, mid_changes * mid_changes, 2.0 * beta)
    f_sym = beta_prime * ewma_forward(times, di_sym, beta_prime)
    f_asym = beta_prime * ewma_forward(times, di_asym, beta_prime)

    h_sym = h_asym = None
    if hawkes_sym is not None:
        h_sym = beta_prime * _intensity_forward(times, np.asarray(hawkes_sym, dtype=float), beta_prime)
    if hawkes_asym is not None:
        h_asym = beta_prime * _intensity_forward(times, np.asarray(hawkes_asym, dtype=float), beta_prime)

    # state-duration weights, assigned to the gap *ending* at each record:
    # measurable at record time, so they cannot correlate with the forward
    # response (a forward-gap weight would couple to the flux noise and
    # attenuate every coefficient)
    gaps = np.append(0.0, np.diff(times))
    span = times[-1] - times[0]
    weights = gaps / span if span > 0 else np.full(times.size, 1.0 / times.size)
    return FluxFeatures(
        times=times,
        weights=weights,
        r=r,
        sigma2=sigma2,
        f_sym=f_sym,
        f_asym=f_asym,
        h_sym=h_sym,
        h_asym=h_asym,
        beta=beta,
        beta_prime=beta_prime,
    )


@dataclass
class FluxRegressionResult:
    """Regression coefficients with bin diagnostics.

    ``c0, c1, c2`` come from the symmetric-flux regression, ``c3`` from the
    antisymmetric one.  ``raw`` maps each conditioning variable to the
    coefficient it would carry against the unnormalised EWMA integrals.
    """

    c0: float
    c1: float
    c2: float
    c3: float
    se: dict[str, float]
    t_stat: dict[str, float]
    n_bins_sym: int
    n_bins_asym: int
    n_records: int
    total_weight: float
    hawkes_used: bool
    raw: dict[str, float]


def _quantile_edges(values: np.ndarray, weights: np.ndarray, n_bins: int) -> np.ndarray:
    qs = np.linspace(0.0, 1.0, n_bins + 1)
    edges = np.quantile(values, qs, weights=weights, method="inverted_cdf")
    return np.unique(edges)


def _bin_ids(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if edges.size < 2:
        return np.zeros(values.size, dtype=np.int64)
    return np.clip(np.searchsorted(edges, values, side="right") - 1, 0, edges.size - 2)


def _binned_wls(
    target: np.ndarray,
    regressors: list[np.ndarray],
    axes: list[np.ndarray],
    weights: np.ndarray,
    n_bins: int,
    intercept: bool,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Aggregate into per-axis weighted-quantile bins, then weighted LS."""
    n = target.size
    combined = np.zeros(n, dtype=np.int64)
    scale = 1
    for ax in axes:
        edges = _quantile_edges(ax, weights, n_bins)
        combined = combined * max(edges.size - 1, 1) + _bin_ids(ax, edges)
        scale *= max(edges.size - 1, 1)
    _, bin_of = np.unique(combined, return_inverse=True)
    n_occ = int(bin_of.max()) + 1

    w_bin = np.bincount(bin_of, weights=weights, minlength=n_occ)
    cols = ([np.ones(n)] if intercept else []) + regressors
    design = np.empty((n_occ, len(cols)))
    for c, col in enumerate(cols):
        design[:, c] = np.bincount(bin_of, weights=weights * col, minlength=n_occ)
    y = np.bincount(bin_of, weights=weights * target, minlength=n_occ)
    keep = w_bin > 0
    design = design[keep] / w_bin[keep, None]
    y = y[keep] / w_bin[keep]
    w = w_bin[keep]

    sw = np.sqrt(w)
    a = design * sw[:, None]
    b = y * sw
    coef, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < len(cols):
        raise ValueError(
            f"rank-deficient design ({rank} < {len(cols)}): conditioning variables are "
            "degenerate on this stream (constant or collinear after binning)"
        )
    return coef, int(keep.sum())


def _block_sandwich_se(
    target: np.ndarray,
    regressors: list[np.ndarray],
    weights: np.ndarray,
    coef: np.ndarray,
    intercept: bool,
    n_blocks: int = 200,
) -> np.ndarray:
    """Record-level block-robust covariance for the fitted coefficients.

    The flux response is serially correlated over the forward kernel's
    memory, so bin-level residual formulas understate the error; summing the
    score over contiguous time blocks captures it.
    """
    n = target.size
    cols = ([np.ones(n)] if intercept else []) + regressors
    x = np.column_stack(cols)
    e = target - x @ coef
    a = (x * weights[:, None]).T @ x
    g = x * (weights * e)[:, None]
    starts = np.linspace(0, n, min(n_blocks, n) + 1).astype(int)[:-1]
    gb = np.add.reduceat(g, starts, axis=0)
    b = gb.T @ gb
    a_inv = np.linalg.inv(a)
    return np.sqrt(np.diag(a_inv @ b @ a_inv))


def flux_regression(features: FluxFeatures, n_bins: int = 100) -> FluxRegressionResult:
    """Weighted least squares for the flux-response coefficients.

    Symmetric part: ``f_sym - h_sym ~ C0 + C1 r^2 + C2 sigma2`` on records
    binned ``n_bins`` per conditioning axis (h, r, sigma2 when the
    self-excitation column is present, r and sigma2 otherwise), weights
    aggregated per bin.  Antisymmetric part: ``f_asym - h_asym ~ C3 r/sqrt(2)``
    with no intercept.  The ``h`` coefficients are pinned to one by
    subtraction.  Raises on rank-deficient designs.
    """
    f = features
    r2 = f.r ** 2
    target_sym = f.f_sym - f.h_sym if f.h_sym is not None else f.f_sym
    target_asym = f.f_asym - f.h_asym if f.h_asym is not None else f.f_asym
    axes_sym = [f.r, f.sigma2] + ([f.h_sym] if f.h_sym is not None else [])
    axes_asym = [f.r, f.sigma2] + ([f.h_asym] if f.h_asym is not None else [])

    coef_s, nb_s = _binned_wls(
        target_sym, [r2, f.sigma2], axes_sym, f.weights, n_bins, intercept=True
    )
    x3 = f.r / math.sqrt(2.0)
    coef_a, nb_a = _binned_wls(
        target_asym, [x3], axes_asym, f.weights, n_bins, intercept=False
    )
    se_s = _block_sandwich_se(target_sym, [r2, f.sigma2], f.weights, coef_s, intercept=True)
    se_a = _block_sandwich_se(target_asym, [x3], f.weights, coef_a, intercept=False)
    c0, c1, c2 = (float(v) for v in coef_s)
    c3 = float(coef_a[0])
    se = {"c0": float(se_s[0]), "c1": float(se_s[1]), "c2": float(se_s[2]), "c3": float(se_a[0])}
    t_stat = {
        k: (v / se[k] if se[k] > 0 else math.inf)
        for k, v in zip(("c0", "c1", "c2", "c3"), (c0, c1, c2, c3))
    }
    two_beta = 2.0 * f.beta
    return FluxRegressionResult(
        c0=c0,
        c1=c1,
        c2=c2,
        c3=c3,
        se=se,
        t_stat=t_stat,
        n_bins_sym=nb_s,
        n_bins_asym=nb_a,
        n_records=int(f.times.size),
        total_weight=float(f.weights.sum()),
        hawkes_used=f.h_sym is not None or f.h_asym is not None,
        raw={
            "trend_squared": two_beta * c1,
            "volatility": two_beta * c2,
            "trend": math.sqrt(f.beta) * c3,
        },
    )


def weighted_corr(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    sw = w.sum()
    mx = float(np.sum(w * x) / sw)
    my = float(np.sum(w * y) / sw)
    cov = float(np.sum(w * (x - mx) * (y - my)) / sw)
    vx = float(np.sum(w * (x - mx) ** 2) / sw)
    vy = float(np.sum(w * (y - my) ** 2) / sw)
    if vx <= 0.0 or vy <= 0.0:
        return 0.0
    return cov / math.sqrt(vx * vy)


@dataclass
class CorrelationSurface:
    """Correlation of the forward total flux with the squared trend."""

    betas: np.ndarray
    beta_primes: np.ndarray
    corr: np.ndarray  # (n_beta, n_beta_prime), signed
    argmax_beta: float
    argmax_beta_prime: float
    corr_at_argmax: float


def correlation_surface(
    times,
    kinds,
    sides,
    mid_changes,
    betas: Sequence[float],
    beta_primes: Sequence[float],
) -> CorrelationSurface:
    """Scan Cor(forward flux, squared trend) over (beta, beta') grids.

    The argmax is taken on the absolute correlation; the signed value is
    kept in the surface and the report.
    """
    times, kinds, sides, mid_changes = _validate_stream(times, kinds, sides, mid_changes)
    betas = np.asarray(list(betas), dtype=float)
    beta_primes = np.asarray(list(beta_primes), dtype=float)
    di_sym = np.where(kinds == LO, 1.0, -1.0)
    gaps = np.append(0.0, np.diff(times))

    r2_by_beta = [
        (math.sqrt(2.0 * b) * ewma_backward(times, mid_changes, b)) ** 2 for b in betas
    ]
    f_by_bp = [bp * ewma_forward(times, di_sym, bp) for bp in beta_primes]
    corr = np.empty((betas.size, beta_primes.size))
    for i, r2 in enumerate(r2_by_beta):
        for j, fwd in enumerate(f_by_bp):
            corr[i, j] = weighted_corr(fwd, r2, gaps)
    i, j = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
    return CorrelationSurface(
        betas=betas,
        beta_primes=beta_primes,
        corr=corr,
        argmax_beta=float(betas[i]),
        argmax_beta_prime=float(beta_primes[j]),
        corr_at_argmax=float(corr[i, j]),
    )
