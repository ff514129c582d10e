"""Synthetic data with planted ground truth, for pipeline verification.

Two generators: susceptibility surfaces that follow the finite-size-scaling
form exactly (so the scaling pipeline must recover the planted exponents),
and an event stream whose conditional forward flux obeys the regression
equations with chosen coefficients (so the flux regression must recover
them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analysis.flux import ASK, BID, CANCEL, LO, MARKET
from .stochastic import RngStream

__all__ = ["planted_chi_curves", "PlantedFluxStream", "planted_flux_stream"]


def planted_chi_curves(
    alphas: Sequence[float],
    horizons: Sequence[float],
    sizes: Sequence[int],
    gamma: float,
    zeta: float,
    eta: float,
    alpha_star: float,
    g_inf: float = -1.8,
    g_coef: float = 3.0,
    g_power: float = 0.5,
    amp: float = 0.05,
    width: float = 0.3,
) -> np.ndarray:
    """Noise-free chi[T, N, alpha] surfaces obeying the scaling form exactly.

    chi = T^gamma * amp * exp(-(T^(1/zeta) (alpha - alpha_m))^2 / (2 width^2))
    with alpha_m(T, N) = alpha_star - T^(-1/zeta) g(N^eta / T) and
    g(v) = g_inf + g_coef v^(-g_power) (a finite large-book limit, diverging
    as the book shrinks).
    """
    alphas = np.asarray(list(alphas), dtype=float)
    horizons = np.asarray(list(horizons), dtype=float)
    sizes = np.asarray(list(sizes), dtype=float)
    chi = np.empty((horizons.size, sizes.size, alphas.size))
    for i, t in enumerate(horizons):
        for j, n in enumerate(sizes):
            v = n ** eta / t
            g = g_inf + g_coef * v ** (-g_power)
            alpha_m = alpha_star - t ** (-1.0 / zeta) * g
            y = t ** (1.0 / zeta) * (alphas - alpha_m)
            chi[i, j] = t ** gamma * amp * np.exp(-0.5 * (y / width) ** 2)
    return chi


@dataclass
class PlantedFluxStream:
    """Generated stream plus the coefficients its regression must recover."""

    times: np.ndarray
    kinds: np.ndarray
    sides: np.ndarray
    mid_changes: np.ndarray
    c0: float
    c1: float
    c2: float
    c3: float
    beta: float
    beta_prime: float


def planted_flux_stream(
    c0: float,
    c1: float,
    c2: float,
    c3: float,
    beta: float,
    beta_prime: float,
    horizon: float,
    seed: int = 0,
    stream_id: int = 0,
    price_rate: float = 0.4,
    base_market: float = 0.75,
    base_cancel: float = 0.75,
) -> PlantedFluxStream:
    """Event stream whose conditional forward flux carries planted coefficients.

    Mid-price moves of one tick arrive as a Poisson stream (attached to
    market-order rows).  Book-event rates respond linearly and instantly to
    the trend/volatility EWMAs; because those EWMAs keep decaying over the
    forward window, the instantaneous response is pre-amplified by the kernel
    overlap factors beta'/(beta'+2 beta) (squared state) and
    beta'/(beta'+beta) (signed state), and the intercept absorbs both the
    innovation variance of the future state and the flux of the price
    carriers.  The net response is split evenly over the limit-order (up) and
    market-order/cancellation (down) channels so rates stay positive many
    standard deviations out.
    """
    if min(beta, beta_prime, price_rate, base_market, base_cancel, horizon) <= 0.0:
        raise ValueError("all generator rates must be positive")
    a_sq = beta_prime / (beta_prime + 2.0 * beta)
    a_lin = beta_prime / (beta_prime + beta)
    c1g = c1 / a_sq
    c2g = c2 / a_sq
    c3g = c3 / a_lin
    c0g = c0 + price_rate - (c1g + c2g) * price_rate * (1.0 - a_sq)
    base_lo = base_market + base_cancel

    sqrt2b = math.sqrt(2.0 * beta)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    two_beta = 2.0 * beta

    gen = RngStream(seed, stream_id).generator()
    buf = gen.random(1 << 14)
    bi = 0

    def next_u() -> float:
        nonlocal buf, bi
        if bi >= buf.shape[0]:
            buf = gen.random(1 << 14)
            bi = 0
        u = buf[bi]
        bi += 1
        return u

    times: list[float] = []
    kinds: list[int] = []
    sides: list[int] = []
    mids: list[float] = []

    t = 0.0
    r = 0.0  # sqrt(2 beta)-normalised trend EWMA
    s2 = 0.0  # 2 beta-normalised volatility EWMA

    def channel_rates(rv: float, sv: float) -> tuple[float, ...]:
        g = c0g + c1g * rv * rv + c2g * sv
        h = c3g * rv * inv_sqrt2
        jb = 0.5 * (g + h)
        ja = 0.5 * (g - h)
        return (
            price_rate,
            max(0.0, base_lo + jb / 3.0),
            max(0.0, base_lo + ja / 3.0),
            max(0.0, base_market - jb / 3.0),
            max(0.0, base_market - ja / 3.0),
            max(0.0, base_cancel - jb / 3.0),
            max(0.0, base_cancel - ja / 3.0),
        )

    def total_bound(rv: float, sv: float) -> float:
        # each response term is monotone toward zero between price events, so
        # channel rates are bracketed by their values at the endpoints
        g_now = c0g + c1g * rv * rv + c2g * sv
        g_lo, g_hi = min(g_now, c0g), max(g_now, c0g)
        h_now = c3g * rv * inv_sqrt2
        h_lo, h_hi = min(h_now, 0.0), max(h_now, 0.0)
        j_hi = 0.5 * (g_hi + h_hi)
        j_lo = 0.5 * (g_lo + h_lo)
        return (
            price_rate
            + 2.0 * max(0.0, base_lo + j_hi / 3.0)
            + 2.0 * max(0.0, base_market - j_lo / 3.0)
            + 2.0 * max(0.0, base_cancel - j_lo / 3.0)
        )

    while True:
        bound = total_bound(r, s2)
        u = next_u()
        dt = -math.log1p(-u) / bound
        if dt == 0.0:
            continue
        t_new = t + dt
        if t_new >= horizon:
            break
        decay = math.exp(-beta * (t_new - t))
        r *= decay
        s2 *= decay * decay
        t = t_new
        rates = channel_rates(r, s2)
        total = sum(rates)
        if next_u() * bound > total:
            continue
        x = next_u() * total
        ch = 0
        acc = rates[0]
        while x >= acc and ch < 6:
            ch += 1
            acc += rates[ch]
        if ch == 0:
            # price carrier: one-tick mid move on a market-order row
            dp = 1.0 if next_u() < 0.5 else -1.0
            side = BID if next_u() < 0.5 else ASK
            kind = MARKET
            r += sqrt2b * dp
            s2 += two_beta
        else:
            dp = 0.0
            side = BID if ch in (1, 3, 5) else ASK
            kind = LO if ch in (1, 2) else (MARKET if ch in (3, 4) else CANCEL)
        times.append(t)
        kinds.append(kind)
        sides.append(side)
        mids.append(dp)

    return PlantedFluxStream(
        times=np.asarray(times),
        kinds=np.asarray(kinds, dtype=np.int64),
        sides=np.asarray(sides, dtype=np.int64),
        mid_changes=np.asarray(mids),
        c0=c0,
        c1=c1,
        c2=c2,
        c3=c3,
        beta=beta,
        beta_prime=beta_prime,
    )
