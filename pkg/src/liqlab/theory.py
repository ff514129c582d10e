"""Closed-form and quadrature predictions for the spread models.

Pure functions: regime classification and drift/diffusion constants of the
linear spread model, barrier-hitting probabilities and the susceptibility of
a drifting diffusion (with its exact scaling form), stationary cumulants of
the self-exciting opening-flow state, Kramers escape times for the quadratic
feedback model, and the price-feedback variants.  Each quantity doubles as a
test oracle for the matching simulator in :mod:`liqlab.spread`.

Sign convention note: ``first_passage_prob`` and the susceptibility
quadratures use ``exp(-(N + V u)^2 / (2 D u))`` with ``drift_sign=+1``, i.e.
a positive ``V`` enters as drift *away* from the barrier.  That is the form
the downstream scaling identities are built on, but it is in tension with
reading ``V`` as the growth rate of the spread toward the boundary; pass
``drift_sign=-1`` to evaluate the drift-toward-barrier variant for
sensitivity analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

__all__ = [
    "LinearSpreadTheory",
    "MetastabilityTheory",
    "PriceFeedbackTheory",
    "linear_spread_theory",
    "first_passage_prob",
    "chi_quadrature",
    "chi_theory",
    "scaling_g",
    "chi_scaling_form",
    "hawkes_cumulants",
    "metastability_theory",
    "price_feedback_theory",
]

_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-8, limit=400)

STATIONARY = "stationary"
LINEAR_GROWTH = "linear_growth"
EXPLOSIVE = "explosive"


@dataclass(frozen=True)
class LinearSpreadTheory:
    """Stationary/growth/explosive classification of the linear spread model."""

    alpha_c: float
    p_open: float
    drift: Optional[float]
    diffusion: Optional[float]
    regime: str


def linear_spread_theory(lambda0_plus: float, lambda0_minus: float, alpha: float) -> LinearSpreadTheory:
    """Regime, open probability, drift and diffusion of the linear model.

    alpha_c = 1 - lambda0+/lambda0-.  Below alpha_c the spread is stationary
    with P[S >= 2] = (1 - alpha_c)/(1 - alpha); between alpha_c and 1 it grows
    linearly with drift V = lambda0+ (alpha - alpha_c) / ((1-alpha)(1-alpha_c))
    and diffuses with D = lambda0- + lambda0+ / (1-alpha)^3; at alpha >= 1 the
    feedback itself explodes and V, D are undefined (returned as None).
    """
    if lambda0_plus <= 0.0 or lambda0_minus <= 0.0:
        raise ValueError("base rates must be positive")
    if alpha < 0.0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    alpha_c = 1.0 - lambda0_plus / lambda0_minus
    if alpha >= 1.0:
        return LinearSpreadTheory(alpha_c, 1.0, None, None, EXPLOSIVE)
    p_open = min(1.0, (1.0 - alpha_c) / (1.0 - alpha))
    diffusion = lambda0_minus + lambda0_plus / (1.0 - alpha) ** 3
    if alpha > alpha_c:
        drift = lambda0_plus * (alpha - alpha_c) / ((1.0 - alpha) * (1.0 - alpha_c))
        regime = LINEAR_GROWTH
    else:
        drift = 0.0
        regime = STATIONARY
    return LinearSpreadTheory(alpha_c, p_open, drift, diffusion, regime)


def _log_fpt_density(u: float, barrier: float, drift: float, diffusion: float, drift_sign: float) -> float:
    # log of  N / sqrt(2 pi D u^3) * exp(-(N + s V u)^2 / (2 D u))
    return (
        math.log(barrier)
        - 0.5 * math.log(2.0 * math.pi * diffusion * u * u * u)
        - (barrier + drift_sign * drift * u) ** 2 / (2.0 * diffusion * u)
    )


def _fpt_density(u: float, barrier: float, drift: float, diffusion: float, drift_sign: float) -> float:
    if u <= 0.0:
        return 0.0
    logf = _log_fpt_density(u, barrier, drift, diffusion, drift_sign)
    return math.exp(logf) if logf > -745.0 else 0.0


def first_passage_prob(
    barrier: float,
    horizon: float,
    drift: float,
    diffusion: float,
    drift_sign: float = 1.0,
) -> float:
    """P[hitting time <= horizon] for a diffusion against a barrier at ``N``.

    Computed as the quadrature of the first-passage density
    ``N / sqrt(2 pi D u^3) exp(-(N + s V u)^2 / (2 D u))`` over (0, horizon].
    At ``drift=0`` this reduces to the reflection-principle value
    ``2 Phi(-N / sqrt(D T))``.
    """
    if barrier <= 0.0 or diffusion <= 0.0:
        raise ValueError("barrier and diffusion must be positive")
    if horizon <= 0.0:
        return 0.0
    val, _ = integrate.quad(
        _fpt_density, 0.0, horizon, args=(barrier, drift, diffusion, drift_sign), **_QUAD_OPTS
    )
    return val


def reflection_principle_prob(barrier: float, horizon: float, diffusion: float) -> float:
    """Driftless barrier-hitting law 2 Phi(-N / sqrt(D T)); oracle for drift=0."""
    return 2.0 * float(ndtr(-barrier / math.sqrt(diffusion * horizon)))


def chi_quadrature(
    barrier: float,
    horizon: float,
    drift: float,
    diffusion: float,
    drift_sign: float = 1.0,
) -> float:
    """Variance of min(first-passage time, horizon) by quadrature.

    Var = I2 - I1^2 with Ik the quadrature of (T-u)^k against the
    first-passage density; censored mass at u > T contributes zero to both.
    """
    if barrier <= 0.0 or diffusion <= 0.0:
        raise ValueError("barrier and diffusion must be positive")
    if horizon <= 0.0:
        return 0.0

    def g1(u):
        return (horizon - u) * _fpt_density(u, barrier, drift, diffusion, drift_sign)

    def g2(u):
        return (horizon - u) ** 2 * _fpt_density(u, barrier, drift, diffusion, drift_sign)

    i1, _ = integrate.quad(g1, 0.0, horizon, **_QUAD_OPTS)
    i2, _ = integrate.quad(g2, 0.0, horizon, **_QUAD_OPTS)
    return i2 - i1 * i1


def chi_theory(
    alpha: float,
    horizon: float,
    barrier: float,
    lambda0_plus: float,
    lambda0_minus: float,
    drift_sign: float = 1.0,
) -> float:
    """Susceptibility of the linear spread model at feedback ``alpha``.

    Evaluates :func:`chi_quadrature` with the model's own V(alpha), D(alpha).
    """
    th = linear_spread_theory(lambda0_plus, lambda0_minus, alpha)
    if th.regime == EXPLOSIVE:
        raise ValueError("alpha >= 1: drift and diffusion are undefined in the explosive regime")
    return chi_quadrature(barrier, horizon, th.drift, th.diffusion, drift_sign)


def scaling_g(x: float, y: float, diffusion: float, lam_slope: float, drift_sign: float = 1.0) -> float:
    """Scale-free susceptibility shape G(x, y).

    x = N T^{-1/2}, y = T^{1/2} (alpha - alpha_c); ``lam_slope`` converts y
    into a drift (at criticality it is lambda0+ (1-alpha_c)^{-2}).  Satisfies
    chi = T^2 G exactly when the same diffusion and drift slope are used on
    both sides.
    """
    if x <= 0.0 or diffusion <= 0.0:
        raise ValueError("x and diffusion must be positive")

    def dens(u):
        if u <= 0.0:
            return 0.0
        logf = (
            -0.5 * math.log(2.0 * math.pi * diffusion * u * u * u)
            - (x + drift_sign * u * y * lam_slope) ** 2 / (2.0 * diffusion * u)
        )
        return math.exp(logf) if logf > -745.0 else 0.0

    j1, _ = integrate.quad(lambda u: (1.0 - u) * dens(u), 0.0, 1.0, **_QUAD_OPTS)
    j2, _ = integrate.quad(lambda u: (1.0 - u) ** 2 * dens(u), 0.0, 1.0, **_QUAD_OPTS)
    return x * j2 - (x * j1) ** 2


def chi_scaling_form(
    alpha: float,
    horizon: float,
    barrier: float,
    lambda0_plus: float,
    lambda0_minus: float,
    at_criticality: bool = True,
    drift_sign: float = 1.0,
) -> float:
    """Susceptibility evaluated through the scaling form T^2 G(N T^-1/2, ...).

    With ``at_criticality=True`` the shape function uses the critical-point
    constants D(alpha_c) and Lambda = lambda0+ (1-alpha_c)^{-2} (the published
    form, exact in the critical limit); with ``False`` it uses the effective
    constants D(alpha) and V(alpha)/(alpha - alpha_c), which reproduces
    :func:`chi_theory` identically at any alpha.
    """
    th = linear_spread_theory(lambda0_plus, lambda0_minus, alpha)
    if th.regime == EXPLOSIVE:
        raise ValueError("alpha >= 1 is outside the scaling form's domain")
    alpha_c = th.alpha_c
    x = barrier / math.sqrt(horizon)
    y = math.sqrt(horizon) * (alpha - alpha_c)
    if at_criticality:
        diffusion = lambda0_minus + lambda0_plus / (1.0 - alpha_c) ** 3
        lam_slope = lambda0_plus / (1.0 - alpha_c) ** 2
    else:
        diffusion = th.diffusion
        lam_slope = th.drift / (alpha - alpha_c) if alpha != alpha_c else (
            lambda0_plus / ((1.0 - alpha) * (1.0 - alpha_c))
        )
    return horizon ** 2 * scaling_g(x, y, diffusion, lam_slope, drift_sign)


def hawkes_cumulants(
    lambda0_plus: float, alpha: float, beta: float
) -> tuple[float, float, Callable[[float], float]]:
    """Stationary mean, variance and Laplace transform of the opening-flow EWMA.

    For X driven by openings at rate lambda0+ + alpha X with kernel
    beta e^{-beta t}: E[X] = lambda0+/(1-alpha),
    Var[X] = beta lambda0+ / (2 (1-alpha)^2), and
    E[e^{-uX}] = exp( int_0^u lambda0+ (1-e^{-beta v}) /
    (alpha (1-e^{-beta v}) - beta v) dv ), the integrand taking its limit
    lambda0+/(alpha-1) at v = 0.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if lambda0_plus <= 0.0 or beta <= 0.0:
        raise ValueError("lambda0_plus and beta must be positive")
    mean = lambda0_plus / (1.0 - alpha)
    variance = beta * lambda0_plus / (2.0 * (1.0 - alpha) ** 2)

    def _integrand(v: float) -> float:
        if v < 1e-8:
            return lambda0_plus / (alpha - 1.0)
        em = -math.expm1(-beta * v)  # 1 - e^{-beta v}
        return lambda0_plus * em / (alpha * em - beta * v)

    def laplace(u: float) -> float:
        if u < 0.0:
            raise ValueError("the transform is evaluated for u >= 0")
        if u == 0.0:
            return 1.0
        val, _ = integrate.quad(_integrand, 0.0, u, **_QUAD_OPTS)
        return math.exp(val)

    return mean, variance, laplace


@dataclass(frozen=True)
class MetastabilityTheory:
    """Double-well description of the quadratic feedback model.

    ``x_eq`` and ``x_star`` are the exact stationary points of the effective
    potential; the asymptotic fields carry the small-epsilon forms
    (1-alpha)/eps and beta (1-alpha)^3 / (6 eps^2).  ``kramers_time`` is the
    noise-activated mean escape time; ``log_time_asymptotic`` its small-eps
    expansion (separate branches for alpha > 0 and alpha = 0).  The published
    escape-time prefactor underestimates simulations at order-one beta; both
    the raw value and the expansion are reported without adjustment.
    """

    x_eq: float
    x_star: float
    x_star_asymptotic: float
    barrier: float
    barrier_asymptotic: float
    kramers_time: float
    log_time_asymptotic: float


def log_escape_time_asymptotic(lambda0_plus: float, alpha: float, beta: float, eps: float) -> float:
    """Small-eps expansion of log E[escape time] for the quadratic model."""
    if eps <= 0.0 or beta <= 0.0 or lambda0_plus <= 0.0 or not 0.0 <= alpha < 1.0:
        raise ValueError("need eps, beta, lambda0_plus > 0 and 0 <= alpha < 1")
    if alpha > 0.0:
        return (
            -2.0 / beta * ((1.0 - alpha - math.log(alpha)) / eps + lambda0_plus / alpha ** 2 * math.log(1.0 / eps))
            - 0.5 * math.log(1.0 / eps)
        )
    return (math.log(1.0 / (eps * lambda0_plus)) - 2.0) / (beta * eps)


def metastability_theory(
    lambda0_plus: float, alpha: float, beta: float, eps: float
) -> MetastabilityTheory:
    """Potential geometry and Kramers escape time of the quadratic model.

    The drift of the slow-variable diffusion is minus the gradient of
    V(X) = beta (1-alpha)/2 (X - lambda0+/(1-alpha))^2 - beta eps/3 X^3,
    with state-dependent noise D(X) = beta^2/2 (lambda0+ + alpha X + eps X^2).
    Raises if the potential has no barrier, i.e. (1-alpha)^2 < 4 eps lambda0+.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if lambda0_plus <= 0.0 or beta <= 0.0:
        raise ValueError("lambda0_plus and beta must be positive")
    one_m_a = 1.0 - alpha
    disc = one_m_a * one_m_a - 4.0 * eps * lambda0_plus
    if disc <= 0.0:
        raise ValueError(
            f"no barrier: (1-alpha)^2 = {one_m_a**2:.6g} <= 4 eps lambda0+ = {4*eps*lambda0_plus:.6g}"
        )
    sq = math.sqrt(disc)
    x_eq = (one_m_a - sq) / (2.0 * eps)
    x_star = (one_m_a + sq) / (2.0 * eps)
    x_mean = lambda0_plus / one_m_a

    def potential(x: float) -> float:
        return 0.5 * beta * one_m_a * (x - x_mean) ** 2 - beta * eps / 3.0 * x ** 3

    def potential_d1(x: float) -> float:
        return beta * one_m_a * (x - x_mean) - beta * eps * x * x

    def potential_d2(x: float) -> float:
        return beta * one_m_a - 2.0 * beta * eps * x

    def noise(x: float) -> float:
        return 0.5 * beta * beta * (lambda0_plus + alpha * x + eps * x * x)

    barrier = potential(x_star) - potential(x_eq)
    exponent, _ = integrate.quad(lambda x: potential_d1(x) / noise(x), x_eq, x_star, **_QUAD_OPTS)
    prefactor = 2.0 * math.pi * math.sqrt(
        noise(x_eq) * noise(x_star) / abs(potential_d2(x_star) * potential_d2(x_eq))
    )
    kramers = prefactor * math.exp(exponent)
    return MetastabilityTheory(
        x_eq=x_eq,
        x_star=x_star,
        x_star_asymptotic=one_m_a / eps,
        barrier=barrier,
        barrier_asymptotic=beta * one_m_a ** 3 / (6.0 * eps * eps),
        kramers_time=kramers,
        log_time_asymptotic=log_escape_time_asymptotic(lambda0_plus, alpha, beta, eps),
    )


@dataclass(frozen=True)
class PriceFeedbackTheory:
    """Regimes of the spread model with squared-price-trend feedback."""

    alpha_c: float
    p_open: float
    drift: Optional[float]
    price_diffusivity: Optional[float]
    regime: str


def price_feedback_theory(
    lambda0_plus: float, lambda0_minus: float, alpha: float
) -> PriceFeedbackTheory:
    """Same regime structure as the linear model with the explosion moved to 2.

    Stationary below alpha_c with p_open = (1-alpha_c)/(1-alpha); linear
    growth on (alpha_c, 2) with V = 2 lambda0+ (alpha-alpha_c) /
    ((1-alpha_c)(2-alpha)); explosive at alpha >= 2.  The mid-price diffuses
    with D_P = (lambda0- P[S>=2] + lambda0+) / (2 - alpha) in both
    non-explosive phases.
    """
    if lambda0_plus <= 0.0 or lambda0_minus <= 0.0:
        raise ValueError("base rates must be positive")
    if alpha < 0.0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    alpha_c = 1.0 - lambda0_plus / lambda0_minus
    if alpha >= 2.0:
        return PriceFeedbackTheory(alpha_c, 1.0, None, None, EXPLOSIVE)
    if alpha > alpha_c:
        p_open = 1.0
        drift = 2.0 * lambda0_plus * (alpha - alpha_c) / ((1.0 - alpha_c) * (2.0 - alpha))
        regime = LINEAR_GROWTH
    else:
        p_open = min(1.0, (1.0 - alpha_c) / (1.0 - alpha))
        drift = 0.0
        regime = STATIONARY
    diffusivity = (lambda0_minus * p_open + lambda0_plus) / (2.0 - alpha)
    return PriceFeedbackTheory(alpha_c, p_open, drift, diffusivity, regime)
