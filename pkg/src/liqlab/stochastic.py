"""Seedable random streams, exact lazy EWMAs, and thinning samplers.

Everything downstream (order-book and spread simulators, synthetic stream
generators) draws its randomness through :class:`RngStream` and simulates
state-dependent event times by Ogata thinning.  All model intensities in this
package are non-increasing between events, so the intensity value immediately
after the last event is always a valid thinning bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "RngStream",
    "EwmaState",
    "ewma_update",
    "sample_next_event",
    "sample_next_event_decreasing",
    "sample_categorical",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A counter-based random stream keyed by (seed, stream_id).

    Identical keys reproduce the draw sequence bit-exactly on any machine and
    at any level of parallelism; distinct ``stream_id`` values give
    statistically independent streams without coordination (Philox keys).
    One stream per Monte Carlo replica.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EwmaState:
    """Exponentially weighted moving average with exact lazy decay.

    ``value`` is the running sum of past marks, each discounted by
    ``exp(-rate * elapsed)``.  The decay is applied lazily at update time, so
    arbitrary inter-event gaps cost one ``exp`` each.
    """

    value: float
    rate: float
    last_update: float = 0.0

    def __post_init__(self):
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be a positive finite real, got {self.rate}")

    def value_at(self, t: float) -> float:
        """Decayed value at time ``t >= last_update`` (no mark added)."""
        if t < self.last_update:
            raise ValueError(f"time ran backwards: {t} < {self.last_update}")
        return self.value * math.exp(-self.rate * (t - self.last_update))


def ewma_update(state: EwmaState, t_new: float, mark: float) -> EwmaState:
    """Advance the EWMA to ``t_new`` and add ``mark``.

    new value = value * exp(-rate * (t_new - last_update)) + mark.
    Rejects non-monotone times.
    """
    if t_new < state.last_update:
        raise ValueError(
            f"t_new={t_new} precedes last_update={state.last_update}; time must be non-decreasing"
        )
    decayed = state.value * math.exp(-state.rate * (t_new - state.last_update))
    return replace(state, value=decayed + mark, last_update=t_new)


def _check_intensity(lam: float, bound: float) -> float:
    if not math.isfinite(lam):
        raise ValueError(f"intensity evaluated to a non-finite value: {lam}")
    if lam < 0.0:
        raise ValueError(f"intensity must be non-negative, got {lam}")
    if lam > bound * (1.0 + 1e-12) + 1e-300:
        raise ValueError(f"intensity {lam} exceeds the declared thinning bound {bound}")
    return lam


def sample_next_event(
    bound: float,
    intensity_at: Callable[[float], float],
    horizon: float,
    rng: np.random.Generator,
    start: float = 0.0,
) -> Optional[float]:
    """First point of an inhomogeneous Poisson process by Ogata thinning.

    ``bound`` must dominate ``intensity_at`` on ``[start, horizon]``.  Returns
    the first accepted event time, or ``None`` if no event is accepted before
    the horizon.  Candidate times are proposed from a homogeneous process at
    rate ``bound`` and accepted with probability ``intensity_at(t) / bound``;
    violations of the bound or non-finite intensities raise.
    """
    if bound <= 0.0:
        if intensity_at(start) > 0.0:
            raise ValueError(f"bound={bound} is not positive but the intensity is")
        return None
    t = start
    while True:
        u = rng.random()
        dt = -math.log1p(-u) / bound
        if dt == 0.0:
            continue  # ties broken by re-drawing; event times strictly increase
        t += dt
        if t >= horizon:
            return None
        lam = _check_intensity(intensity_at(t), bound)
        if rng.random() * bound <= lam:
            return t


def sample_next_event_decreasing(
    intensity_at: Callable[[float], float],
    horizon: float,
    rng: np.random.Generator,
    start: float = 0.0,
) -> Optional[float]:
    """Thinning specialised to intensities non-increasing on ``[start, horizon]``.

    The left-endpoint value is then a valid bound, and every rejected
    candidate both advances the clock and tightens the bound, so the sampler
    stays exact and efficient even when the intensity decays by orders of
    magnitude.
    """
    bound = intensity_at(start)
    if not math.isfinite(bound) or bound < 0.0:
        raise ValueError(f"intensity at the left endpoint is invalid: {bound}")
    t = start
    while True:
        if bound <= 0.0:
            return None
        u = rng.random()
        dt = -math.log1p(-u) / bound
        if dt == 0.0:
            continue
        t += dt
        if t >= horizon:
            return None
        lam = _check_intensity(intensity_at(t), bound)
        if rng.random() * bound <= lam:
            return t
        bound = lam


def sample_categorical(weights: Sequence[float], rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to ``weights``.

    At least one weight must be positive and all must be finite and
    non-negative.
    """
    total = 0.0
    for w in weights:
        if not (w >= 0.0 and math.isfinite(w)):
            raise ValueError(f"weights must be finite and non-negative, got {w}")
        total += w
    if total <= 0.0:
        raise ValueError("all weights are zero")
    x = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if x < acc:
            return i
    return len(weights) - 1  # x landed on the rounding edge
