"""Event-driven simulators for the four spread-only models.

All variants share one exact thinning loop.  The spread lives on
{1, 2, 3, ...}; opening events (cancellations / market orders at the best)
raise it by one, closing events (limit orders inside the spread) lower it by
one and are gated so the spread never drops below 1.

Variant intensities, with X the feedback EWMA:

* ``linear``         lam+ = l0+ + alpha X,                lam- = 1{S>=2} l0-
* ``stabilized``     lam+ = l0+ + alpha X,                lam- = l0- (S-1)
* ``quadratic``      lam+ = l0+ + alpha X + eps X^2,      lam- = 1{S>=2} l0-
* ``price_feedback`` lam+ = l0+ + alpha X^2,              lam- = 1{S>=2} l0-

For the first three, X integrates opening events with kernel
beta e^{-beta t} (mark beta, decay beta).  For ``price_feedback`` every event
hits the bid or ask with probability 1/2 and moves the mid price, and X
integrates sqrt(2 beta) e^{-beta t} against those moves.  The move size is
1/sqrt(2) of a tick: the closed-form regime structure of this model
(stationary below alpha_c, linear growth up to the explosion at feedback
strength 2, and the price-diffusivity law) holds exactly when each event
contributes squared price change 1/2, and this normalisation realises it
verbatim; spread dynamics are independent of the move size.  Intensities are
non-increasing between events in every variant, so left-endpoint thinning
bounds are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .stochastic import RngStream
from .theory import log_escape_time_asymptotic

__all__ = [
    "VARIANTS",
    "SpreadModelParams",
    "SpreadPath",
    "EscapeCensus",
    "run_spread",
    "escape_time_census",
]

VARIANTS = ("linear", "stabilized", "quadratic", "price_feedback")

LINEAR, STABILIZED, QUADRATIC, PRICE_FEEDBACK = range(4)
_VARIANT_CODE = dict(zip(VARIANTS, range(4)))

# price move per event in the price-feedback variant: squared size 1/2
_HALF_QV_MOVE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class SpreadModelParams:
    variant: str
    lambda0_plus: float
    lambda0_minus: float
    alpha: float = 0.0
    beta: float = 1.0
    eps: float = 0.0
    horizon: float = 1000.0
    spread_cap: int = 1_000_000_000
    seed: int = 0
    stream_id: int = 0
    max_events: int = 100_000_000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.lambda0_plus <= 0.0 or self.lambda0_minus <= 0.0:
            raise ValueError("base rates must be positive")
        if self.alpha < 0.0 or self.beta <= 0.0 or self.eps < 0.0:
            raise ValueError("need alpha >= 0, beta > 0, eps >= 0")
        if self.eps > 0.0 and self.variant != "quadratic":
            raise ValueError("eps is only meaningful for the quadratic variant")
        if self.spread_cap < 2:
            raise ValueError("spread_cap must be at least 2")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    def stream(self) -> RngStream:
        return RngStream(self.seed, self.stream_id)


@dataclass
class SpreadPath:
    """One trajectory: event path, spread occupancy, and escape bookkeeping.

    ``occupancy[s]`` is the total time spent with spread exactly ``s``
    (index 0 unused); it is the time-weighted spread distribution and the
    input for survival-function estimates.  ``escape_time`` is the first time
    the spread reached ``spread_cap`` or, when an X threshold was supplied,
    the first time the feedback EWMA crossed it.
    """

    params: SpreadModelParams
    times: Optional[np.ndarray]
    spreads: Optional[np.ndarray]
    x_samples: Optional[np.ndarray]
    mids: Optional[np.ndarray]
    occupancy: np.ndarray
    escape_time: Optional[float]
    n_open: int
    n_close: int
    n_events: int
    final_time: float
    realized_price_var: float
    aborted: bool

    @property
    def max_spread(self) -> int:
        nz = np.nonzero(self.occupancy)[0]
        top = int(nz[-1]) if nz.size else 1
        if self.spreads is not None and self.spreads.size:
            top = max(top, int(self.spreads.max()))
        return top

    def occupancy_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(spread values, time weights) for weighted survival estimates."""
        support = np.nonzero(self.occupancy)[0]
        return support.astype(np.int64), self.occupancy[support]


class _Uniforms:
    """Sequential uniforms read in blocks; same stream order as scalar draws."""

    def __init__(self, gen: np.random.Generator, block: int = 1 << 14):
        self._gen = gen
        self._block = block
        self._buf = gen.random(block)
        self._i = 0

    def next(self) -> float:
        if self._i >= self._buf.shape[0]:
            self._buf = self._gen.random(self._block)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def run_spread(
    params: SpreadModelParams,
    x_escape: Optional[float] = None,
    record_path: bool = False,
) -> SpreadPath:
    """Simulate one spread trajectory by exact thinning.

    Stops at the horizon, at escape (spread >= spread_cap, or feedback EWMA
    >= ``x_escape`` when given), or at the event budget (``aborted=True``,
    distinct from escape).  With ``record_path`` the full event path
    (times, spreads, X, and mid for the price-feedback variant) is stored.
    """
    code = _VARIANT_CODE[params.variant]
    l0p = params.lambda0_plus
    l0m = params.lambda0_minus
    alpha = params.alpha
    beta = params.beta
    eps = params.eps
    horizon = params.horizon
    cap = params.spread_cap
    max_events = params.max_events
    sqrt2b = math.sqrt(2.0 * beta)

    uni = _Uniforms(params.stream().generator())

    t = 0.0  # anchor time for x
    t_last = 0.0  # last accepted event (occupancy accounting)
    s = 1
    x = 0.0
    mid = 0.0
    n_open = n_close = n_events = 0
    realized_var = 0.0
    escape_time: Optional[float] = None
    aborted = False

    occ = np.zeros(256, dtype=np.float64)
    rec_t: list[float] = []
    rec_s: list[int] = []
    rec_x: list[float] = []
    rec_m: list[float] = []

    def lam_plus(xv: float) -> float:
        if code == PRICE_FEEDBACK:
            return l0p + alpha * xv * xv
        if code == QUADRATIC:
            return l0p + alpha * xv + eps * xv * xv
        return l0p + alpha * xv

    def lam_minus(sv: int) -> float:
        if code == STABILIZED:
            return l0m * (sv - 1)
        return l0m if sv >= 2 else 0.0

    lm = lam_minus(s)
    bound = lam_plus(x) + lm
    while True:
        u = uni.next()
        dt = -math.log1p(-u) / bound
        if dt == 0.0:
            continue  # strict increase of event times: re-draw ties
        t_prop = t + dt
        if t_prop >= horizon:
            t_last_stop = horizon
            break
        x *= math.exp(-beta * (t_prop - t))
        t = t_prop
        lp = lam_plus(x)
        total = lp + lm
        if uni.next() * bound > total:
            bound = total  # rejected: the decayed intensity is the new bound
            continue

        # accepted event at time t
        n_events += 1
        opening = uni.next() * total <= lp
        if opening:
            n_open += 1
            s += 1
        else:
            n_close += 1
            s -= 1
        if code == PRICE_FEEDBACK:
            at_ask = uni.next() < 0.5
            dp = _HALF_QV_MOVE if at_ask == opening else -_HALF_QV_MOVE
            mid += dp
            realized_var += 0.5
            x += sqrt2b * dp
        elif opening:
            x += beta

        if s >= occ.shape[0]:
            occ = np.concatenate([occ, np.zeros(occ.shape[0], dtype=np.float64)])
        occ[s - 1 if opening else s + 1] += t - t_last  # time spent at previous spread
        t_last = t

        if record_path:
            rec_t.append(t)
            rec_s.append(s)
            rec_x.append(x)
            if code == PRICE_FEEDBACK:
                rec_m.append(mid)

        if s >= cap or (x_escape is not None and x >= x_escape):
            escape_time = t
            t_last_stop = t
            break
        if n_events >= max_events:
            aborted = True
            t_last_stop = t
            break

        lm = lam_minus(s)
        bound = lam_plus(x) + lm

    occ[s] += t_last_stop - t_last
    return SpreadPath(
        params=params,
        times=np.asarray(rec_t) if record_path else None,
        spreads=np.asarray(rec_s, dtype=np.int64) if record_path else None,
        x_samples=np.asarray(rec_x) if record_path else None,
        mids=np.asarray(rec_m) if (record_path and code == PRICE_FEEDBACK) else None,
        occupancy=occ,
        escape_time=escape_time,
        n_open=n_open,
        n_close=n_close,
        n_events=n_events,
        final_time=t_last_stop,
        realized_price_var=realized_var,
        aborted=aborted,
    )


@dataclass
class EscapeCensus:
    """I.i.d. escape-time sample from the quadratic model, with censoring."""

    escape_times: np.ndarray
    n_censored: int
    censor_time: float
    x_threshold: float
    mean: float
    ci_low: float
    ci_high: float


def escape_time_census(
    params: SpreadModelParams,
    replicas: int,
    x_escape_mult: float = 5.0,
    censor_mult: float = 1000.0,
    n_bootstrap: int = 2000,
) -> EscapeCensus:
    """Escape times of the quadratic model over independent replicas.

    Escape is declared when the feedback EWMA exceeds ``x_escape_mult`` times
    its runaway scale (1 - alpha)/eps, or the spread hits ``spread_cap``.
    Replicas still running at ``censor_mult`` times the asymptotic escape-time
    estimate are right-censored and only counted.  The mean over escaped
    replicas carries a percentile bootstrap CI.
    """
    if params.variant != "quadratic":
        raise ValueError("the escape census is defined for the quadratic variant only")
    if params.eps <= 0.0:
        raise ValueError("eps must be positive for a metastable escape")
    x_thr = x_escape_mult * (1.0 - params.alpha) / params.eps
    censor_time = censor_mult * math.exp(
        log_escape_time_asymptotic(params.lambda0_plus, params.alpha, params.beta, params.eps)
    )
    times = []
    n_censored = 0
    for i in range(replicas):
        p = replace(params, stream_id=params.stream_id + i, horizon=censor_time)
        path = run_spread(p, x_escape=x_thr)
        if path.escape_time is None:
            n_censored += 1
        else:
            times.append(path.escape_time)
    arr = np.asarray(times)
    if arr.size == 0:
        raise RuntimeError("no replica escaped before the censoring cap")
    boot_rng = RngStream(params.seed, params.stream_id + replicas + 1).generator()
    means = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        means[b] = arr[boot_rng.integers(0, arr.size, arr.size)].mean()
    lo, hi = np.percentile(means, [2.5, 97.5])
    return EscapeCensus(
        escape_times=arr,
        n_censored=n_censored,
        censor_time=censor_time,
        x_threshold=x_thr,
        mean=float(arr.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
    )
