"""Order-book simulator with quadratic price feedback on cancellations.

A fixed window of ``n_levels`` price ticks holds unit orders.  Limit orders
arrive at rate ``lam`` per eligible tick (a side's whole half-grid up to one
tick inside the spread), market orders at total rate ``2 mu`` (equal sides),
and every resting order is cancelled with hazard

    nu_t = nu0 + alpha_k * X_t**2,

where X_t integrates sqrt(2 beta) e^{-beta (t-s)} against mid-price changes.
A liquidity crisis is the first time one side of the book empties; its time
``tau_c`` is the primary observable.  Runs start from the feedback-free
steady state reached by a burn-in pass.

The hot loop is compiled (:mod:`liqlab._santafe_kernel`); :func:`step` is the
plain-Python reference with the identical draw sequence, kept for unit tests
and small-scale experiments.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _santafe_kernel as _k
from .stochastic import EwmaState, RngStream

__all__ = [
    "SantaFeParams",
    "OrderBook",
    "Event",
    "SimOutcome",
    "CrisisMap",
    "seed_book",
    "init_equilibrium",
    "step",
    "run",
    "run_reference",
    "crisis_probability_map",
    "wilson_interval",
]

_CHUNK = 1 << 16
DEFAULT_MAX_EVENTS = 100_000_000


@dataclass(frozen=True)
class SantaFeParams:
    lam: float  # limit-order rate per eligible tick
    mu: float  # half the total market-order rate
    nu0: float  # baseline cancellation hazard per order
    alpha_k: float  # feedback strength on the squared trend
    beta: float  # trend memory rate
    n_levels: int  # price-grid size in ticks
    horizon: float
    burn_in: Optional[float] = None  # default 20 / nu0
    seed: int = 0
    stream_id: int = 0
    max_events: int = DEFAULT_MAX_EVENTS
    n_grid: int = 1001  # uniform path-sample points

    def __post_init__(self):
        if min(self.lam, self.mu, self.nu0) <= 0.0:
            raise ValueError("lam, mu and nu0 must be positive")
        if self.alpha_k < 0.0 or self.beta <= 0.0:
            raise ValueError("need alpha_k >= 0 and beta > 0")
        if self.n_levels < 4:
            raise ValueError("the grid needs at least 4 ticks")
        if self.horizon <= 0.0 or (self.burn_in is not None and self.burn_in < 0.0):
            raise ValueError("horizon must be positive and burn_in non-negative")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")

    @property
    def burn_in_time(self) -> float:
        return 20.0 / self.nu0 if self.burn_in is None else self.burn_in

    def stream(self) -> RngStream:
        return RngStream(self.seed, self.stream_id)


@dataclass
class OrderBook:
    """Tick grid of unit-order queues with best-quote bookkeeping.

    Orders at prices <= best_bid are bids, >= best_ask are asks; levels
    strictly inside the spread are empty.  Interior zero queues on either
    side are allowed.
    """

    queues: np.ndarray
    best_bid: int
    best_ask: int

    @property
    def spread(self) -> int:
        return self.best_ask - self.best_bid

    @property
    def mid(self) -> float:
        return 0.5 * (self.best_ask + self.best_bid)

    @property
    def bid_volume(self) -> int:
        return int(self.queues[: self.best_bid + 1].sum())

    @property
    def ask_volume(self) -> int:
        return int(self.queues[self.best_ask :].sum())

    def validate(self) -> None:
        b, a = self.best_bid, self.best_ask
        if not (0 <= b < a <= self.queues.shape[0] - 1):
            raise AssertionError(f"invalid quotes b={b}, a={a}")
        if self.queues[b] <= 0 or self.queues[a] <= 0:
            raise AssertionError("best quotes must sit on non-empty queues")
        if np.any(self.queues[b + 1 : a] != 0):
            raise AssertionError("orders inside the spread")
        if np.any(self.queues < 0):
            raise AssertionError("negative queue")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # 'limit' | 'market' | 'cancel'
    side: str  # 'bid' | 'ask'
    price: int
    dmid: float
    crisis: bool


@dataclass
class SimOutcome:
    """Per-replica record: crisis time, sampled paths, and event totals."""

    params: SantaFeParams
    crisis_time: Optional[float]
    max_spread: int
    sample_times: np.ndarray
    spread_samples: np.ndarray
    mid_samples: np.ndarray
    record_high_times: np.ndarray
    record_high_spreads: np.ndarray
    n_events: int
    n_limit: int
    n_market: int
    n_cancel: int
    realized_variance: float
    aborted: bool
    final_book: Optional[OrderBook] = None


def seed_book(params: SantaFeParams) -> OrderBook:
    """Half-full starting book: alternate ticks at ceil(lam/nu0) on each side."""
    n = params.n_levels
    c = n // 2
    q0 = math.ceil(params.lam / params.nu0)
    queues = np.zeros(n, dtype=np.int64)
    queues[c - 1 :: -2] = q0
    queues[c::2] = q0
    return OrderBook(queues=queues, best_bid=c - 1, best_ask=c)


class _Replica:
    """One replica's full state; the kernel can be paused and resumed."""

    def __init__(self, params: SantaFeParams, mirror: bool = False):
        self.params = params
        self.mirror = mirror
        self.gen = params.stream().generator()
        book = seed_book(params)
        self.queues = book.queues
        self.fen = _k.build_fenwick(self.queues)
        self.ist = np.zeros(11, dtype=np.int64)
        self.ist[_k.IB] = book.best_bid
        self.ist[_k.IA] = book.best_ask
        self.ist[_k.IVBID] = book.bid_volume
        self.ist[_k.IVASK] = book.ask_volume
        self.ist[_k.IMAXS] = book.spread
        self.fst = np.zeros(3, dtype=np.float64)
        self._u = self.gen.random(_CHUNK)
        self._empty = np.empty(0, dtype=np.float64)
        self.grid = self._empty
        self.spread_grid = self._empty
        self.mid_grid = self._empty
        self.rh_t = self._empty
        self.rh_s = self._empty

    def book(self) -> OrderBook:
        return OrderBook(
            queues=self.queues.copy(),
            best_bid=int(self.ist[_k.IB]),
            best_ask=int(self.ist[_k.IA]),
        )

    def attach_sampling(self, horizon: float) -> None:
        n_grid = self.params.n_grid
        self.grid = np.linspace(0.0, horizon, n_grid)
        self.spread_grid = np.full(n_grid, np.nan)
        self.mid_grid = np.full(n_grid, np.nan)
        cap = self.params.n_levels + 8
        self.rh_t = np.zeros(cap)
        self.rh_s = np.zeros(cap)
        self.rh_t[0] = 0.0
        self.rh_s[0] = self.ist[_k.IA] - self.ist[_k.IB]
        self.ist[_k.IRH] = 1

    def reset_clock(self) -> None:
        """Zero time, feedback and counters (burn-in to main handoff)."""
        self.fst[:] = 0.0
        for i in (_k.INEV, _k.INLO, _k.INMO, _k.INCX, _k.ISAMP, _k.IRH):
            self.ist[i] = 0
        self.ist[_k.IMAXS] = self.ist[_k.IA] - self.ist[_k.IB]

    def drive(self, alpha_k: float, horizon: float, record: bool) -> int:
        p = self.params
        while True:
            status, ui = _k.run_chunk(
                self.queues,
                self.fen,
                self.ist,
                self.fst,
                self.grid if record else self._empty,
                self.spread_grid if record else self._empty,
                self.mid_grid if record else self._empty,
                self.rh_t if record else self._empty,
                self.rh_s if record else self._empty,
                self._u,
                p.lam,
                p.mu,
                p.nu0,
                alpha_k,
                p.beta,
                horizon,
                np.int64(p.max_events),
                record,
                self.mirror,
            )
            if status != _k.NEED_REFILL:
                return status
            tail = self._u[ui:]
            self._u = np.concatenate([tail, self.gen.random(_CHUNK - tail.shape[0])])


def init_equilibrium(params: SantaFeParams, rng: Optional[RngStream] = None) -> OrderBook:
    """Steady-state book: burn the seeded half-full book in with alpha_k=0.

    ``burn_in = 0`` returns the seeded book unchanged.  A crisis during
    burn-in means the feedback-free model itself is unstable at these
    parameters and raises.
    """
    if rng is not None:
        params = replace(params, seed=rng.seed, stream_id=rng.stream_id)
    rep = _Replica(params)
    _burn_in(rep)
    return rep.book()


def _burn_in(rep: _Replica) -> None:
    t_burn = rep.params.burn_in_time
    if t_burn > 0.0:
        status = rep.drive(alpha_k=0.0, horizon=t_burn, record=False)
        if status == _k.DONE_CRISIS:
            raise ValueError(
                "book collapsed during burn-in: the feedback-free model is unstable "
                "at these parameters"
            )
        if status == _k.DONE_BUDGET:
            raise ValueError("event budget exhausted during burn-in")
    rep.reset_clock()


def run(params: SantaFeParams, record: bool = True, mirror: bool = False) -> SimOutcome:
    """Simulate one replica from the equilibrated book until crisis or horizon.

    Budget exhaustion is reported with ``aborted=True`` (and no crisis time),
    distinct from a crisis.  ``mirror`` flips every side decision; with an
    even grid it must reproduce the price-mirrored trajectory exactly (used
    by the symmetry check).
    """
    rep = _Replica(params, mirror=mirror)
    _burn_in(rep)
    if record:
        rep.attach_sampling(params.horizon)
    status = rep.drive(alpha_k=params.alpha_k, horizon=params.horizon, record=record)
    ist, fst = rep.ist, rep.fst
    n_rh = int(ist[_k.IRH])
    return SimOutcome(
        params=params,
        crisis_time=float(fst[_k.FT]) if status == _k.DONE_CRISIS else None,
        max_spread=int(ist[_k.IMAXS]),
        sample_times=rep.grid,
        spread_samples=rep.spread_grid,
        mid_samples=rep.mid_grid,
        record_high_times=rep.rh_t[:n_rh].copy() if record else np.empty(0),
        record_high_spreads=rep.rh_s[:n_rh].copy() if record else np.empty(0),
        n_events=int(ist[_k.INEV]),
        n_limit=int(ist[_k.INLO]),
        n_market=int(ist[_k.INMO]),
        n_cancel=int(ist[_k.INCX]),
        realized_variance=float(fst[_k.FRVAR]),
        aborted=status == _k.DONE_BUDGET,
        final_book=rep.book() if status != _k.DONE_CRISIS else None,
    )


def iterate_book(params: SantaFeParams, times: Sequence[float]) -> Iterator[tuple[float, OrderBook]]:
    """Yield the book at the requested times of one main-phase trajectory.

    Stops early if the replica hits a crisis or the budget.
    """
    rep = _Replica(params)
    _burn_in(rep)
    for t in times:
        status = rep.drive(alpha_k=params.alpha_k, horizon=float(t), record=False)
        if status != _k.DONE_HORIZON:
            return
        yield float(t), rep.book()


# ---------------------------------------------------------------------------
# plain-Python reference loop (same draw sequence as the kernel)
# ---------------------------------------------------------------------------


def step(
    book: OrderBook,
    feedback: EwmaState,
    params: SantaFeParams,
    rng: np.random.Generator,
    horizon: float = math.inf,
) -> tuple[Optional[Event], EwmaState]:
    """Execute the next event in place; reference twin of the compiled loop.

    ``feedback.last_update`` is the current simulation time.  Returns the
    event (``None`` if the next proposal lands past ``horizon``) and the
    advanced feedback state; the event that empties one side carries
    ``crisis=True``.  Raises if called on an already-empty side.
    """
    n = book.queues.shape[0]
    queues = book.queues
    b, a = book.best_bid, book.best_ask
    vbid, vask = book.bid_volume, book.ask_volume
    if vbid == 0 or vask == 0:
        raise ValueError("book already in crisis")
    lam, mu, nu0, alpha_k, beta = params.lam, params.mu, params.nu0, params.alpha_k, params.beta
    sqrt2b = math.sqrt(2.0 * beta)
    t = feedback.last_update
    x = feedback.value

    while True:
        bid_hi = min(b + 1, a - 1)
        ask_lo = max(a - 1, b + 1)
        nb = bid_hi + 1
        na = n - ask_lo
        vtot = vbid + vask
        base = 2.0 * mu + lam * (nb + na)
        w_cx = (nu0 + alpha_k * x * x) * vtot
        bound = base + w_cx

        dt = -math.log1p(-rng.random()) / bound
        if dt == 0.0:
            continue
        t_prop = t + dt
        if t_prop >= horizon:
            return None, replace(feedback, value=x, last_update=t)
        x *= math.exp(-beta * (t_prop - t))
        t = t_prop
        w_cx = (nu0 + alpha_k * x * x) * vtot
        total = base + w_cx
        if rng.random() * bound > total:
            continue

        r = rng.random() * total
        dmid = 0.0
        crisis = False
        if r < 2.0 * mu:
            kind = "market"
            at_bid = r < mu
            if at_bid:
                price = b
                queues[b] -= 1
                vbid -= 1
                if vbid == 0:
                    crisis = True
                elif queues[b] == 0:
                    b2 = b - 1
                    while queues[b2] == 0:
                        b2 -= 1
                    dmid = 0.5 * (b2 - b)
                    b = b2
            else:
                price = a
                queues[a] -= 1
                vask -= 1
                if vask == 0:
                    crisis = True
                elif queues[a] == 0:
                    a2 = a + 1
                    while queues[a2] == 0:
                        a2 += 1
                    dmid = 0.5 * (a2 - a)
                    a = a2
        elif r < base:
            kind = "limit"
            at_bid = r < 2.0 * mu + lam * nb
            u_site = rng.random()
            if at_bid:
                price = min(int(u_site * nb), nb - 1)
                queues[price] += 1
                vbid += 1
                if price > b:
                    dmid = 0.5 * (price - b)
                    b = price
            else:
                price = (n - 1) - min(int(u_site * na), na - 1)
                queues[price] += 1
                vask += 1
                if price < a:
                    dmid = 0.5 * (price - a)
                    a = price
        else:
            kind = "cancel"
            k = min(int(rng.random() * vtot), vtot - 1)
            cum = np.cumsum(queues)
            price = int(np.searchsorted(cum, k, side="right"))
            queues[price] -= 1
            at_bid = price <= b
            if at_bid:
                vbid -= 1
                if vbid == 0:
                    crisis = True
                elif price == b and queues[b] == 0:
                    b2 = b - 1
                    while queues[b2] == 0:
                        b2 -= 1
                    dmid = 0.5 * (b2 - b)
                    b = b2
            else:
                vask -= 1
                if vask == 0:
                    crisis = True
                elif price == a and queues[a] == 0:
                    a2 = a + 1
                    while queues[a2] == 0:
                        a2 += 1
                    dmid = 0.5 * (a2 - a)
                    a = a2

        if dmid != 0.0:
            x += sqrt2b * dmid
        book.best_bid, book.best_ask = b, a
        event = Event(time=t, kind=kind, side="bid" if at_bid else "ask", price=price, dmid=dmid, crisis=crisis)
        return event, replace(feedback, value=x, last_update=t)


def run_reference(
    params: SantaFeParams, collect_events: bool = False
) -> tuple[SimOutcome, list[Event]]:
    """Pure-Python run (no burn-in support beyond ``burn_in=0``); test twin.

    Starts from the seeded book when ``burn_in == 0`` (anything else raises;
    equivalence tests pin the two implementations on identical inputs).
    """
    if params.burn_in_time != 0.0:
        raise ValueError("run_reference supports burn_in=0 only")
    book = seed_book(params)
    feedback = EwmaState(value=0.0, rate=params.beta, last_update=0.0)
    rng = params.stream().generator()
    events: list[Event] = []
    n_limit = n_market = n_cancel = 0
    realized = 0.0
    max_spread = book.spread
    crisis_time = None
    aborted = False
    n_events = 0
    while True:
        ev, feedback = step(book, feedback, params, rng, horizon=params.horizon)
        if ev is None:
            break
        n_events += 1
        if collect_events:
            events.append(ev)
        n_limit += ev.kind == "limit"
        n_market += ev.kind == "market"
        n_cancel += ev.kind == "cancel"
        realized += ev.dmid * ev.dmid
        if ev.crisis:
            crisis_time = ev.time
            break
        max_spread = max(max_spread, book.spread)
        if n_events >= params.max_events:
            aborted = True
            break
    outcome = SimOutcome(
        params=params,
        crisis_time=crisis_time,
        max_spread=max_spread,
        sample_times=np.empty(0),
        spread_samples=np.empty(0),
        mid_samples=np.empty(0),
        record_high_times=np.empty(0),
        record_high_spreads=np.empty(0),
        n_events=n_events,
        n_limit=n_limit,
        n_market=n_market,
        n_cancel=n_cancel,
        realized_variance=realized,
        aborted=aborted,
        final_book=book if crisis_time is None else None,
    )
    return outcome, events


# ---------------------------------------------------------------------------
# stability map
# ---------------------------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class CrisisMap:
    """P[tau_c <= T] estimates over an (alpha_k, beta) grid with Wilson CIs."""

    alphas: np.ndarray
    betas: np.ndarray
    p_hat: np.ndarray  # shape (n_beta, n_alpha)
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_crisis: np.ndarray
    n_aborted: np.ndarray
    replicas: int

    def crossover_alpha(self, beta_index: int, level: float = 0.5) -> float:
        """First alpha at which the crisis probability crosses ``level``.

        Linear interpolation between the bracketing grid points; NaN when the
        row never crosses.
        """
        row = self.p_hat[beta_index]
        above = np.nonzero(row >= level)[0]
        if above.size == 0:
            return math.nan
        j = int(above[0])
        if j == 0:
            return float(self.alphas[0])
        x0, x1 = self.alphas[j - 1], self.alphas[j]
        y0, y1 = row[j - 1], row[j]
        if y1 == y0:
            return float(x1)
        return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def _map_cell(args) -> tuple[int, int, int]:
    params, n_replicas = args
    n_crisis = 0
    n_aborted = 0
    for rep in range(n_replicas):
        out = run(replace(params, stream_id=params.stream_id + rep), record=False)
        n_crisis += out.crisis_time is not None
        n_aborted += out.aborted
    return n_crisis, n_aborted, n_replicas


def crisis_probability_map(
    base: SantaFeParams,
    alphas: Sequence[float],
    betas: Sequence[float],
    replicas: int,
    workers: int = 1,
) -> CrisisMap:
    """Estimate the crisis probability on a (alpha_k, beta) grid.

    Cells are independent replica batches; ``workers > 1`` fans them out over
    processes.  Budget-aborted replicas are excluded from the estimate and
    counted separately.  Stream ids are derived from the cell index, so the
    map is reproducible at any worker count.
    """
    alphas = np.asarray(list(alphas), dtype=float)
    betas = np.asarray(list(betas), dtype=float)
    cells = []
    for i, beta in enumerate(betas):
        for j, alpha in enumerate(alphas):
            cell_index = i * alphas.size + j
            p = replace(
                base,
                alpha_k=float(alpha),
                beta=float(beta),
                stream_id=base.stream_id + (cell_index << 20),
            )
            cells.append((p, replicas))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_map_cell, cells))
    else:
        results = [_map_cell(c) for c in cells]
    p_hat = np.zeros((betas.size, alphas.size))
    lo = np.zeros_like(p_hat)
    hi = np.zeros_like(p_hat)
    n_crisis = np.zeros_like(p_hat, dtype=np.int64)
    n_aborted = np.zeros_like(p_hat, dtype=np.int64)
    for idx, (k, n_ab, n_tot) in enumerate(results):
        i, j = divmod(idx, alphas.size)
        n_valid = n_tot - n_ab
        n_crisis[i, j] = k
        n_aborted[i, j] = n_ab
        p_hat[i, j] = k / n_valid if n_valid else math.nan
        lo[i, j], hi[i, j] = wilson_interval(k, n_valid)
    return CrisisMap(
        alphas=alphas,
        betas=betas,
        p_hat=p_hat,
        ci_low=lo,
        ci_high=hi,
        n_crisis=n_crisis,
        n_aborted=n_aborted,
        replicas=replicas,
    )
