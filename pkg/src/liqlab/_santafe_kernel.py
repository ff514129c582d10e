"""Compiled event loop for the order-book simulator with cancellation feedback.

The kernel consumes pre-drawn uniforms from a buffer (same Philox stream
order as scalar draws, so the pure-Python reference loop is bit-identical)
and returns control to the caller when the buffer runs low.  A Fenwick tree
over queue sizes gives O(log N) proportional-to-size cancellation sampling.

Draw order per event attempt (the reproducibility contract shared with
:func:`liqlab.santafe.step`):

1. proposal gap  ``dt = -log1p(-u)/bound`` (zero gaps re-drawn),
2. acceptance against the left-endpoint intensity bound,
3. event-type selection over {MO, MO, LO, LO, cancel} slots,
4. one extra draw for the LO site or the cancelled-order index.

With ``mirror=True`` the side interpretation of every draw is flipped
(bid <-> ask, order index counted from the top); running a mirrored book
with the same stream then reproduces the mirrored trajectory exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes
RUNNING = 0
DONE_HORIZON = 1
DONE_CRISIS = 2
DONE_BUDGET = 3
NEED_REFILL = 4

# integer-state slots
IB, IA, IVBID, IVASK, INEV, INLO, INMO, INCX, ISAMP, IRH, IMAXS = range(11)
# float-state slots
FT, FX, FRVAR = range(3)

_DRAWS_PER_ATTEMPT = 4


@njit(cache=True)
def _fen_add(fen, i, delta, n):
    i += 1
    while i <= n:
        fen[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fen_select(fen, k, top_bit, n):
    # largest idx with prefix(idx) <= k; the k-th order (0-based) sits at level idx
    idx = 0
    rem = k
    bit = top_bit
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and fen[nxt] <= rem:
            idx = nxt
            rem -= fen[nxt]
        bit >>= 1
    return idx


@njit(cache=True)
def build_fenwick(queues):
    n = queues.shape[0]
    fen = np.zeros(n + 1, dtype=np.int64)
    for p in range(n):
        if queues[p] != 0:
            _fen_add(fen, p, queues[p], n)
    return fen


@njit(cache=True)
def run_chunk(
    queues,
    fen,
    ist,
    fst,
    grid,
    spread_grid,
    mid_grid,
    rh_t,
    rh_s,
    uniforms,
    lam,
    mu,
    nu0,
    alpha_k,
    beta,
    horizon,
    budget,
    record,
    mirror,
):
    """Advance one replica until horizon/crisis/budget or buffer exhaustion.

    Returns (status, next_uniform_index).  All state lives in the passed
    arrays so the caller can refill the uniform buffer and re-enter.
    """
    n = queues.shape[0]
    top_bit = 1
    while (top_bit << 1) <= n:
        top_bit <<= 1
    sqrt2b = math.sqrt(2.0 * beta)

    b = ist[IB]
    a = ist[IA]
    vbid = ist[IVBID]
    vask = ist[IVASK]
    isamp = ist[ISAMP]
    irh = ist[IRH]
    max_s = ist[IMAXS]
    t = fst[FT]
    x = fst[FX]

    n_grid = grid.shape[0]
    nu_limit = uniforms.shape[0] - _DRAWS_PER_ATTEMPT
    ui = 0
    status = RUNNING

    while status == RUNNING:
        if ui > nu_limit:
            status = NEED_REFILL
            break

        if b + 1 < a - 1:
            bid_hi = b + 1
            ask_lo = a - 1
        else:
            bid_hi = a - 1
            ask_lo = b + 1
        nb = bid_hi + 1
        na = n - ask_lo
        vtot = vbid + vask
        # lam * (nb + na) sums the integer site counts first, so the value is
        # bit-identical under the bid/ask mirror
        base = 2.0 * mu + lam * (nb + na)
        w_cx = (nu0 + alpha_k * x * x) * vtot
        bound = base + w_cx

        du = uniforms[ui]
        ui += 1
        dt = -math.log1p(-du) / bound
        if dt == 0.0:
            continue  # ties re-drawn; event times strictly increase
        t_prop = t + dt
        if t_prop >= horizon:
            t = horizon
            if record:
                while isamp < n_grid and grid[isamp] <= horizon:
                    spread_grid[isamp] = a - b
                    mid_grid[isamp] = 0.5 * (a + b)
                    isamp += 1
            status = DONE_HORIZON
            break

        x *= math.exp(-beta * (t_prop - t))
        t = t_prop
        w_cx = (nu0 + alpha_k * x * x) * vtot
        total = base + w_cx
        if uniforms[ui] * bound > total:
            ui += 1
            continue  # rejected candidate; decayed state is the next bound
        ui += 1

        # accepted event at time t: sample-grid points passed since the last
        # event see the pre-event book
        if record:
            while isamp < n_grid and grid[isamp] <= t:
                spread_grid[isamp] = a - b
                mid_grid[isamp] = 0.5 * (a + b)
                isamp += 1

        r = uniforms[ui] * total
        ui += 1
        w_lo0 = lam * (na if mirror else nb)

        dmid = 0.0
        crisis = False
        if r < 2.0 * mu:
            # market order; slots 0/1 -> bid/ask (swapped under mirror)
            at_bid = (r >= mu) if mirror else (r < mu)
            ist[INMO] += 1
            if at_bid:
                queues[b] -= 1
                _fen_add(fen, b, -1, n)
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
                queues[a] -= 1
                _fen_add(fen, a, -1, n)
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
            # limit order; bid sites counted from the bottom of the grid,
            # ask sites from the top, so mirrored draws land on mirrored sites
            first_slot = r < 2.0 * mu + w_lo0
            at_bid = (not first_slot) if mirror else first_slot
            u_site = uniforms[ui]
            ui += 1
            ist[INLO] += 1
            if at_bid:
                site = int(u_site * nb)
                if site >= nb:
                    site = nb - 1
                p = site
                queues[p] += 1
                _fen_add(fen, p, 1, n)
                vbid += 1
                if p > b:
                    dmid = 0.5 * (p - b)
                    b = p
            else:
                site = int(u_site * na)
                if site >= na:
                    site = na - 1
                p = (n - 1) - site
                queues[p] += 1
                _fen_add(fen, p, 1, n)
                vask += 1
                if p < a:
                    dmid = 0.5 * (p - a)
                    a = p
        else:
            # cancellation: per-order hazard, so the cancelled order is
            # uniform over all outstanding orders
            k = int(uniforms[ui] * vtot)
            ui += 1
            if k >= vtot:
                k = vtot - 1
            if mirror:
                k = vtot - 1 - k
            p = _fen_select(fen, k, top_bit, n)
            queues[p] -= 1
            _fen_add(fen, p, -1, n)
            ist[INCX] += 1
            if p <= b:
                vbid -= 1
                if vbid == 0:
                    crisis = True
                elif p == b and queues[b] == 0:
                    b2 = b - 1
                    while queues[b2] == 0:
                        b2 -= 1
                    dmid = 0.5 * (b2 - b)
                    b = b2
            else:
                vask -= 1
                if vask == 0:
                    crisis = True
                elif p == a and queues[a] == 0:
                    a2 = a + 1
                    while queues[a2] == 0:
                        a2 += 1
                    dmid = 0.5 * (a2 - a)
                    a = a2

        ist[INEV] += 1
        if dmid != 0.0:
            x += sqrt2b * dmid
            fst[FRVAR] += dmid * dmid
        if crisis:
            status = DONE_CRISIS
            break
        s = a - b
        if s > max_s:
            max_s = s
            if record and irh < rh_t.shape[0]:
                rh_t[irh] = t
                rh_s[irh] = s
                irh += 1
        if ist[INEV] >= budget:
            status = DONE_BUDGET
            break

    ist[IB] = b
    ist[IA] = a
    ist[IVBID] = vbid
    ist[IVASK] = vask
    ist[ISAMP] = isamp
    ist[IRH] = irh
    ist[IMAXS] = max_s
    fst[FT] = t
    fst[FX] = x
    return status, ui
