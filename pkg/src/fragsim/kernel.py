"""Compiled fast path for one simulation run.

Same model and same random draw sequence as :mod:`fragsim.simulation`, but
with flat arrays instead of objects. Each ZI trader holds at most one resting
order, so a book is just the set of traders whose resting order sits on that
venue; best prices come from a linear scan (price first, then order id).
The arbitrageur never rests an order. Results are bit-identical to the
reference driver for the same generator state, which the test suite checks.
"""

from __future__ import annotations

import numba
import numpy as np

from .metrics import NULL, RunLogs
from .security import decay_table, round_half_away
from .simulation import RunSetup, SimulationConfig, prepare_run
from .traders import STRATEGIES, GreedyVariant

_round = numba.njit(cache=True)(round_half_away)

BUY = 0
SELL = 1

VARIANT_CODES = {
    GreedyVariant.BESTGUESS: 0,
    GreedyVariant.MARKETSIM: 1,
    GreedyVariant.MARKETSIM_BUG: 2,
}

# int64 scalar state slots
S_SEQ = 0
S_OID = 1
S_NTRADE = 2
S_NBBO_N = 3
S_BBO_N = 4
S_HEAP_N = 5
S_LA_CASH = 6
S_LA_POS = 7
S_NOPP = 8
S_DISPATCHED = 9
N_SLOTS = 10


@numba.njit(cache=True)
def _grow(a):
    out = np.empty((a.shape[0] * 2,) + a.shape[1:], dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@numba.njit(cache=True, inline="always")
def _swap(heap, a, b):
    for c in range(heap.shape[1]):
        tmp = heap[a, c]
        heap[a, c] = heap[b, c]
        heap[b, c] = tmp


@numba.njit(cache=True, inline="always")
def _heap_push(heap, st, row):
    n = st[S_HEAP_N]
    if n == heap.shape[0]:
        heap = _grow(heap)
    heap[n] = row
    st[S_HEAP_N] = n + 1
    i = n
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent, 0] < heap[i, 0] or (heap[parent, 0] == heap[i, 0] and heap[parent, 1] < heap[i, 1]):
            break
        _swap(heap, parent, i)
        i = parent
    return heap


@numba.njit(cache=True)
def _heap_pop(heap, st, top):
    n = st[S_HEAP_N] - 1
    top[:] = heap[0]
    heap[0] = heap[n]
    st[S_HEAP_N] = n
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        child = left
        right = left + 1
        if right < n and (
            heap[right, 0] < heap[left, 0] or (heap[right, 0] == heap[left, 0] and heap[right, 1] < heap[left, 1])
        ):
            child = right
        if heap[i, 0] < heap[child, 0] or (heap[i, 0] == heap[child, 0] and heap[i, 1] < heap[child, 1]):
            break
        _swap(heap, child, i)
        i = child


@numba.njit(cache=True)
def _best(rest, ex, side):
    """Index of the best resting ZI order on ``ex``/``side``, or -1, by full scan.

    rest columns: venue, side, price, order id, submit time.
    """
    best = -1
    for i in range(rest.shape[0]):
        if rest[i, 0] != ex or rest[i, 1] != side:
            continue
        if best < 0:
            best = i
        elif side == BUY:
            if rest[i, 2] > rest[best, 2] or (rest[i, 2] == rest[best, 2] and rest[i, 3] < rest[best, 3]):
                best = i
        elif rest[i, 2] < rest[best, 2] or (rest[i, 2] == rest[best, 2] and rest[i, 3] < rest[best, 3]):
            best = i
    return best


@numba.njit(cache=True, inline="always")
def _rest_add(rest, best, i, ex, side, price, oid, t):
    rest[i, 0] = ex
    rest[i, 1] = side
    rest[i, 2] = price
    rest[i, 3] = oid
    rest[i, 4] = t
    # an equal price never displaces the incumbent, which has the lower id
    b = best[side, ex]
    if b < 0 or (side == BUY and price > rest[b, 2]) or (side == SELL and price < rest[b, 2]):
        best[side, ex] = i


@numba.njit(cache=True, inline="always")
def _rest_remove(rest, best, i):
    ex = rest[i, 0]
    side = rest[i, 1]
    rest[i, 0] = NULL
    rest[i, 1] = NULL
    if best[side, ex] == i:
        best[side, ex] = _best(rest, ex, side)


@numba.njit(cache=True, inline="always")
def _consolidate(bid, ask, n_ex, out):
    """out = (bid, bid_ex, ask, ask_ex); strict comparisons keep ties on the earlier venue."""
    out[0] = NULL
    out[1] = NULL
    out[2] = NULL
    out[3] = NULL
    for ex in range(n_ex):
        if bid[ex] != NULL and (out[0] == NULL or bid[ex] > out[0]):
            out[0] = bid[ex]
            out[1] = ex
        if ask[ex] != NULL and (out[2] == NULL or ask[ex] < out[2]):
            out[2] = ask[ex]
            out[3] = ex


@numba.njit(cache=True, inline="always")
def _publish(ex, t, rest, best, bbo, view, nbbo, st, latency, n_ex, bbo_log, nbbo_log, heap):
    """Recompute and log the BBO of ``ex``, then hand it to the SIP."""
    b = best[BUY, ex]
    a = best[SELL, ex]
    bbo[0, ex] = rest[b, 2] if b >= 0 else NULL
    bbo[1, ex] = rest[a, 2] if a >= 0 else NULL
    k = st[S_BBO_N]
    if k == bbo_log.shape[0]:
        bbo_log = _grow(bbo_log)
    bbo_log[k, 0] = ex
    bbo_log[k, 1] = bbo[0, ex]
    bbo_log[k, 2] = bbo[1, ex]
    st[S_BBO_N] = k + 1
    if latency == 0:
        nbbo_log = _apply_nbbo(ex, bbo[0, ex], bbo[1, ex], view, nbbo, st, n_ex, nbbo_log)
    else:
        row = np.empty(6, dtype=np.int64)
        row[0] = t + latency
        row[1] = st[S_SEQ]
        row[2] = 1
        row[3] = ex
        row[4] = bbo[0, ex]
        row[5] = bbo[1, ex]
        st[S_SEQ] += 1
        heap = _heap_push(heap, st, row)
    return bbo_log, nbbo_log, heap


@numba.njit(cache=True, inline="always")
def _apply_nbbo(ex, bid, ask, view, nbbo, st, n_ex, nbbo_log):
    view[0, ex] = bid
    view[1, ex] = ask
    _consolidate(view[0], view[1], n_ex, nbbo)
    k = st[S_NBBO_N]
    if k == nbbo_log.shape[0]:
        nbbo_log = _grow(nbbo_log)
    nbbo_log[k, 0] = nbbo[0]
    nbbo_log[k, 1] = nbbo[2]
    st[S_NBBO_N] = k + 1
    return nbbo_log


@numba.njit(cache=True, inline="always")
def _record_trade(trades, st, t, price, buy_submit, sell_submit, buyer_la, seller_la):
    k = st[S_NTRADE]
    if k == trades.shape[0]:
        trades = _grow(trades)
    trades[k, 0] = t
    trades[k, 1] = buy_submit
    trades[k, 2] = sell_submit
    trades[k, 3] = buyer_la
    trades[k, 4] = seller_la
    trades[k, 5] = price
    st[S_NTRADE] = k + 1
    return trades


@numba.njit(cache=True, inline="always")
def _fill_zi(i, side, price, pos, cash, q_max):
    if side == BUY:
        pos[i] += 1
        cash[i] -= price
    else:
        pos[i] -= 1
        cash[i] += price
    if abs(pos[i]) > q_max:
        raise RuntimeError("ZI position beyond limit")


@numba.njit(cache=True)
def _simulate(
    rng,
    horizon,
    n_ex,
    latency,
    has_la,
    alpha,
    variant,
    greedy,
    rate,
    r_bar,
    q_max,
    values,
    decay,
    benefits,
    first_arrivals,
    r_min,
    r_max,
    eta,
):
    n = first_arrivals.shape[0]
    st = np.zeros(N_SLOTS, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    cash = np.zeros(n, dtype=np.int64)
    rest = np.full((n, 5), NULL, dtype=np.int64)
    best = np.full((2, n_ex), NULL, dtype=np.int64)  # trader index of each venue's best order
    primary = np.empty(n, dtype=np.int64)
    for i in range(n):
        primary[i] = i % n_ex

    bbo = np.full((2, n_ex), NULL, dtype=np.int64)
    view = np.full((2, n_ex), NULL, dtype=np.int64)
    nbbo = np.full(4, NULL, dtype=np.int64)
    la_best = np.full(4, NULL, dtype=np.int64)

    cap = 1024
    heap = np.empty((max(cap, 2 * n), 6), dtype=np.int64)
    bbo_log = np.empty((cap, 3), dtype=np.int64)
    nbbo_log = np.empty((cap, 2), dtype=np.int64)
    trades = np.empty((cap, 6), dtype=np.int64)
    opps = np.empty((64, 2), dtype=np.int64)

    row = np.empty(6, dtype=np.int64)
    ev = np.empty(6, dtype=np.int64)
    for i in range(n):
        row[0] = first_arrivals[i]
        row[1] = st[S_SEQ]
        row[2] = 0
        row[3] = i
        row[4] = 0
        row[5] = 0
        st[S_SEQ] += 1
        heap = _heap_push(heap, st, row)

    scale = 1.0 / rate

    while st[S_HEAP_N] > 0 and heap[0, 0] <= horizon:
        _heap_pop(heap, st, ev)
        t = ev[0]
        st[S_DISPATCHED] += 1
        # venue of a top-level publication still owed an arbitrage check
        pending_ex = NULL
        if ev[2] == 1:
            nbbo_log = _apply_nbbo(ev[3], ev[4], ev[5], view, nbbo, st, n_ex, nbbo_log)
            continue

        i = ev[3]
        gap = int(np.ceil(rng.exponential(scale)))
        if gap < 1:
            gap = 1
        row[0] = t + gap
        row[1] = st[S_SEQ]
        row[2] = 0
        row[3] = i
        row[4] = 0
        row[5] = 0
        st[S_SEQ] += 1
        heap = _heap_push(heap, st, row)

        for step in range(2):
            if step == 0:
                # withdraw the outstanding order, if it is still resting
                if rest[i, 0] == NULL:
                    continue
                ex = rest[i, 0]
                _rest_remove(rest, best, i)
                bbo_log, nbbo_log, heap = _publish(ex, t, rest, best, bbo, view, nbbo, st, latency, n_ex, bbo_log, nbbo_log, heap)
                pending_ex = ex
            else:
                side = rng.integers(0, 2)
                delta = 1 if side == BUY else -1
                if abs(pos[i] + delta) > q_max:
                    break
                q = pos[i]
                d = decay[horizon - t]
                estimate = _round((1.0 - d) * r_bar + d * values[t])
                if side == BUY:
                    marginal = benefits[i, q + q_max]
                else:
                    marginal = benefits[i, q + q_max - 1]
                v = _round(estimate + marginal)
                if side == BUY:
                    p = rng.integers(v - r_max[i], v - r_min[i], endpoint=True)
                else:
                    p = rng.integers(v + r_min[i], v + r_max[i], endpoint=True)
                if p < 0:
                    p = 0

                pex = primary[i]
                b_bid = bbo[0, pex]
                b_ask = bbo[1, pex]
                n_bid = nbbo[0]
                n_ask = nbbo[2]
                if greedy:
                    requested = abs(v - p)
                    if variant == 0:
                        max_bid = n_bid
                        if b_bid != NULL and (max_bid == NULL or b_bid >= max_bid):
                            max_bid = b_bid
                        min_ask = n_ask
                        if b_ask != NULL and (min_ask == NULL or b_ask <= min_ask):
                            min_ask = b_ask
                        if side == BUY:
                            if min_ask != NULL and requested * eta[i] <= v - min_ask:
                                p = min_ask
                        elif max_bid != NULL and requested * eta[i] <= max_bid - v:
                            p = max_bid
                    elif side == BUY:
                        if b_ask != NULL and requested * eta[i] <= v - b_ask:
                            p = v
                    elif b_bid != NULL and requested * eta[i] <= b_bid - v:
                        p = v

                venue = pex
                if side == BUY or variant == 2:
                    if n_ask != NULL and (b_ask == NULL or n_ask < b_ask) and p >= n_ask:
                        venue = nbbo[3]
                elif n_bid != NULL and (b_bid == NULL or n_bid > b_bid) and p <= n_bid:
                    venue = nbbo[1]

                oid = st[S_OID]
                st[S_OID] += 1
                contra = best[1 - side, venue]
                crosses = contra >= 0 and (
                    (side == BUY and rest[contra, 2] <= p) or (side == SELL and rest[contra, 2] >= p)
                )
                if crosses:
                    price = rest[contra, 2]
                    rest_time = rest[contra, 4]
                    _rest_remove(rest, best, contra)
                    _fill_zi(contra, 1 - side, price, pos, cash, q_max)
                    _fill_zi(i, side, price, pos, cash, q_max)
                    if side == BUY:
                        trades = _record_trade(trades, st, t, price, t, rest_time, 0, 0)
                    else:
                        trades = _record_trade(trades, st, t, price, rest_time, t, 0, 0)
                else:
                    _rest_add(rest, best, i, venue, side, p, oid, t)
                bbo_log, nbbo_log, heap = _publish(venue, t, rest, best, bbo, view, nbbo, st, latency, n_ex, bbo_log, nbbo_log, heap)
                pending_ex = venue

            if has_la and pending_ex != NULL:
                # arbitrageur reacts to the publication just made (it is the last subscriber)
                _consolidate(bbo[0], bbo[1], n_ex, la_best)
                bid_s = la_best[0]
                ask_s = la_best[2]
                pending_ex = NULL
                if bid_s == NULL or ask_s == NULL or not bid_s > (1.0 + alpha) * ask_s:
                    continue
                total = bid_s + ask_s
                for leg in range(2):
                    lside = BUY if leg == 0 else SELL
                    lvenue = la_best[3] if leg == 0 else la_best[1]
                    lprice = total // 2 if leg == 0 else -(-total // 2)
                    st[S_OID] += 1
                    contra = best[1 - lside, lvenue]
                    if contra < 0 or (lside == BUY and rest[contra, 2] > lprice) or (
                        lside == SELL and rest[contra, 2] < lprice
                    ):
                        raise RuntimeError("arbitrage leg failed to execute")
                    price = rest[contra, 2]
                    rest_time = rest[contra, 4]
                    _rest_remove(rest, best, contra)
                    _fill_zi(contra, 1 - lside, price, pos, cash, q_max)
                    if lside == BUY:
                        st[S_LA_POS] += 1
                        st[S_LA_CASH] -= price
                        trades = _record_trade(trades, st, t, price, t, rest_time, 1, 0)
                    else:
                        st[S_LA_POS] -= 1
                        st[S_LA_CASH] += price
                        trades = _record_trade(trades, st, t, price, rest_time, t, 0, 1)
                    bbo_log, nbbo_log, heap = _publish(
                        lvenue, t, rest, best, bbo, view, nbbo, st, latency, n_ex, bbo_log, nbbo_log, heap
                    )
                if st[S_LA_POS] != 0:
                    raise RuntimeError("arbitrageur not flat after a round trip")
                k = st[S_NOPP]
                if k == opps.shape[0]:
                    opps = _grow(opps)
                opps[k, 0] = bid_s
                opps[k, 1] = ask_s
                st[S_NOPP] = k + 1

    return (
        st,
        pos,
        cash,
        bbo_log[: st[S_BBO_N]].copy(),
        nbbo_log[: st[S_NBBO_N]].copy(),
        trades[: st[S_NTRADE]].copy(),
        opps[: st[S_NOPP]].copy(),
    )


class KernelRun:
    def __init__(self, logs: RunLogs, dispatched: int, opportunities: np.ndarray, setup: RunSetup):
        self.logs = logs
        self.dispatched = dispatched
        self.opportunities = opportunities
        self.setup = setup


def run_kernel(config: SimulationConfig, mixture, rng: np.random.Generator) -> KernelRun:
    setup = prepare_run(config, mixture, rng)
    rows = [STRATEGIES[int(s)] for s in setup.strategies]
    st, pos, cash, bbo_log, nbbo_log, trades, opps = _simulate(
        rng,
        config.horizon,
        config.n_exchanges,
        config.latency,
        config.la,
        config.alpha,
        VARIANT_CODES[config.variant],
        config.greedy,
        config.arrival_rate,
        float(config.r_bar),
        config.q_max,
        setup.series.values,
        decay_table(config.kappa, config.horizon),
        setup.benefits,
        setup.first_arrivals,
        np.array([s.r_min for s in rows], dtype=np.int64),
        np.array([s.r_max for s in rows], dtype=np.int64),
        np.array([s.eta for s in rows], dtype=np.float64),
    )
    logs = RunLogs(
        nbbo_bid=nbbo_log[:, 0],
        nbbo_ask=nbbo_log[:, 1],
        bbo_bid=[bbo_log[bbo_log[:, 0] == ex, 1] for ex in range(config.n_exchanges)],
        bbo_ask=[bbo_log[bbo_log[:, 0] == ex, 2] for ex in range(config.n_exchanges)],
        trade_time=trades[:, 0],
        buy_submit=trades[:, 1],
        sell_submit=trades[:, 2],
        buyer_is_la=trades[:, 3].astype(bool),
        seller_is_la=trades[:, 4].astype(bool),
        trade_price=trades[:, 5],
        zi_cash=cash,
        zi_position=pos,
        benefits=setup.benefits,
        q_max=config.q_max,
        la_cash=int(st[S_LA_CASH]),
        la_position=int(st[S_LA_POS]),
        r_terminal=setup.series.terminal,
    )
    return KernelRun(logs, int(st[S_DISPATCHED]), opps, setup)
