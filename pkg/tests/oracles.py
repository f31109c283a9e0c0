"""Independent slow implementations used as test oracles."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


class NaiveBook:
    """Order book kept as a flat list; matching scans every resting order."""

    def __init__(self):
        self.resting: list[tuple[int, int, int]] = []  # (order id, side, price); list order = arrival order
        self.trades: list[tuple[int, int, int]] = []  # (incoming id, resting id, price)

    def submit(self, oid: int, side: int, price: int) -> None:
        best = None
        for pos, (rid, rside, rprice) in enumerate(self.resting):
            if rside == side:
                continue
            crosses = rprice <= price if side == 0 else rprice >= price
            if not crosses:
                continue
            if best is None:
                best = pos
                continue
            bprice = self.resting[best][2]
            better = rprice < bprice if side == 0 else rprice > bprice
            if better:
                best = pos
        if best is None:
            self.resting.append((oid, side, price))
        else:
            rid, _, rprice = self.resting.pop(best)
            self.trades.append((oid, rid, rprice))

    def withdraw(self, oid: int) -> None:
        self.resting = [o for o in self.resting if o[0] != oid]

    def bbo(self):
        bids = [p for _, s, p in self.resting if s == 0]
        asks = [p for _, s, p in self.resting if s == 1]
        return (max(bids) if bids else None, min(asks) if asks else None)


def bootstrap_oracle(groups, B: int, draw_size: int, levels, rng: np.random.Generator):
    """Resample one bootstrap sample at a time with exact rational means."""
    sums = [Fraction(int(sum(int(v) for v in g))) for g in groups]
    counts = [len(g) for g in groups]
    means = []
    for _ in range(B):
        pick = rng.integers(0, len(groups), size=draw_size)
        total = sum((sums[i] for i in pick), Fraction(0))
        n = sum(counts[i] for i in pick)
        means.append(float(total / n))
    ordered = sorted(means)
    ci = {}
    for level in levels:
        lo_rank = max(1, -(-((100 - level) * B) // 200))
        hi_rank = -(-((100 + level) * B) // 200)
        ci[level] = (ordered[lo_rank - 1], ordered[hi_rank - 1])
    mu = math.fsum(means) / B
    se = math.sqrt(math.fsum((m - mu) ** 2 for m in means) / (B - 1))
    return means, ci, se


def nbbo_brute_force(quotes):
    """quotes: list of (bid, ask) per exchange in configured order."""
    bid = bid_ex = ask = ask_ex = None
    for ex, (b, a) in enumerate(quotes):
        if b is not None and (bid is None or b > bid):
            bid, bid_ex = b, ex
        if a is not None and (ask is None or a < ask):
            ask, ask_ex = a, ex
    return bid, bid_ex, ask, ask_ex


class StubOwner:
    kind = "ZI"

    def __init__(self, owner_id: int):
        self.id = owner_id
        self.fills = []

    def on_fill(self, order, price, t):
        self.fills.append((order.id, price, t))


def random_stream_matches(rng: np.random.Generator, n_ops: int = 30, price_span: int = 6) -> bool:
    """Drive one random add/withdraw stream through both books; compare trades and quotes."""
    from fragsim.exchange import Exchange, LimitOrder, Side

    trades = []
    exchange = Exchange(0, on_trade=trades.append)
    naive = NaiveBook()
    owner = StubOwner(0)
    live: list[int] = []
    for oid in range(n_ops):
        if live and rng.random() < 0.25:
            victim = live.pop(int(rng.integers(0, len(live))))
            exchange.withdraw_order(victim, oid)
            naive.withdraw(victim)
        else:
            side = int(rng.integers(0, 2))
            price = int(rng.integers(100, 100 + price_span))
            exchange.submit_order(LimitOrder(oid, owner, Side(side), price, oid, 0), oid)
            naive.submit(oid, side, price)
            live.append(oid)
        if exchange.quote.bid != naive.bbo()[0] or exchange.quote.ask != naive.bbo()[1]:
            return False
    # ids are monotone, so the incoming order always has the larger id
    got = [(max(t.buy_id, t.sell_id), min(t.buy_id, t.sell_id), t.price) for t in trades]
    return got == naive.trades


def single_market_replay(n_zi, horizon, rate, q_max, rows, rng: np.random.Generator, mean=100_000):
    """Independent replay of a one-exchange run with zero shock and zero private-value variance.

    ``rows`` holds (r_min, r_max, eta) per trader. Every valuation is ``mean``,
    so the only randomness is timing, side and shading. Returns the dispatch
    trace, the trade list (time, buyer, seller, price) and per-trader (cash, q).
    """
    import heapq

    rng.normal(0.0, 0.0, size=horizon)
    for _ in range(n_zi):
        rng.normal(0.0, 0.0, size=2 * q_max)
    queue = []
    seq = 0
    for i in range(n_zi):
        heapq.heappush(queue, (max(1, math.ceil(rng.exponential(1.0 / rate))), seq, i))
        seq += 1

    book = NaiveBook()
    owner = {}
    mine = {i: [] for i in range(n_zi)}
    cash = [0] * n_zi
    pos = [0] * n_zi
    trades = []
    trace = []
    oid = 0
    while queue and queue[0][0] <= horizon:
        t, s, i = heapq.heappop(queue)
        trace.append(f"{t}\t{s}\tZI_ARRIVAL")
        heapq.heappush(queue, (t + max(1, math.ceil(rng.exponential(1.0 / rate))), seq, i))
        seq += 1
        for o in mine[i]:
            book.withdraw(o)
        mine[i] = []
        side = int(rng.integers(0, 2))
        if abs(pos[i] + (1 if side == 0 else -1)) > q_max:
            continue
        r_min, r_max, eta = rows[i]
        v = mean
        if side == 0:
            p = max(0, int(rng.integers(v - r_max, v - r_min, endpoint=True)))
        else:
            p = max(0, int(rng.integers(v + r_min, v + r_max, endpoint=True)))
        bid, ask = book.bbo()
        if side == 0 and ask is not None and eta * (v - p) <= v - ask:
            p = ask
        elif side == 1 and bid is not None and eta * (p - v) <= bid - v:
            p = bid
        owner[oid] = i
        n_before = len(book.trades)
        book.submit(oid, side, p)
        if len(book.trades) > n_before:
            _, rid, price = book.trades[-1]
            other = owner[rid]
            buyer, seller = (i, other) if side == 0 else (other, i)
            pos[buyer] += 1
            cash[buyer] -= price
            pos[seller] -= 1
            cash[seller] += price
            mine[other] = [o for o in mine[other] if o != rid]
            trades.append((t, buyer, seller, price))
        else:
            mine[i].append(oid)
        oid += 1
    return trace, trades, list(zip(cash, pos))
