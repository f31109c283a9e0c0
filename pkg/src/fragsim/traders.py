"""Zero-intelligence background traders and the latency arbitrageur."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np

from .engine import EventKind
from .exchange import LimitOrder, Quote, Side
from .security import round_half_away
from .sip import EMPTY_NBBO, NbboQuote, consolidate

if TYPE_CHECKING:
    from .simulation import Market


class GreedyVariant(str, Enum):
    """How a ZI trader takes an observed quote instead of posting.

    BESTGUESS looks at both the primary BBO and the NBBO and prices at the
    quote. MARKETSIM looks at the primary BBO only and prices at its own
    valuation. MARKETSIM_BUG additionally routes every order with the buy-side
    branch of the routing rule.
    """

    BESTGUESS = "bestguess"
    MARKETSIM = "marketsim"
    MARKETSIM_BUG = "marketsim-bug"


@dataclass(frozen=True)
class ZiStrategy:
    r_min: int
    r_max: int
    eta: float

    def __post_init__(self):
        if not 0 <= self.r_min <= self.r_max:
            raise ValueError(f"need 0 <= r_min <= r_max, got {self.r_min}, {self.r_max}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")


# ZI_1 .. ZI_11, zero-indexed
STRATEGIES: tuple[ZiStrategy, ...] = (
    ZiStrategy(0, 125, 1.0),
    ZiStrategy(0, 250, 1.0),
    ZiStrategy(0, 500, 1.0),
    ZiStrategy(250, 500, 1.0),
    ZiStrategy(0, 1000, 1.0),
    ZiStrategy(500, 1000, 0.4),
    ZiStrategy(500, 1000, 1.0),
    ZiStrategy(0, 1500, 0.6),
    ZiStrategy(1000, 2000, 0.4),
    ZiStrategy(0, 2500, 0.4),
    ZiStrategy(0, 2500, 1.0),
)


class PrivateBenefits:
    """Marginal private benefits theta^q for q = -q_max+1 .. q_max, non-increasing in q."""

    def __init__(self, values: np.ndarray, q_max: int):
        values = np.asarray(values, dtype=np.float64)
        if len(values) != 2 * q_max:
            raise ValueError(f"expected {2 * q_max} values, got {len(values)}")
        if np.any(np.diff(values) > 0):
            raise ValueError("private benefits must be sorted non-increasing")
        self.values = values
        self.q_max = q_max

    @classmethod
    def draw(cls, rng: np.random.Generator, q_max: int, pv_var: float) -> "PrivateBenefits":
        raw = rng.normal(0.0, math.sqrt(pv_var), size=2 * q_max)
        return cls(np.sort(raw)[::-1].copy(), q_max)

    def theta(self, q: int) -> float:
        if not -self.q_max < q <= self.q_max:
            raise IndexError(f"theta^{q} undefined for q_max={self.q_max}")
        return float(self.values[q + self.q_max - 1])


def interarrival(rng: np.random.Generator, rate: float) -> int:
    """Ceiling of an exponential gap with mean 1/rate, never below one tick."""
    return max(1, math.ceil(rng.exponential(1.0 / rate)))


def compute_valuation(estimate: int, benefits: PrivateBenefits, q: int, side: Side) -> int:
    marginal = benefits.theta(q + 1) if side == Side.BUY else benefits.theta(q)
    return round_half_away(estimate + marginal)


def draw_shaded_price(v: int, strategy: ZiStrategy, side: Side, rng: np.random.Generator) -> int:
    if side == Side.BUY:
        p = rng.integers(v - strategy.r_max, v - strategy.r_min, endpoint=True)
    else:
        p = rng.integers(v + strategy.r_min, v + strategy.r_max, endpoint=True)
    return max(0, int(p))


def best_observed(bbo: Quote, nbbo: NbboQuote) -> tuple[Optional[int], Optional[int]]:
    """Best bid and ask visible to a trader; the primary quote wins ties."""
    max_bid, min_ask = nbbo.bid, nbbo.ask
    if bbo.bid is not None and (max_bid is None or bbo.bid >= max_bid):
        max_bid = bbo.bid
    if bbo.ask is not None and (min_ask is None or bbo.ask <= min_ask):
        min_ask = bbo.ask
    return max_bid, min_ask


def apply_greedy(
    variant: GreedyVariant,
    side: Side,
    v: int,
    p: int,
    eta: float,
    bbo: Quote,
    nbbo: NbboQuote,
) -> int:
    """Take an observed quote when it yields at least ``eta`` of the requested surplus."""
    requested = abs(v - p)
    if variant == GreedyVariant.BESTGUESS:
        max_bid, min_ask = best_observed(bbo, nbbo)
        if side == Side.BUY:
            if min_ask is not None and requested * eta <= v - min_ask:
                return min_ask
        elif max_bid is not None and requested * eta <= max_bid - v:
            return max_bid
        return p
    if side == Side.BUY:
        if bbo.ask is not None and requested * eta <= v - bbo.ask:
            return v
    elif bbo.bid is not None and requested * eta <= bbo.bid - v:
        return v
    return p


def route_order(
    variant: GreedyVariant,
    side: Side,
    price: int,
    primary: int,
    bbo: Quote,
    nbbo: NbboQuote,
) -> int:
    """Venue for an order: the NBBO venue only when it is strictly better and crossable.

    Any comparison against an empty NBBO side is false. The bugged variant
    runs the buy branch for every order, whatever its side.
    """
    if side == Side.BUY or variant == GreedyVariant.MARKETSIM_BUG:
        better = nbbo.ask is not None and (bbo.ask is None or nbbo.ask < bbo.ask)
        crosses = nbbo.ask is not None and price >= nbbo.ask
        alt = nbbo.ask_exchange
    else:
        better = nbbo.bid is not None and (bbo.bid is None or nbbo.bid > bbo.bid)
        crosses = nbbo.bid is not None and price <= nbbo.bid
        alt = nbbo.bid_exchange
    return alt if better and crosses else primary


def zi_terminal_surplus(cash: float, q: int, r_terminal: float, benefits: PrivateBenefits) -> float:
    """Cash plus public and private value of the terminal position."""
    surplus = cash + q * r_terminal
    private = 0.0
    if q > 0:
        for j in range(1, q + 1):
            private += benefits.theta(j)
    elif q < 0:
        for j in range(q + 1, 1):
            private -= benefits.theta(j)
    return surplus + private


class ZiTrader:
    kind = "ZI"

    def __init__(self, trader_id: int, primary: int, strategy: ZiStrategy, benefits: PrivateBenefits):
        self.id = trader_id
        self.primary = primary
        self.strategy = strategy
        self.benefits = benefits
        self.position = 0
        self.cash = 0
        self.transactions = 0
        self.outstanding: dict[int, int] = {}  # order id -> venue
        self.bbo = Quote(None, None, primary, 0)
        self.nbbo = EMPTY_NBBO

    def on_bbo(self, quote: Quote) -> None:
        self.bbo = quote

    def on_nbbo(self, nbbo: NbboQuote) -> None:
        self.nbbo = nbbo

    def on_fill(self, order: LimitOrder, price: int, t: int) -> None:
        self.outstanding.pop(order.id, None)
        if order.side == Side.BUY:
            self.position += 1
            self.cash -= price
        else:
            self.position -= 1
            self.cash += price
        self.transactions += 1
        if abs(self.position) > self.benefits.q_max:
            raise RuntimeError(f"trader {self.id} position {self.position} beyond limit")

    def arrive(self, t: int, market: "Market") -> Optional[LimitOrder]:
        """One trading turn. RNG draws happen in a fixed order: gap, side, price."""
        rng = market.rng
        market.queue.schedule(t + interarrival(rng, market.config.arrival_rate), EventKind.ZI_ARRIVAL, self.id)

        for order_id, venue in list(self.outstanding.items()):
            market.exchanges[venue].withdraw_order(order_id, t)
        self.outstanding.clear()

        side = Side(int(rng.integers(0, 2)))
        step = 1 if side == Side.BUY else -1
        if abs(self.position + step) > self.benefits.q_max:
            return None

        v = compute_valuation(market.series.estimate_terminal(t), self.benefits, self.position, side)
        p = draw_shaded_price(v, self.strategy, side, rng)
        variant = market.config.variant
        if market.config.greedy:
            p = apply_greedy(variant, side, v, p, self.strategy.eta, self.bbo, self.nbbo)
        venue = route_order(variant, side, p, self.primary, self.bbo, self.nbbo)

        order = LimitOrder(market.next_order_id(), self, side, p, t, venue)
        self.outstanding[order.id] = venue
        market.exchanges[venue].submit_order(order, t)
        return order


class LaTrader:
    """Zero-latency cross-venue arbitrageur; flat whenever it is not mid-strategy."""

    kind = "LA"

    def __init__(self, trader_id: int, alpha: float, exchange_ids, market: "Market"):
        self.id = trader_id
        self.alpha = alpha
        self.exchange_ids = list(exchange_ids)
        self.views = {ex: Quote(None, None, ex, 0) for ex in self.exchange_ids}
        self.market = market
        self.cash = 0
        self.position = 0
        self.transactions = 0
        self.executing = False
        self.opportunities: list[tuple[int, int]] = []  # (BID*, ASK*) acted on

    def on_fill(self, order: LimitOrder, price: int, t: int) -> None:
        if order.side == Side.BUY:
            self.position += 1
            self.cash -= price
        else:
            self.position -= 1
            self.cash += price
        self.transactions += 1

    def on_bbo(self, quote: Quote) -> None:
        self.views[quote.exchange] = quote
        if self.executing:
            return
        best = consolidate([self.views[ex] for ex in self.exchange_ids], quote.time)
        if best.bid is None or best.ask is None or not best.bid > (1 + self.alpha) * best.ask:
            return
        t = quote.time
        total = best.bid + best.ask
        self.executing = True
        market = self.market
        buy = LimitOrder(market.next_order_id(), self, Side.BUY, total // 2, t, best.ask_exchange)
        bought = market.exchanges[best.ask_exchange].submit_order(buy, t)
        sell = LimitOrder(market.next_order_id(), self, Side.SELL, -(-total // 2), t, best.bid_exchange)
        sold = market.exchanges[best.bid_exchange].submit_order(sell, t)
        self.executing = False
        if bought is None or sold is None or self.position != 0:
            raise RuntimeError(f"arbitrage legs failed to execute at t={t}")
        self.opportunities.append((best.bid, best.ask))
