"""Continuous double auction venue with a price-time priority limit order book."""

from __future__ import annotations

import csv
import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Protocol


class Side(IntEnum):
    BUY = 0
    SELL = 1


@dataclass(frozen=True, slots=True)
class Quote:
    """Best bid and offer of one exchange. ``None`` marks an empty side."""

    bid: Optional[int]
    ask: Optional[int]
    exchange: int
    time: int


class Owner(Protocol):
    id: int
    kind: str

    def on_fill(self, order: "LimitOrder", price: int, t: int) -> None: ...


@dataclass(slots=True, eq=False)
class LimitOrder:
    id: int
    owner: Owner
    side: Side
    price: int
    submit_time: int
    venue: int
    quantity: int = 1

    @property
    def trader(self) -> int:
        return self.owner.id


@dataclass(frozen=True, slots=True)
class Trade:
    time: int
    venue: int
    price: int
    buy_id: int
    sell_id: int
    buyer: int
    seller: int
    buyer_kind: str
    seller_kind: str
    buy_submit: int
    sell_submit: int


class BookError(RuntimeError):
    pass


class OrderBook:
    """Resting orders: id -> order, plus FIFO queues per price on each side.

    Best prices come from heaps with lazy deletion of emptied levels.
    """

    def __init__(self):
        self.orders: dict[int, LimitOrder] = {}
        self.bids: dict[int, deque[int]] = {}
        self.asks: dict[int, deque[int]] = {}
        self._bid_heap: list[int] = []  # negated prices
        self._ask_heap: list[int] = []

    def __len__(self):
        return len(self.orders)

    def best_bid(self) -> Optional[int]:
        heap = self._bid_heap
        while heap and -heap[0] not in self.bids:
            heapq.heappop(heap)
        return -heap[0] if heap else None

    def best_ask(self) -> Optional[int]:
        heap = self._ask_heap
        while heap and heap[0] not in self.asks:
            heapq.heappop(heap)
        return heap[0] if heap else None

    def add(self, order: LimitOrder) -> None:
        levels = self.bids if order.side == Side.BUY else self.asks
        queue = levels.get(order.price)
        if queue is None:
            queue = levels[order.price] = deque()
            if order.side == Side.BUY:
                heapq.heappush(self._bid_heap, -order.price)
            else:
                heapq.heappush(self._ask_heap, order.price)
        queue.append(order.id)
        self.orders[order.id] = order

    def remove(self, order_id: int) -> Optional[LimitOrder]:
        order = self.orders.pop(order_id, None)
        if order is None:
            return None
        levels = self.bids if order.side == Side.BUY else self.asks
        queue = levels[order.price]
        if queue[0] == order_id:
            queue.popleft()
        else:
            queue.remove(order_id)
        if not queue:
            del levels[order.price]
        return order

    def best_contra(self, order: LimitOrder) -> Optional[LimitOrder]:
        """Oldest resting order at the best contra price that crosses ``order``."""
        if order.side == Side.BUY:
            q = self.best_ask()
            if q is None or q > order.price:
                return None
            return self.orders[self.asks[q][0]]
        q = self.best_bid()
        if q is None or q < order.price:
            return None
        return self.orders[self.bids[q][0]]


BboSubscriber = Callable[[Quote], None]
TradeSink = Callable[[Trade], None]


class Exchange:
    """One CDA venue.

    Every book change (add, withdraw, trade) ends with exactly one BBO
    publication, delivered synchronously to subscribers in subscription order.
    An incoming order that trades counts as a single change.
    """

    def __init__(self, exchange_id: int, on_trade: TradeSink | None = None, order_log=None):
        self.id = exchange_id
        self.book = OrderBook()
        self.subscribers: list[BboSubscriber] = []
        self.quote = Quote(None, None, exchange_id, 0)
        self._on_trade = on_trade
        self._seen_ids: set[int] = set()
        self._log = order_log
        self.log: list[Quote] = []  # every publication, in order

    def subscribe(self, callback: BboSubscriber) -> None:
        self.subscribers.append(callback)

    def submit_order(self, order: LimitOrder, t: int) -> Optional[Trade]:
        """Match ``order`` against the book or rest it; returns the trade if any."""
        if order.quantity != 1:
            raise BookError("all orders are for a single unit")
        if order.price < 0:
            raise BookError(f"negative price {order.price}")
        if order.id in self._seen_ids:
            raise BookError(f"duplicate order id {order.id}")
        self._seen_ids.add(order.id)
        order.venue = self.id
        if self._log is not None:
            self._log.record(t, self.id, "ADD", order)

        resting = self.book.best_contra(order)
        trade = None
        if resting is None:
            self.book.add(order)
        else:
            self.book.remove(resting.id)
            buy, sell = (order, resting) if order.side == Side.BUY else (resting, order)
            trade = Trade(
                time=t,
                venue=self.id,
                price=resting.price,
                buy_id=buy.id,
                sell_id=sell.id,
                buyer=buy.owner.id,
                seller=sell.owner.id,
                buyer_kind=buy.owner.kind,
                seller_kind=sell.owner.kind,
                buy_submit=buy.submit_time,
                sell_submit=sell.submit_time,
            )
            if self._log is not None:
                self._log.record(t, self.id, "TRADE", resting, exec_price=resting.price)
                self._log.record(t, self.id, "TRADE", order, exec_price=resting.price)
            # receipts go out before the quote so downstream agents see settled positions
            resting.owner.on_fill(resting, resting.price, t)
            order.owner.on_fill(order, resting.price, t)
            if self._on_trade is not None:
                self._on_trade(trade)
        self.publish_bbo(t)
        return trade

    def withdraw_order(self, order_id: int, t: int) -> bool:
        """Remove a resting order. Unknown or already-filled ids are ignored."""
        order = self.book.remove(order_id)
        if order is None:
            return False
        if self._log is not None:
            self._log.record(t, self.id, "WITHDRAW", order)
        self.publish_bbo(t)
        return True

    def publish_bbo(self, t: int) -> Quote:
        self.quote = Quote(self.book.best_bid(), self.book.best_ask(), self.id, t)
        quote = self.quote
        self.log.append(quote)
        for callback in self.subscribers:
            callback(quote)
        return quote


@dataclass
class OrderLog:
    """Collects ADD / WITHDRAW / TRADE rows for the optional order-trade CSV."""

    rows: list[tuple] = field(default_factory=list)

    COLUMNS = ("time", "venue", "event", "order_id", "trader_id", "side", "price", "exec_price")

    def record(self, t: int, venue: int, event: str, order: LimitOrder, exec_price=None) -> None:
        self.rows.append(
            (t, venue, event, order.id, order.owner.id, order.side.name, order.price,
             "" if exec_price is None else exec_price)
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            writer.writerows(self.rows)
