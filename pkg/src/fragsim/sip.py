"""Security information processor: consolidates exchange BBOs into the NBBO."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .engine import Event, EventKind, EventQueue
from .exchange import Quote


@dataclass(frozen=True, slots=True)
class NbboQuote:
    bid: Optional[int]
    bid_exchange: Optional[int]
    ask: Optional[int]
    ask_exchange: Optional[int]
    time: int


EMPTY_NBBO = NbboQuote(None, None, None, None, 0)


def consolidate(views: Sequence[Quote], t: int) -> NbboQuote:
    """Best bid / ask across ``views`` in list order; ties go to the earlier venue."""
    bid = bid_ex = ask = ask_ex = None
    for q in views:
        if q.bid is not None and (bid is None or q.bid > bid):
            bid, bid_ex = q.bid, q.exchange
        if q.ask is not None and (ask is None or q.ask < ask):
            ask, ask_ex = q.ask, q.exchange
    return NbboQuote(bid, bid_ex, ask, ask_ex, t)


NbboSubscriber = Callable[[NbboQuote], None]


class Sip:
    """Keeps one (possibly stale) BBO view per exchange and publishes the NBBO.

    With ``latency == 0`` an incoming BBO is applied immediately, bypassing the
    scheduler. Otherwise the snapshot travels through the queue and is applied
    at ``t + latency``; updates that would land past the horizon never fire.
    """

    def __init__(self, exchange_ids: Sequence[int], latency: int, queue: EventQueue | None = None):
        if latency < 0:
            raise ValueError("latency must be non-negative")
        if latency > 0 and queue is None:
            raise ValueError("a positive latency needs an event queue")
        self.exchange_ids = list(exchange_ids)
        self.latency = latency
        self.queue = queue
        self.views = {ex: Quote(None, None, ex, 0) for ex in self.exchange_ids}
        self.nbbo = EMPTY_NBBO
        self.subscribers: list[NbboSubscriber] = []
        self.log: list[NbboQuote] = []

    def subscribe(self, callback: NbboSubscriber) -> None:
        self.subscribers.append(callback)

    def on_bbo_update(self, quote: Quote) -> None:
        if self.latency == 0:
            self.apply_nbbo_update(quote, quote.time)
        else:
            self.queue.schedule(quote.time + self.latency, EventKind.NBBO_UPDATE, quote)

    def handle_event(self, event: Event) -> None:
        self.apply_nbbo_update(event.payload, event.time)

    def apply_nbbo_update(self, snapshot: Quote, t: int) -> NbboQuote:
        self.views[snapshot.exchange] = snapshot
        nbbo = consolidate([self.views[ex] for ex in self.exchange_ids], t)
        self.nbbo = nbbo
        self.log.append(nbbo)
        for callback in self.subscribers:
            callback(nbbo)
        return nbbo

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("time", "bid", "bid_ex", "ask", "ask_ex"))
            for q in self.log:
                writer.writerow((q.time, _blank(q.bid), _blank(q.bid_exchange), _blank(q.ask), _blank(q.ask_exchange)))


def _blank(x):
    return "" if x is None else x
