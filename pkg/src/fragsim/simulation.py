"""Reference (object-level) wiring of one simulation run.

The fast kernel in :mod:`fragsim.kernel` reproduces this driver exactly; this
module is the readable version and the one the tests trace against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, TextIO

import numpy as np

from . import engine
from .engine import EventKind, EventQueue
from .exchange import Exchange, OrderLog, Trade
from .metrics import NULL, RunLogs
from .security import FundamentalParams, FundamentalSeries, generate_fundamental
from .sip import Sip
from .traders import STRATEGIES, GreedyVariant, LaTrader, PrivateBenefits, ZiTrader


@dataclass(frozen=True)
class SimulationConfig:
    n_zi: int
    arrival_rate: float
    kappa: float
    horizon: int
    n_exchanges: int = 1
    latency: int = 0
    la: bool = False
    r_bar: float = 100_000.0
    shock_var: float = 5_000_000.0
    pv_var: float = 5_000_000.0
    alpha: float = 0.001
    q_max: int = 10
    variant: GreedyVariant = GreedyVariant.BESTGUESS
    greedy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", GreedyVariant(self.variant))
        if self.n_zi < 1:
            raise ValueError("need at least one ZI trader")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.n_exchanges not in (1, 2):
            raise ValueError("only one or two exchanges are supported")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if self.la and self.n_exchanges < 2:
            raise ValueError("the arbitrageur needs two exchanges")
        if self.q_max < 1:
            raise ValueError("q_max must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        FundamentalParams(self.r_bar, self.kappa, self.shock_var, self.horizon)

    @property
    def fundamental(self) -> FundamentalParams:
        return FundamentalParams(self.r_bar, self.kappa, self.shock_var, self.horizon)

    def with_variant(self, variant) -> "SimulationConfig":
        return replace(self, variant=GreedyVariant(variant))


@dataclass
class RunSetup:
    """Draws made before the first event, in the fixed global order."""

    series: FundamentalSeries
    benefits: np.ndarray  # (n_zi, 2 * q_max), rows sorted descending
    first_arrivals: np.ndarray  # (n_zi,)
    strategies: np.ndarray  # strategy row (0-based) per trader


def prepare_run(config: SimulationConfig, mixture: Sequence[int], rng: np.random.Generator) -> RunSetup:
    """Shocks, then one Theta vector per trader, then one initial arrival per trader."""
    mixture = np.asarray(mixture, dtype=np.int64)
    if len(mixture) != config.n_zi:
        raise ValueError(f"mixture has {len(mixture)} entries, expected {config.n_zi}")
    if mixture.min() < 0 or mixture.max() >= len(STRATEGIES):
        raise ValueError("mixture entries must be strategy rows 0..10")
    series = generate_fundamental(config.fundamental, rng)
    benefits = np.empty((config.n_zi, 2 * config.q_max))
    for i in range(config.n_zi):
        benefits[i] = PrivateBenefits.draw(rng, config.q_max, config.pv_var).values
    scale = 1.0 / config.arrival_rate
    first = np.array([max(1, math.ceil(rng.exponential(scale))) for _ in range(config.n_zi)], dtype=np.int64)
    return RunSetup(series, benefits, first, mixture)


class Market:
    """All agents of one run plus the services traders call back into."""

    def __init__(
        self,
        config: SimulationConfig,
        setup: RunSetup,
        rng: np.random.Generator,
        order_log: Optional[OrderLog] = None,
    ):
        self.config = config
        self.rng = rng
        self.series = setup.series
        self.queue = EventQueue()
        self.trades: list[Trade] = []
        self._next_id = 0

        ex_ids = list(range(config.n_exchanges))
        self.exchanges = {ex: Exchange(ex, on_trade=self.trades.append, order_log=order_log) for ex in ex_ids}
        self.sip = Sip(ex_ids, config.latency, self.queue)
        for ex in ex_ids:
            self.exchanges[ex].subscribe(self.sip.on_bbo_update)

        self.traders: list[ZiTrader] = []
        for i in range(config.n_zi):
            strategy = STRATEGIES[int(setup.strategies[i])]
            trader = ZiTrader(i, i % config.n_exchanges, strategy, PrivateBenefits(setup.benefits[i], config.q_max))
            self.traders.append(trader)
            self.exchanges[trader.primary].subscribe(trader.on_bbo)
            self.sip.subscribe(trader.on_nbbo)

        self.la: Optional[LaTrader] = None
        if config.la:
            self.la = LaTrader(config.n_zi, config.alpha, ex_ids, self)
            for ex in ex_ids:
                self.exchanges[ex].subscribe(self.la.on_bbo)

        for i, t in enumerate(setup.first_arrivals.tolist()):
            self.queue.schedule(int(t), EventKind.ZI_ARRIVAL, i)

    def next_order_id(self) -> int:
        oid = self._next_id
        self._next_id += 1
        return oid

    def _on_arrival(self, event) -> None:
        self.traders[event.payload].arrive(event.time, self)

    def run(self, trace: TextIO | None = None) -> int:
        handlers = {EventKind.ZI_ARRIVAL: self._on_arrival, EventKind.NBBO_UPDATE: self.sip.handle_event}
        return engine.run(self.queue, handlers, self.config.horizon, trace)

    def logs(self) -> RunLogs:
        def side(values):
            return np.array([NULL if v is None else v for v in values], dtype=np.int64)

        trades = self.trades
        return RunLogs(
            nbbo_bid=side(q.bid for q in self.sip.log),
            nbbo_ask=side(q.ask for q in self.sip.log),
            bbo_bid=[side(q.bid for q in self.exchanges[ex].log) for ex in sorted(self.exchanges)],
            bbo_ask=[side(q.ask for q in self.exchanges[ex].log) for ex in sorted(self.exchanges)],
            trade_time=np.array([tr.time for tr in trades], dtype=np.int64),
            buy_submit=np.array([tr.buy_submit for tr in trades], dtype=np.int64),
            sell_submit=np.array([tr.sell_submit for tr in trades], dtype=np.int64),
            buyer_is_la=np.array([tr.buyer_kind == "LA" for tr in trades], dtype=bool),
            seller_is_la=np.array([tr.seller_kind == "LA" for tr in trades], dtype=bool),
            trade_price=np.array([tr.price for tr in trades], dtype=np.int64),
            zi_cash=np.array([z.cash for z in self.traders], dtype=np.int64),
            zi_position=np.array([z.position for z in self.traders], dtype=np.int64),
            benefits=np.array([z.benefits.values for z in self.traders]),
            q_max=self.config.q_max,
            la_cash=self.la.cash if self.la else 0,
            la_position=self.la.position if self.la else 0,
            r_terminal=self.series.terminal,
        )


@dataclass
class ReferenceRun:
    market: Market
    logs: RunLogs
    dispatched: int
    extras: dict = field(default_factory=dict)


def run_reference(
    config: SimulationConfig,
    mixture: Sequence[int],
    rng: np.random.Generator,
    trace: TextIO | None = None,
    order_log: Optional[OrderLog] = None,
) -> ReferenceRun:
    setup = prepare_run(config, mixture, rng)
    market = Market(config, setup, rng, order_log)
    dispatched = market.run(trace)
    return ReferenceRun(market, market.logs(), dispatched)
