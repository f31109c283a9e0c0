"""Two-exchange market simulator with latency arbitrage and alignment statistics."""

from .exchange import Exchange, LimitOrder, OrderBook, Quote, Side, Trade
from .metrics import RunLogs, RunResult, aggregate_run
from .security import FundamentalParams, FundamentalSeries, generate_fundamental
from .simulation import SimulationConfig, run_reference
from .sip import NbboQuote, Sip
from .traders import STRATEGIES, GreedyVariant

__version__ = "0.1.0"

__all__ = [
    "Exchange",
    "FundamentalParams",
    "FundamentalSeries",
    "GreedyVariant",
    "LimitOrder",
    "NbboQuote",
    "OrderBook",
    "Quote",
    "RunLogs",
    "RunResult",
    "STRATEGIES",
    "Side",
    "SimulationConfig",
    "Sip",
    "Trade",
    "aggregate_run",
    "generate_fundamental",
    "run_reference",
]
