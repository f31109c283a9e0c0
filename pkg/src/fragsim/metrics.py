"""Per-run output metrics computed from event-time logs."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .traders import PrivateBenefits, zi_terminal_surplus

NULL = -1  # empty quote side in array logs; real prices are >= 0


@dataclass
class RunLogs:
    """Everything the metrics need, as plain arrays.

    Quote arrays use ``NULL`` for an empty side. Trade arrays are aligned,
    one entry per trade. Trader-state arrays are indexed by ZI id.
    """

    nbbo_bid: np.ndarray
    nbbo_ask: np.ndarray
    bbo_bid: list[np.ndarray]
    bbo_ask: list[np.ndarray]
    trade_time: np.ndarray
    buy_submit: np.ndarray
    sell_submit: np.ndarray
    buyer_is_la: np.ndarray
    seller_is_la: np.ndarray
    trade_price: np.ndarray
    zi_cash: np.ndarray
    zi_position: np.ndarray
    benefits: np.ndarray  # (n_zi, 2 * q_max)
    q_max: int
    la_cash: int
    la_position: int
    r_terminal: float


@dataclass
class RunResult:
    experiment_id: str
    env: str
    config: str
    latency: int
    mixture_idx: int
    run_idx: int
    seed: int
    zi_surplus: float
    la_surplus: float
    nbbo_spread_median: Optional[float]
    bbo_spread_mean_median: Optional[float]
    exec_time_mean: Optional[float]
    zi_tx: int
    la_tx: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> list[str]:
        return [_fmt(v) for v in astuple(self)]

    @classmethod
    def from_row(cls, row: dict) -> "RunResult":
        def opt(x):
            return None if x in ("", None) else float(x)

        return cls(
            experiment_id=row["experiment_id"],
            env=row["env"],
            config=row["config"],
            latency=int(row["latency"]),
            mixture_idx=int(row["mixture_idx"]),
            run_idx=int(row["run_idx"]),
            seed=int(row["seed"]),
            zi_surplus=float(row["zi_surplus"]),
            la_surplus=float(row["la_surplus"]),
            nbbo_spread_median=opt(row["nbbo_spread_median"]),
            bbo_spread_mean_median=opt(row["bbo_spread_mean_median"]),
            exec_time_mean=opt(row["exec_time_mean"]),
            zi_tx=int(row["zi_tx"]),
            la_tx=int(row["la_tx"]),
        )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _median(values: np.ndarray) -> Optional[float]:
    if len(values) == 0:
        return None
    return float(np.median(values))


def median_nbbo_spread(bid: np.ndarray, ask: np.ndarray) -> Optional[float]:
    """Median ASK - BID over two-sided, uncrossed NBBO publications."""
    bid = np.asarray(bid, dtype=np.int64)
    ask = np.asarray(ask, dtype=np.int64)
    ok = (bid != NULL) & (ask != NULL) & (bid <= ask)
    return _median(ask[ok] - bid[ok])


def mean_median_bbo_spread(bids: Sequence[np.ndarray], asks: Sequence[np.ndarray]) -> Optional[float]:
    """Mean over exchanges of each exchange's median two-sided BBO spread.

    Exchanges that were never two-sided are left out of the mean.
    """
    medians = []
    for bid, ask in zip(bids, asks):
        bid = np.asarray(bid, dtype=np.int64)
        ask = np.asarray(ask, dtype=np.int64)
        ok = (bid != NULL) & (ask != NULL)
        m = _median(ask[ok] - bid[ok])
        if m is not None:
            medians.append(m)
    if not medians:
        return None
    return sum(medians) / len(medians)


def mean_execution_time(
    trade_time, buy_submit, sell_submit, buyer_is_la=None, seller_is_la=None, mode: str = "all"
) -> Optional[float]:
    """Mean wait between submission and fill over both legs of every trade.

    ``mode="zi-only"`` drops legs whose order belonged to the arbitrageur.
    """
    trade_time = np.asarray(trade_time, dtype=np.int64)
    if len(trade_time) == 0:
        return None
    buy_wait = trade_time - np.asarray(buy_submit, dtype=np.int64)
    sell_wait = trade_time - np.asarray(sell_submit, dtype=np.int64)
    if mode == "all":
        legs = np.concatenate([buy_wait, sell_wait])
    elif mode == "zi-only":
        keep_buy = ~np.asarray(buyer_is_la, dtype=bool)
        keep_sell = ~np.asarray(seller_is_la, dtype=bool)
        legs = np.concatenate([buy_wait[keep_buy], sell_wait[keep_sell]])
    else:
        raise ValueError(f"unknown execution-time mode {mode!r}")
    if len(legs) == 0:
        return None
    return int(legs.sum()) / len(legs)


def count_transactions(buyer_is_la, seller_is_la) -> tuple[int, int]:
    """Orders that traded, split by the type of trader that placed them."""
    buyer_is_la = np.asarray(buyer_is_la, dtype=bool)
    seller_is_la = np.asarray(seller_is_la, dtype=bool)
    la = int(buyer_is_la.sum() + seller_is_la.sum())
    return 2 * len(buyer_is_la) - la, la


def total_zi_surplus(logs: RunLogs) -> float:
    total = 0.0
    for cash, q, theta in zip(logs.zi_cash.tolist(), logs.zi_position.tolist(), logs.benefits):
        total += zi_terminal_surplus(cash, q, logs.r_terminal, PrivateBenefits(theta, logs.q_max))
    return total


def check_conservation(logs: RunLogs) -> None:
    cash = int(logs.zi_cash.sum()) + logs.la_cash
    position = int(logs.zi_position.sum()) + logs.la_position
    if cash != 0 or position != 0:
        raise AssertionError(f"conservation violated: cash {cash}, position {position}")
    if logs.la_position != 0:
        raise AssertionError(f"arbitrageur left with position {logs.la_position}")


def aggregate_run(logs: RunLogs, meta: dict, exec_time_mode: str = "all") -> RunResult:
    check_conservation(logs)
    zi_tx, la_tx = count_transactions(logs.buyer_is_la, logs.seller_is_la)
    return RunResult(
        experiment_id=meta.get("experiment_id", ""),
        env=str(meta.get("env", "")),
        config=meta.get("config", ""),
        latency=int(meta.get("latency", 0)),
        mixture_idx=int(meta.get("mixture_idx", 0)),
        run_idx=int(meta.get("run_idx", 0)),
        seed=int(meta.get("seed", 0)),
        zi_surplus=total_zi_surplus(logs),
        la_surplus=float(logs.la_cash),
        nbbo_spread_median=median_nbbo_spread(logs.nbbo_bid, logs.nbbo_ask),
        bbo_spread_mean_median=mean_median_bbo_spread(logs.bbo_bid, logs.bbo_ask),
        exec_time_mean=mean_execution_time(
            logs.trade_time, logs.buy_submit, logs.sell_submit, logs.buyer_is_la, logs.seller_is_la, exec_time_mode
        ),
        zi_tx=zi_tx,
        la_tx=la_tx,
    )


def is_absent(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x))
