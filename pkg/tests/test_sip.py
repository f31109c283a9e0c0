import numpy as np

from fragsim.engine import EventKind, EventQueue, run
from fragsim.exchange import Exchange, LimitOrder, Quote, Side
from fragsim.sip import Sip, consolidate
from oracles import StubOwner, nbbo_brute_force


def test_zero_latency_single_venue_is_its_bbo():
    sip = Sip([0], 0)
    got = []
    sip.subscribe(got.append)
    sip.on_bbo_update(Quote(100, 101, 0, 7))
    assert (got[-1].bid, got[-1].bid_exchange, got[-1].ask, got[-1].ask_exchange, got[-1].time) == (100, 0, 101, 0, 7)


def test_positive_latency_schedules_at_t_plus_delta():
    q = EventQueue()
    sip = Sip([0, 1], 50, q)
    sip.on_bbo_update(Quote(100, 101, 1, 200))
    ev = q.peek()
    assert ev.time == 250 and ev.kind == EventKind.NBBO_UPDATE and ev.payload.exchange == 1
    assert sip.log == []


def test_update_landing_past_horizon_never_applies():
    q = EventQueue()
    sip = Sip([0], 50, q)
    sip.on_bbo_update(Quote(100, 105, 0, 90))
    sip.on_bbo_update(Quote(101, 105, 0, 40))
    run(q, {EventKind.NBBO_UPDATE: sip.handle_event, EventKind.ZI_ARRIVAL: lambda e: None}, 100)
    assert [n.bid for n in sip.log] == [101]
    assert sip.nbbo.bid == 101


def test_crossed_nbbo_is_representable():
    nbbo = consolidate([Quote(99, 102, 0, 0), Quote(101, 100, 1, 0)], 0)
    assert (nbbo.bid, nbbo.bid_exchange, nbbo.ask, nbbo.ask_exchange) == (101, 1, 100, 1)


def test_ties_go_to_first_exchange():
    nbbo = consolidate([Quote(100, 105, 0, 0), Quote(100, 105, 1, 0)], 0)
    assert nbbo.bid_exchange == 0 and nbbo.ask_exchange == 0


def test_empty_sides_propagate():
    nbbo = consolidate([Quote(None, None, 0, 0), Quote(None, 105, 1, 0)], 0)
    assert (nbbo.bid, nbbo.bid_exchange, nbbo.ask, nbbo.ask_exchange) == (None, None, 105, 1)


def test_in_flight_snapshots_apply_fifo():
    q = EventQueue()
    sip = Sip([0], 10, q)
    sip.on_bbo_update(Quote(100, None, 0, 5))
    sip.on_bbo_update(Quote(102, None, 0, 5))
    run(q, {EventKind.NBBO_UPDATE: sip.handle_event, EventKind.ZI_ARRIVAL: lambda e: None}, 100)
    assert [n.bid for n in sip.log] == [100, 102]


def test_zero_latency_nbbo_matches_brute_force_on_random_flow():
    rng = np.random.default_rng(3)
    exchanges = [Exchange(0), Exchange(1)]
    sip = Sip([0, 1], 0)
    for e in exchanges:
        e.subscribe(sip.on_bbo_update)
    seen = []

    def check(nbbo):
        quotes = [(e.quote.bid, e.quote.ask) for e in exchanges]
        seen.append(nbbo)
        assert (nbbo.bid, nbbo.bid_exchange, nbbo.ask, nbbo.ask_exchange) == nbbo_brute_force(quotes)

    sip.subscribe(check)
    owner = StubOwner(0)
    live = []
    for oid in range(3000):
        if live and rng.random() < 0.3:
            victim, venue = live.pop(int(rng.integers(0, len(live))))
            exchanges[venue].withdraw_order(victim, oid)
        else:
            venue = int(rng.integers(0, 2))
            o = LimitOrder(oid, owner, Side(int(rng.integers(0, 2))), int(rng.integers(95, 106)), oid, venue)
            exchanges[venue].submit_order(o, oid)
            live.append((oid, venue))
    published = sum(len(e.log) for e in exchanges)
    assert len(seen) == published


def test_nbbo_csv(tmp_path):
    sip = Sip([0, 1], 0)
    sip.on_bbo_update(Quote(None, 105, 1, 3))
    path = tmp_path / "nbbo.csv"
    sip.to_csv(path)
    assert path.read_text().splitlines() == ["time,bid,bid_ex,ask,ask_ex", "3,,,105,1"]
