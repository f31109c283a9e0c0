import io

import pytest

from fragsim.engine import EventKind, EventQueue, SchedulingError, run


def collect(queue, horizon, on_arrival=None):
    seen = []

    def arrival(ev):
        seen.append((ev.time, ev.seq, ev.payload))
        if on_arrival:
            on_arrival(ev)

    def nbbo(ev):
        seen.append((ev.time, ev.seq, ev.payload))

    n = run(queue, {EventKind.ZI_ARRIVAL: arrival, EventKind.NBBO_UPDATE: nbbo}, horizon)
    return n, seen


def test_same_time_events_fire_in_insertion_order():
    q = EventQueue()
    q.schedule(5, EventKind.ZI_ARRIVAL, "a")
    q.schedule(5, EventKind.ZI_ARRIVAL, "b")
    _, seen = collect(q, 10)
    assert [p for _, _, p in seen] == ["a", "b"]


def test_events_past_horizon_stay_queued():
    q = EventQueue()
    q.schedule(20, EventKind.ZI_ARRIVAL, "late")
    n, seen = collect(q, 10)
    assert n == 0 and seen == [] and len(q) == 1


def test_single_event_round_trip():
    q = EventQueue()
    ev = q.schedule(3, EventKind.NBBO_UPDATE, "x")
    assert q.pop() == ev


def test_dispatch_order_by_time_then_seq():
    q = EventQueue()
    q.schedule(3, EventKind.ZI_ARRIVAL, "first-at-3")
    q.schedule(1, EventKind.ZI_ARRIVAL, "at-1")
    q.schedule(3, EventKind.ZI_ARRIVAL, "second-at-3")
    _, seen = collect(q, 10)
    assert [p for _, _, p in seen] == ["at-1", "first-at-3", "second-at-3"]


def test_event_scheduled_while_handling_runs_after_existing_ties():
    q = EventQueue()
    q.schedule(2, EventKind.ZI_ARRIVAL, "a")
    q.schedule(2, EventKind.ZI_ARRIVAL, "b")

    def spawn(ev):
        if ev.payload == "a":
            q.schedule(2, EventKind.ZI_ARRIVAL, "child")

    _, seen = collect(q, 10, spawn)
    assert [p for _, _, p in seen] == ["a", "b", "child"]
    keys = [(t, s) for t, s, _ in seen]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)


def test_scheduling_in_the_past_aborts():
    q = EventQueue()
    q.schedule(5, EventKind.ZI_ARRIVAL)
    q.pop()
    with pytest.raises(SchedulingError):
        q.schedule(4, EventKind.ZI_ARRIVAL)


def test_missing_handler_is_rejected():
    with pytest.raises(ValueError):
        run(EventQueue(), {EventKind.ZI_ARRIVAL: lambda ev: None}, 10)


def test_trace_lines():
    q = EventQueue()
    q.schedule(1, EventKind.ZI_ARRIVAL, 0)
    q.schedule(2, EventKind.NBBO_UPDATE, None)
    buf = io.StringIO()
    run(q, {k: (lambda ev: None) for k in EventKind}, 5, trace=buf)
    assert buf.getvalue() == "1\t0\tZI_ARRIVAL\n2\t1\tNBBO_UPDATE\n"


def test_payloads_are_never_compared():
    q = EventQueue()
    q.schedule(1, EventKind.ZI_ARRIVAL, object())
    q.schedule(1, EventKind.ZI_ARRIVAL, object())
    _, seen = collect(q, 5)
    assert len(seen) == 2
