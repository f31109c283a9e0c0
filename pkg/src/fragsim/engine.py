"""Discrete-time event queue with FIFO tie-breaking.

Only two kinds of events ever pass through the queue: trader arrivals and
delayed NBBO updates. Everything an event sets off (order submission,
matching, quote publication, arbitrage) runs as nested synchronous calls
inside the handler.
"""

from __future__ import annotations

import heapq
from enum import IntEnum
from typing import Any, Callable, Mapping, NamedTuple, TextIO


class EventKind(IntEnum):
    ZI_ARRIVAL = 0
    NBBO_UPDATE = 1


class Event(NamedTuple):
    time: int
    seq: int
    kind: EventKind
    payload: Any = None


class SchedulingError(RuntimeError):
    """An event was scheduled before the current dispatch time."""


class EventQueue:
    """Pending events ordered by (time, seq).

    ``seq`` is a per-queue insertion counter and the sole tie-breaker, so two
    events never compare equal and payloads are never compared.
    """

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: int, kind: EventKind, payload: Any = None) -> Event:
        if time < self.now:
            raise SchedulingError(f"cannot schedule {kind.name} at t={time} < now={self.now}")
        event = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        event = heapq.heappop(self._heap)
        self.now = event.time
        return event


Handler = Callable[[Event], None]


def run(
    queue: EventQueue,
    handlers: Mapping[EventKind, Handler],
    horizon: int,
    trace: TextIO | None = None,
) -> int:
    """Dispatch every event with ``time <= horizon``; return the dispatch count.

    Events past the horizon stay in the queue and are never fired.
    """
    missing = [k.name for k in EventKind if k not in handlers]
    if missing:
        raise ValueError(f"no handler registered for {', '.join(missing)}")
    dispatched = 0
    heap = queue._heap
    while heap and heap[0].time <= horizon:
        event = queue.pop()
        if trace is not None:
            trace.write(f"{event.time}\t{event.seq}\t{event.kind.name}\n")
        handlers[event.kind](event)
        dispatched += 1
    return dispatched
