"""Vector clocks recovered from local traces.

One replay linearisation is walked while threading a clock per thread.
A synchronisation gives both partners ``max(inc(a), inc(b))``. A close
ticks the closer, joins with every earlier synchronous sync on its
channel (those could not have happened after it) and is remembered; a
receive on the closed channel joins with it. A select default ticks only
its own thread.

Clock slots follow the sorted real thread ids, then the virtual ones.
Uncommitted operations never get a clock.
"""

from __future__ import annotations

from dataclasses import dataclass

from .events import CloseEvt, RecvEvt, SelectDefaultEvt, SendEvt, TraceEvent
from .replay import linearize
from .traces import TraceSet

VectorClock = tuple[int, ...]


def vc_inc(cs: VectorClock, i: int) -> VectorClock:
    if not 0 <= i < len(cs):
        raise IndexError(f"clock index {i} out of range for length {len(cs)}")
    return cs[:i] + (cs[i] + 1,) + cs[i + 1 :]


def vc_max(a: VectorClock, b: VectorClock) -> VectorClock:
    if len(a) != len(b):
        raise ValueError("vector clocks of different length")
    return tuple(max(x, y) for x, y in zip(a, b))


def vc_less(a: VectorClock, b: VectorClock) -> bool:
    if len(a) != len(b):
        raise ValueError("vector clocks of different length")
    return all(x <= y for x, y in zip(a, b)) and a != b


@dataclass(frozen=True)
class ClockedEvent:
    event: TraceEvent
    clock: VectorClock
    run: int = 0  # identifies the assign_clocks call

    @property
    def loc(self) -> int:
        return self.event.loc


_runs = iter(range(1, 1 << 62))


def clock_slots(ts: TraceSet) -> dict[int, int]:
    real = sorted(t.tid for t in ts if not t.virtual)
    virtual = sorted(t.tid for t in ts if t.virtual)
    return {tid: i for i, tid in enumerate(real + virtual)}


def assign_clocks(ts: TraceSet, events=None) -> list[ClockedEvent]:
    """Clock every committed event of ``ts``.

    ``events`` may supply the run-time trace to follow; by default the
    first complete replay is used.
    """
    if events is None:
        rs = linearize(ts)
        ts, events = rs.traces, rs.emitted
    slots = clock_slots(ts)
    zero = (0,) * len(slots)
    clocks = {tid: zero for tid in slots}
    close_clock: dict[str, VectorClock] = {}
    synced: dict[str, VectorClock] = {}  # join of synchronous syncs per channel
    virtual = {t.tid for t in ts if t.virtual}
    run = next(_runs)
    out: list[ClockedEvent] = []
    events = list(events)
    i = 0
    while i < len(events):
        e = events[i]
        if isinstance(e, SendEvt):
            r = events[i + 1]
            if not (isinstance(r, RecvEvt) and r.from_tid == e.tid and r.from_loc == e.loc):
                raise ValueError(f"send {e} not followed by its receive")
            cs = vc_max(vc_inc(clocks[e.tid], slots[e.tid]), vc_inc(clocks[r.tid], slots[r.tid]))
            clocks[e.tid] = clocks[r.tid] = cs
            if e.tid not in virtual:
                synced[e.channel] = vc_max(synced.get(e.channel, zero), cs)
            out += [ClockedEvent(e, cs, run), ClockedEvent(r, cs, run)]
            i += 2
            continue
        if isinstance(e, CloseEvt):
            cs = vc_max(vc_inc(clocks[e.tid], slots[e.tid]), synced.get(e.channel, zero))
            close_clock[e.channel] = cs
        elif isinstance(e, RecvEvt):  # from a closed channel
            cs = vc_max(vc_inc(clocks[e.tid], slots[e.tid]), close_clock[e.channel])
        elif isinstance(e, SelectDefaultEvt):
            cs = vc_inc(clocks[e.tid], slots[e.tid])
        else:
            raise TypeError(e)
        clocks[e.tid] = cs
        out.append(ClockedEvent(e, cs, run))
        i += 1
    return out


def _partners(a: ClockedEvent, b: ClockedEvent) -> bool:
    s, r = a.event, b.event
    return isinstance(s, SendEvt) and isinstance(r, RecvEvt) and r.from_tid == s.tid and r.from_loc == s.loc


def hb_by_clock(a: ClockedEvent, b: ClockedEvent) -> bool:
    if a.run != b.run:
        raise ValueError("clocked events from different runs")
    if _partners(a, b):
        return True
    if _partners(b, a):
        return False
    return vc_less(a.clock, b.clock)
