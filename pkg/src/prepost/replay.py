"""Replay of local traces: recovering run-time traces and alternatives.

A replay state records how far each local trace has been consumed and
which channels were closed. A step consumes a ``pre``/``post`` pair from
one thread (default, close, receive-on-closed) or from a sender and the
receiver whose post names it (sync). A synchronous send cannot follow the
close of its channel; buffered messages may still be drained. States where thread 1 is fully
consumed and every other trace is residual (empty or one dangling pre)
accept; the emitted events of an accepting path form one schedule.

States are keyed by (positions, closed set). Replay is Markovian in that
key, so dead ends are memoised by it.
"""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .events import CloseEvt, RecvEvt, SelectDefaultEvt, SendEvt, TraceEvent
from .traces import (
    PostAsyncSnd,
    PostClose,
    PostRcv,
    PostSelect,
    PostSnd,
    PreEvent,
    RcvOp,
    SndOp,
    TraceSet,
    normalize_buffered,
)

DEFAULT_MAX_SCHEDULES = 1024
DEFAULT_MAX_STATES = 65536


class InconsistentTrace(Exception):
    """Local traces that no replay can explain."""


class Kind(enum.Enum):
    SYNC = "sync"
    RCV_CLOSED = "rcv-closed"
    DEFAULT = "default"
    CLOSE = "close"


@dataclass(frozen=True)
class SyncCandidate:
    """One applicable replay step.

    ``sender_tid``/``sender_loc`` name the acting thread for default and
    close steps; ``receiver_*`` are 0 and ``channel`` is empty for defaults.
    A receive on a closed channel has ``sender_tid`` 0.
    """

    kind: Kind
    sender_tid: int
    receiver_tid: int
    channel: str
    sender_loc: int
    receiver_loc: int

    def events(self) -> tuple[TraceEvent, ...]:
        if self.kind is Kind.SYNC:
            return (
                SendEvt(self.sender_tid, self.channel, self.sender_loc),
                RecvEvt(self.receiver_tid, self.sender_tid, self.channel, self.receiver_loc, self.sender_loc),
            )
        if self.kind is Kind.RCV_CLOSED:
            return (RecvEvt(self.receiver_tid, 0, self.channel, self.receiver_loc, 0),)
        if self.kind is Kind.DEFAULT:
            return (SelectDefaultEvt(self.sender_tid, self.sender_loc),)
        return (CloseEvt(self.sender_tid, self.channel, self.sender_loc),)

    @property
    def step_id(self) -> int:
        """Location identifying this step within a run."""
        return self.sender_loc if self.kind is not Kind.RCV_CLOSED else self.receiver_loc


@dataclass(frozen=True)
class AlternativeMatch:
    send_loc: int
    recv_loc: int
    channel: str
    send_tid: int
    recv_tid: int
    send_committed: bool
    recv_committed: bool

    @property
    def pair(self) -> tuple[int, int]:
        return (self.send_loc, self.recv_loc)


@dataclass(frozen=True)
class ReplayState:
    traces: TraceSet
    positions: tuple[int, ...]
    closed: frozenset = frozenset()  # (channel, closer tid)
    emitted: tuple[TraceEvent, ...] = ()

    @classmethod
    def initial(cls, ts: TraceSet) -> ReplayState:
        if any(isinstance(e, PostAsyncSnd) for t in ts for e in t.events):
            ts = normalize_buffered(ts)
        return cls(ts, (0,) * len(ts))

    @property
    def key(self):
        return (self.positions, self.closed)

    def heads(self) -> dict[int, tuple[int, PreEvent, object]]:
        """tid -> (trace index, head pre, following post or None)."""
        out = {}
        for idx, t in enumerate(self.traces.traces):
            pos = self.positions[idx]
            if pos < len(t.events):
                post = t.events[pos + 1] if pos + 1 < len(t.events) else None
                out[t.tid] = (idx, t.events[pos], post)
        return out

    def remaining(self, idx: int) -> int:
        return len(self.traces.traces[idx].events) - self.positions[idx]


def initial_state(ts: TraceSet) -> ReplayState:
    return ReplayState.initial(ts)


def replay_choices(rs: ReplayState) -> list[SyncCandidate]:
    """Every replay step applicable in ``rs``, ordered by acting thread."""
    heads = rs.heads()
    closed_channels = {ch for ch, _ in rs.closed}
    out = []
    for tid, (_, pre, post) in heads.items():
        if isinstance(post, PostRcv):
            if post.from_tid == 0:
                if post.channel in closed_channels:
                    out.append(SyncCandidate(Kind.RCV_CLOSED, 0, tid, post.channel, 0, post.loc))
                continue
            partner = heads.get(post.from_tid)
            if partner is None or post.from_tid == tid:
                continue
            if post.channel in closed_channels and not rs.traces.traces[partner[0]].virtual:
                continue  # a send on a closed channel would have crashed
            spost = partner[2]
            if isinstance(spost, PostSnd) and spost.channel == post.channel:
                out.append(SyncCandidate(Kind.SYNC, post.from_tid, tid, post.channel, spost.loc, post.loc))
        elif isinstance(post, PostSelect):
            out.append(SyncCandidate(Kind.DEFAULT, tid, 0, "", post.loc, 0))
        elif isinstance(post, PostClose):
            out.append(SyncCandidate(Kind.CLOSE, tid, 0, post.channel, post.loc, 0))
    return out


def replay_apply(rs: ReplayState, c: SyncCandidate) -> ReplayState:
    heads = rs.heads()
    positions = list(rs.positions)
    closed = rs.closed
    if c.kind is Kind.SYNC:
        positions[heads[c.sender_tid][0]] += 2
        positions[heads[c.receiver_tid][0]] += 2
    elif c.kind is Kind.RCV_CLOSED:
        positions[heads[c.receiver_tid][0]] += 2
    else:
        positions[heads[c.sender_tid][0]] += 2
        if c.kind is Kind.CLOSE:
            closed = closed | {(c.channel, c.sender_tid)}
    return ReplayState(rs.traces, tuple(positions), closed, rs.emitted + c.events())


def _residual(rs: ReplayState, idx: int) -> bool:
    rem = rs.remaining(idx)
    if rem <= 1:
        return True
    t = rs.traces.traces[idx]
    # a buffered message nobody received stays in the buffer
    return t.virtual and rem == 2 and isinstance(t.events[-1], PostSnd)


def is_accepting(rs: ReplayState) -> bool:
    for idx, t in enumerate(rs.traces.traces):
        if t.tid == 1 and rs.remaining(idx) != 0:
            return False
        if not _residual(rs, idx):
            return False
    return True


def is_exhausted(rs: ReplayState) -> bool:
    """Every trace residual; thread 1 may still hold a dangling pre."""
    return all(_residual(rs, idx) for idx in range(len(rs.traces)))


@dataclass
class Schedules:
    traces: list[tuple[TraceEvent, ...]] = field(default_factory=list)
    truncated: bool = False
    states: int = 0

    def __len__(self) -> int:
        return len(self.traces)


def _search(rs0: ReplayState, goal, on_goal, max_states: int) -> tuple[bool, int]:
    """Iterative DFS over replay paths from ``rs0``.

    ``on_goal(state)`` returns True to stop. Dead states (no goal below)
    are memoised. Returns (stopped early, distinct states seen).
    """
    dead: set = set()
    seen: set = {rs0.key}
    stack = [(rs0, iter(replay_choices(rs0)), [goal(rs0)])]
    if stack[0][2][0] and on_goal(rs0):
        return True, 1
    while stack:
        rs, it, found = stack[-1]
        c = next(it, None)
        if c is None:
            stack.pop()
            if not found[0]:
                dead.add(rs.key)
            elif stack:
                stack[-1][2][0] = True
            continue
        nxt = replay_apply(rs, c)
        if nxt.key in dead:
            continue
        if nxt.key not in seen:
            if len(seen) >= max_states:
                return True, len(seen)
            seen.add(nxt.key)
        hit = goal(nxt)
        if hit and on_goal(nxt):
            return True, len(seen)
        stack.append((nxt, iter(replay_choices(nxt)), [hit]))
    return False, len(seen)


def enumerate_schedules(
    ts: TraceSet, cap: int = DEFAULT_MAX_SCHEDULES, max_states: int = DEFAULT_MAX_STATES
) -> Schedules:
    """Distinct run-time traces replay can produce, up to ``cap``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    out = Schedules()

    def collect(rs: ReplayState) -> bool:
        out.traces.append(rs.emitted)
        return len(out.traces) >= cap

    stopped, out.states = _search(ReplayState.initial(ts), is_accepting, collect, max_states)
    out.truncated = stopped
    return out


def linearize(ts: TraceSet, max_states: int = DEFAULT_MAX_STATES) -> ReplayState:
    """One replay path consuming every committed event.

    Prefers an accepting path; falls back to any path that leaves only
    residual traces (a deadlocked run keeps thread 1's dangling pre).
    """
    for goal in (is_accepting, is_exhausted):
        box: list[ReplayState] = []
        _search(ReplayState.initial(ts), goal, lambda rs: box.append(rs) or True, max_states)
        if box:
            return box[0]
    raise InconsistentTrace("no replay consumes all committed events")


def contains_actual(ts: TraceSet, t) -> bool:
    """Whether replay of ``ts`` can produce exactly ``t``, leaving only residue.

    Thread 1 may keep a dangling pre, so deadlocked runs are covered too.
    """
    rs = ReplayState.initial(ts)
    t = tuple(t)
    i = 0
    while i < len(t):
        for c in replay_choices(rs):
            evs = c.events()
            if t[i : i + len(evs)] == evs:
                rs = replay_apply(rs, c)
                i += len(evs)
                break
        else:
            return False
    return is_exhausted(rs)


def find_alternative_matches(ts_or_state, pairs=None) -> list[AlternativeMatch]:
    """Send/receive options at the trace heads that could pair but did not.

    A pair did pair when the send committed and the receive's post names
    the sending thread, or, if ``pairs`` is given, when it is listed there.
    """
    rs = ts_or_state if isinstance(ts_or_state, ReplayState) else ReplayState.initial(ts_or_state)
    sends = defaultdict(list)
    recvs = defaultdict(list)
    for tid, (_, pre, post) in rs.heads().items():
        for op in pre.options:
            if isinstance(op, SndOp):
                sends[op.channel].append((tid, op, post))
            elif isinstance(op, RcvOp):
                recvs[op.channel].append((tid, op, post))
    out = []
    for ch, slist in sends.items():
        for stid, sop, spost in slist:
            for rtid, rop, rpost in recvs.get(ch, ()):
                if stid == rtid:
                    continue
                if pairs is not None:
                    matched = (sop.loc, rop.loc) in pairs
                else:
                    matched = spost == PostSnd(ch, sop.loc) and rpost == PostRcv(ch, rop.loc, stid)
                if not matched:
                    out.append(AlternativeMatch(sop.loc, rop.loc, ch, stid, rtid, spost is not None, rpost is not None))
    return out


@dataclass
class Alternatives:
    matches: list[AlternativeMatch] = field(default_factory=list)
    truncated: bool = False
    states: int = 0

    @property
    def pairs(self) -> set[tuple[int, int]]:
        return {m.pair for m in self.matches}


def matching(rs: ReplayState) -> frozenset[tuple[int, int]]:
    """(send loc, receive loc) of every synchronisation ``rs`` has emitted."""
    return frozenset((e.from_loc, e.loc) for e in rs.emitted if isinstance(e, RecvEvt) and e.from_tid != 0)


def reachable_states(ts: TraceSet, max_states: int = DEFAULT_MAX_STATES, pairs=None):
    """Breadth-first replay state space: (initial, states by key, edges, truncated).

    ``pairs`` restricts synchronisations to the given (send, receive)
    location pairs.
    """
    rs0 = ReplayState.initial(ts)
    states = {rs0.key: rs0}
    edges: dict = defaultdict(list)
    queue = deque([rs0])
    truncated = False
    while queue:
        rs = queue.popleft()
        for c in replay_choices(rs):
            if pairs is not None and c.kind is Kind.SYNC and (c.sender_loc, c.receiver_loc) not in pairs:
                continue
            nxt = replay_apply(rs, c)
            edges[rs.key].append((c, nxt.key))
            if nxt.key not in states:
                if len(states) >= max_states:
                    truncated = True
                    continue
                states[nxt.key] = nxt
                queue.append(nxt)
    return rs0, states, edges, truncated


def find_alternative_communications(ts: TraceSet, max_states: int = DEFAULT_MAX_STATES, pairs=None) -> Alternatives:
    """Alternative matches at the initial state or any replay-reachable state.

    ``pairs`` pins the send/receive pairing as in ``schedule_order``.
    """
    _, states, _, truncated = reachable_states(ts, max_states, pairs)
    found: dict[tuple[int, int], AlternativeMatch] = {}
    for rs in states.values():
        for m in find_alternative_matches(rs, pairs):
            found.setdefault(m.pair, m)
    return Alternatives(sorted(found.values(), key=lambda m: m.pair), truncated, len(states))


def schedule_order(
    ts: TraceSet, max_states: int = DEFAULT_MAX_STATES, pairs=None
) -> tuple[set[tuple[int, int]], set[int]]:
    """Pairs (a, b) of event locations where a precedes b in every schedule.

    A receive post names only the sending thread, so when one thread sends
    on a channel to several receiving threads the pairing is ambiguous.
    ``pairs`` pins it (see ``matching``).

    Computed on the replay state graph instead of by listing schedules:
    b can come first iff some state that still reaches acceptance is
    reachable by executing b's step without a's. When no replay accepts
    (the run deadlocked), complete replays take the place of schedules.
    Returns the relation and the set of locations that occur in them.
    """
    rs0, states, edges, truncated = reachable_states(ts, max_states, pairs)
    if truncated:
        raise RuntimeError("replay state budget exhausted")
    preds = defaultdict(list)
    for k, outs in edges.items():
        for _, n in outs:
            preds[n].append(k)
    for goal in (is_accepting, is_exhausted):
        # a deadlocked run has no accepting replay; use complete ones instead
        alive = {k for k, rs in states.items() if goal(rs)}
        queue = deque(alive)
        while queue:
            for p in preds[queue.popleft()]:
                if p not in alive:
                    alive.add(p)
                    queue.append(p)
        if rs0.key in alive:
            break
    else:
        return set(), set()

    steps: dict[int, SyncCandidate] = {}
    for outs in edges.values():
        for c, n in outs:
            if n in alive:
                steps.setdefault(c.step_id, c)

    order = set()
    for a, ca in steps.items():
        done = set()
        seen = {rs0.key}
        queue = deque([rs0.key])
        while queue:
            k = queue.popleft()
            for c, n in edges.get(k, ()):
                if c.step_id == a or n not in alive:
                    continue
                done.add(c.step_id)
                if n not in seen:
                    seen.add(n)
                    queue.append(n)
        for b, cb in steps.items():
            if b != a and b not in done:
                for ea in ca.events():
                    for eb in cb.events():
                        order.add((ea.loc, eb.loc))
        evs = ca.events()
        if len(evs) == 2:
            order.add((evs[0].loc, evs[1].loc))
    locs = {e.loc for c in steps.values() for e in c.events()}
    return order, locs


@dataclass
class ResidualReport:
    completed: bool
    pending: list[tuple[int, PreEvent]]


def residual_report(rs: ReplayState) -> ResidualReport:
    """Classify a terminal replay state.

    Completed when thread 1 is done and everything else is residual;
    otherwise the run is stuck. Either way the dangling pres are listed.
    """
    pending = []
    for idx, t in enumerate(rs.traces.traces):
        if rs.remaining(idx) == 1:
            pending.append((t.tid, t.events[-1]))
    return ResidualReport(is_accepting(rs), pending)
