"""Dependency graph over communication locations.

Nodes are program locations of sends, receives, closes and select
defaults. Committed nodes come from pre/post pairs; the remaining options
of a select, and every option of a dangling pre, become uncommitted nodes.
Edges are program order within a thread, send -> receive for each
synchronisation, and close -> receive for receives on a closed channel.

A synchronous send and receive on a channel must both commit before the
channel is closed. That constraint orders commits but is not drawn.

Two orders live on the graph. ``happens_before`` is plain reachability
along the drawn edges. ``ordered_before`` is the order in which operations
commit: a send and its receive commit together, so the pair is contracted
into one unit first. Only the second agrees with vector clocks and with
the order shared by all replays; on the two-sender example a receive at 1
followed by a receive at 2 is unrelated to the send at 5 by paths, yet the
send at 5 can only commit after 1 has.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field

from .events import CloseEvt, RecvEvt, SelectDefaultEvt, SendEvt
from .replay import InconsistentTrace, linearize
from .traces import (
    CloseOp,
    DefaultOp,
    PostAsyncSnd,
    PostRcv,
    PreEvent,
    RcvOp,
    SndOp,
    TraceSet,
    committed_op,
    normalize_buffered,
)


class NodeKind(enum.Enum):
    SEND = "send"
    RECV = "recv"
    CLOSE = "close"
    DEFAULT = "default"


class EdgeKind(enum.Enum):
    PROGRAM_ORDER = "po"
    SYNC = "sync"
    CLOSE_BEFORE = "close"


@dataclass(frozen=True)
class DepNode:
    loc: int
    tid: int
    kind: NodeKind
    channel: str | None
    committed: bool
    closed_recv: bool = False  # committed receive on a closed channel

    @property
    def label(self) -> str:
        if self.kind is NodeKind.SEND:
            return f"{self.channel}!|{self.loc}"
        if self.kind is NodeKind.RECV:
            return f"{self.channel}?|{self.loc}"
        if self.kind is NodeKind.CLOSE:
            return f"close {self.channel}|{self.loc}"
        return f"sel|{self.loc}"


@dataclass(frozen=True)
class DepEdge:
    src: int
    dst: int
    kind: EdgeKind


def _node_for(op, tid: int, committed: bool, closed_recv: bool = False) -> DepNode:
    if isinstance(op, SndOp):
        return DepNode(op.loc, tid, NodeKind.SEND, op.channel, committed)
    if isinstance(op, RcvOp):
        return DepNode(op.loc, tid, NodeKind.RECV, op.channel, committed, closed_recv)
    if isinstance(op, CloseOp):
        return DepNode(op.loc, tid, NodeKind.CLOSE, op.channel, committed)
    if isinstance(op, DefaultOp):
        return DepNode(op.loc, tid, NodeKind.DEFAULT, None, committed)
    raise TypeError(op)


@dataclass
class DepGraph:
    nodes: dict[int, DepNode] = field(default_factory=dict)
    edges: list[DepEdge] = field(default_factory=list)
    partner: dict[int, int] = field(default_factory=dict)  # send loc <-> recv loc
    pred: dict[int, int] = field(default_factory=dict)  # committed thread predecessor
    # (sync send, close) on one unbuffered channel: ordered, but not drawn
    before_close: list[tuple[int, int]] = field(default_factory=list)
    _reach: dict[int, int] | None = field(default=None, repr=False)
    _unit_index: dict[int, int] | None = field(default=None, repr=False)
    _paths: dict[int, int] | None = field(default=None, repr=False)

    def add_node(self, node: DepNode) -> None:
        if node.loc in self.nodes:
            raise InconsistentTrace(f"location {node.loc} occurs twice")
        self.nodes[node.loc] = node

    def add_edge(self, src: int, dst: int, kind: EdgeKind) -> None:
        self.edges.append(DepEdge(src, dst, kind))

    def out_edges(self, loc: int) -> list[DepEdge]:
        return [e for e in self.edges if e.src == loc]

    def unit(self, loc: int) -> int:
        """Representative location: a sync pair is named by its send."""
        n = self.nodes[loc]
        if n.kind is NodeKind.RECV and loc in self.partner:
            return self.partner[loc]
        return loc

    # -- reachability ---------------------------------------------------

    def _closure(self) -> dict[int, int]:
        """Bitmask of units reachable from each unit, sync pairs contracted."""
        if self._reach is None:
            units = sorted({self.unit(l) for l in self.nodes})
            index = {u: i for i, u in enumerate(units)}
            pairs = [(self.unit(e.src), self.unit(e.dst)) for e in self.edges]
            pairs += [(self.unit(a), b) for a, b in self.before_close]
            self._reach = _transitive(units, pairs, index)
            self._unit_index = index
        return self._reach

    def _path_closure(self) -> dict[int, int]:
        """Bitmask of nodes reachable along drawn edges (indexed by loc)."""
        if self._paths is None:
            locs = sorted(self.nodes)
            self._paths = _transitive(locs, [(e.src, e.dst) for e in self.edges], {l: l for l in locs})
        return self._paths

    def _check(self, loc: int) -> None:
        if loc not in self.nodes:
            raise KeyError(f"unknown location {loc}")


def _transitive(nodes, pairs, index) -> dict[int, int]:
    succ: dict[int, set[int]] = defaultdict(set)
    indeg = {u: 0 for u in nodes}
    for a, b in pairs:
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    order = [u for u in nodes if indeg[u] == 0]
    i = 0
    while i < len(order):
        for v in sorted(succ[order[i]]):
            indeg[v] -= 1
            if indeg[v] == 0:
                order.append(v)
        i += 1
    if len(order) != len(nodes):
        raise InconsistentTrace("dependency graph has a cycle")
    reach: dict[int, int] = {}
    for u in reversed(order):
        mask = 0
        for v in succ[u]:
            mask |= (1 << index[v]) | reach[v]
        reach[u] = mask
    return reach


def build_graph(ts: TraceSet) -> DepGraph:
    """Construct the dependency graph of a set of local traces.

    Send/receive pairing comes from one full replay, since a post names
    only the sending thread, not the send location.
    """
    if any(isinstance(e, PostAsyncSnd) for t in ts for e in t.events):
        ts = normalize_buffered(ts)
    g = DepGraph()
    for t in ts:
        prev = None
        evs = t.events
        for i in range(0, len(evs), 2):
            pre: PreEvent = evs[i]
            if i + 1 < len(evs):
                post = evs[i + 1]
                chosen = committed_op(post)
                closed_recv = isinstance(post, PostRcv) and post.from_tid == 0
                g.add_node(_node_for(chosen, t.tid, True, closed_recv))
                if prev is not None:
                    g.add_edge(prev, chosen.loc, EdgeKind.PROGRAM_ORDER)
                    g.pred[chosen.loc] = prev
                for op in pre.options:
                    if op != chosen:
                        g.add_node(_node_for(op, t.tid, False))
                        if prev is not None:
                            g.pred[op.loc] = prev
                            g.add_edge(prev, op.loc, EdgeKind.PROGRAM_ORDER)
                        g.add_edge(op.loc, chosen.loc, EdgeKind.PROGRAM_ORDER)
                prev = chosen.loc
            else:
                for op in pre.options:
                    g.add_node(_node_for(op, t.tid, False))
                    if prev is not None:
                        g.add_edge(prev, op.loc, EdgeKind.PROGRAM_ORDER)
                        g.pred[op.loc] = prev

    if not g.nodes:
        return g
    rs = linearize(ts)
    for e in rs.emitted:
        if isinstance(e, RecvEvt) and e.from_tid != 0:
            g.add_edge(e.from_loc, e.loc, EdgeKind.SYNC)
            g.partner[e.from_loc] = e.loc
            g.partner[e.loc] = e.from_loc
    closes = defaultdict(list)
    for n in g.nodes.values():
        if n.kind is NodeKind.CLOSE and n.committed:
            closes[n.channel].append(n.loc)
    virtual = {t.tid for t in ts if t.virtual}
    for s, r in sorted((a, b) for a, b in g.partner.items() if g.nodes[a].kind is NodeKind.SEND):
        if g.nodes[s].tid not in virtual:
            g.before_close += [(s, c) for c in closes[g.nodes[s].channel]]
    for n in sorted(g.nodes.values(), key=lambda n: n.loc):
        if n.closed_recv:
            if not closes[n.channel]:
                raise InconsistentTrace(f"receive at {n.loc} on {n.channel} which is never closed")
            for c in closes[n.channel]:
                g.add_edge(c, n.loc, EdgeKind.CLOSE_BEFORE)
    g._closure()
    g._path_closure()
    return g


def happens_before(g: DepGraph, a: int, b: int) -> bool:
    """A directed path leads from ``a`` to ``b``."""
    g._check(a)
    g._check(b)
    return a != b and bool(g._path_closure()[a] >> b & 1)


def concurrent(g: DepGraph, a: int, b: int) -> bool:
    return a != b and not happens_before(g, a, b) and not happens_before(g, b, a)


def ordered_before(g: DepGraph, a: int, b: int) -> bool:
    """``a`` commits before ``b`` in every execution the traces allow."""
    g._check(a)
    g._check(b)
    if a == b:
        return False
    ua, ub = g.unit(a), g.unit(b)
    if ua == ub:
        # the two halves of one synchronisation: the send comes first
        return g.nodes[a].kind is NodeKind.SEND
    return bool(g._closure()[ua] >> g._unit_index[ub] & 1)


def _settled_before(g: DepGraph, a: int, b: int) -> bool:
    """``a`` must have committed before ``b`` can be attempted."""
    p = g.pred.get(b)
    if p is None:
        return False
    ua, up = g.unit(a), g.unit(p)
    return ua == up or bool(g._closure()[ua] >> g._unit_index[up] & 1)


def can_be_pending_together(g: DepGraph, a: int, b: int) -> bool:
    """Some point of some execution has both ``a`` and ``b`` attempted
    but not yet committed."""
    g._check(a)
    g._check(b)
    return a != b and not _settled_before(g, a, b) and not _settled_before(g, b, a)


def alt_communications_graph(g: DepGraph) -> list[tuple[int, int]]:
    """Send/receive location pairs on one channel that did not synchronise
    with each other but could both be pending at the same time."""
    sends = defaultdict(list)
    recvs = defaultdict(list)
    for n in g.nodes.values():
        if n.kind is NodeKind.SEND:
            sends[n.channel].append(n)
        elif n.kind is NodeKind.RECV:
            recvs[n.channel].append(n)
    out = []
    for ch, slist in sends.items():
        for s in slist:
            for r in recvs.get(ch, ()):
                if s.tid != r.tid and g.partner.get(s.loc) != r.loc and can_be_pending_together(g, s.loc, r.loc):
                    out.append((s.loc, r.loc))
    return sorted(out)


def close_hazards(g: DepGraph) -> list[tuple[int, int]]:
    """(send, close) pairs with no path from the send to the close: the
    send might have been attempted after the channel was closed."""
    out = []
    for c in g.nodes.values():
        if c.kind is not NodeKind.CLOSE or not c.committed:
            continue
        for s in g.nodes.values():
            if s.kind is NodeKind.SEND and s.channel == c.channel and not happens_before(g, s.loc, c.loc):
                out.append((s.loc, c.loc))
    return sorted(out)


def _unit_events(g: DepGraph, u: int) -> tuple:
    n = g.nodes[u]
    if n.kind is NodeKind.SEND:
        r = g.nodes[g.partner[u]]
        return (SendEvt(n.tid, n.channel, n.loc), RecvEvt(r.tid, n.tid, r.channel, r.loc, n.loc))
    if n.kind is NodeKind.RECV:
        return (RecvEvt(n.tid, 0, n.channel, n.loc, 0),)
    if n.kind is NodeKind.CLOSE:
        return (CloseEvt(n.tid, n.channel, n.loc),)
    return (SelectDefaultEvt(n.tid, n.loc),)


def schedules_by_backward_traversal(g: DepGraph, cap: int = 1024) -> tuple[list[tuple], bool]:
    """Orders of the committed steps that respect happens-before.

    Walks backwards: a step may be visited once every step it happens
    before has been visited. Returns (schedules, truncated).
    """
    reach = g._closure()
    index = g._unit_index
    units = sorted(
        {
            g.unit(n.loc)
            for n in g.nodes.values()
            if n.committed and (n.kind is not NodeKind.SEND or n.loc in g.partner)
        }
    )
    children = {u: [v for v in units if reach[u] >> index[v] & 1] for u in units}
    out: list[tuple] = []
    marked: set[int] = set()
    suffix: list[int] = []

    def visit() -> bool:
        if len(marked) == len(units):
            out.append(tuple(e for u in reversed(suffix) for e in _unit_events(g, u)))
            return len(out) >= cap
        for u in units:
            if u not in marked and all(c in marked for c in children[u]):
                marked.add(u)
                suffix.append(u)
                stop = visit()
                suffix.pop()
                marked.discard(u)
                if stop:
                    return True
        return False

    truncated = visit() if units else False
    if not units:
        out.append(())
    return out, truncated


_EDGE_STYLE = {
    EdgeKind.PROGRAM_ORDER: "",
    EdgeKind.SYNC: " [style=bold]",
    EdgeKind.CLOSE_BEFORE: " [style=dotted]",
}


def to_dot(g: DepGraph) -> str:
    lines = ["digraph deps {"]
    for loc in sorted(g.nodes):
        n = g.nodes[loc]
        style = "" if n.committed else ", style=dashed"
        lines.append(f'  n{loc} [label="{n.label}"{style}];')
    for e in sorted(g.edges, key=lambda e: (e.src, e.dst, e.kind.value)):
        lines.append(f"  n{e.src} -> n{e.dst}{_EDGE_STYLE[e.kind]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def per_kind_out_degree_ok(g: DepGraph) -> bool:
    """At most one program-order and one sync edge leave each committed node
    towards committed nodes."""
    seen = set()
    for e in g.edges:
        if g.nodes[e.src].committed and g.nodes[e.dst].committed:
            key = (e.src, e.kind)
            if key in seen:
                return False
            seen.add(key)
    return True
