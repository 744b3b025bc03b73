"""Source-to-source instrumentation that logs pre/post events per thread.

Every select first appends one ``pre`` listing all of its options to the
thread's trace variable. Sends transmit ``[tid, value]`` so the receiver can
log who it synchronised with; receives bind a fresh name, log
``post(head(y')#x?)`` and then assign ``y := last(y')``. Sends on buffered
channels transmit a virtual thread id instead of ``tid`` and log ``postA``.

Trace entries are plain list values, encoded as

    pre(ops)  = [0, op, ...]        post(op) = [1, op]
    x!@l      = [#x, 1, l]          x?@l     = [#x, 0, l]
    i#x?@l    = [#x, 0, l, i]       close    = [#x, 2, l]
    sel@l     = [3, l]              postA    = [#x, 4, l, n]

Without locations the same layout minus ``l`` gives the classic encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import RecvEvt, SendEvt, TraceEvent
from .interpreter import DEFAULT_MAX_STEPS, RunResult, run
from .program import (
    Assign,
    Branch,
    Close,
    Default,
    Expr,
    Go,
    HashOf,
    Head,
    IntLit,
    IntVal,
    Last,
    ListLit,
    ListVal,
    MakeChan,
    NameVal,
    Program,
    Recv,
    Select,
    Send,
    Tid,
    TraceAppend,
    TraceInit,
    Value,
    VarRef,
    channel_capacities,
    iter_commands,
    locations,
    trace_var,
)
from .traces import (
    CloseOp,
    DefaultOp,
    LocalEvent,
    LocalTrace,
    PostAsyncSnd,
    PostClose,
    PostRcv,
    PostSelect,
    PostSnd,
    PreEvent,
    RcvOp,
    SndOp,
    TraceFormatError,
    TraceSet,
)

PRE, POST = 0, 1
RCV, SND, CLOSE, SEL, ASYNC = 0, 1, 2, 3, 4


class InstrumentationError(Exception):
    pass


class DecodeError(TraceFormatError):
    pass


@dataclass(frozen=True)
class InstrumentedProgram:
    program: Program
    original: Program
    vtids: dict[int, int] = field(default_factory=dict)  # buffered send loc -> virtual tid
    original_loc_of: dict[int, int] = field(default_factory=dict)

    @property
    def entry(self) -> Program:
        """The program actually run: main's trace is initialised first."""
        return (TraceInit(),) + self.program


def _fresh(loc: int) -> str:
    return f"$rcv${loc}"


def _op_expr(op) -> Expr:
    if isinstance(op, Send):
        return ListLit((HashOf(op.channel), IntLit(SND), IntLit(op.loc)))
    if isinstance(op, Recv):
        return ListLit((HashOf(op.channel), IntLit(RCV), IntLit(op.loc)))
    raise TypeError(op)


def _pre(ops: list[Expr]) -> TraceAppend:
    return TraceAppend(ListLit((IntLit(PRE),) + tuple(ops)))


def _post(op: Expr) -> TraceAppend:
    return TraceAppend(ListLit((IntLit(POST), op)))


def instrument(p: Program) -> InstrumentedProgram:
    """Instrument ``p`` for pre/post tracing."""
    for c in iter_commands(p):
        names = []
        if isinstance(c, (Assign, MakeChan)):
            names.append(c.target)
        elif isinstance(c, Close):
            names.append(c.channel)
        elif isinstance(c, Select):
            for b in c.branches:
                names.append(b.op.channel)
                if isinstance(b.op, Recv) and b.op.target:
                    names.append(b.op.target)
        elif isinstance(c, (TraceInit, TraceAppend)):
            raise InstrumentationError("program is already instrumented")
        for n in names:
            if n.startswith("$"):
                raise InstrumentationError(f"name {n!r} collides with reserved instrumentation names")

    try:
        caps = channel_capacities(p)
    except ValueError as e:
        raise InstrumentationError(str(e)) from None
    # every go runs at most once, so real tids never exceed 1 + #go
    vt_next = 2 + sum(1 for c in iter_commands(p) if isinstance(c, Go))
    vtids: dict[int, int] = {}

    def branch(b: Branch) -> Branch:
        nonlocal vt_next
        op = b.op
        body = prog(b.body)
        if isinstance(op, Send):
            if caps.get(op.channel, 0) > 0:
                vt = vtids[op.loc] = vt_next
                vt_next += 1
                log = ListLit((HashOf(op.channel), IntLit(ASYNC), IntLit(op.loc), IntLit(vt)))
                return Branch(Send(op.channel, ListLit((IntLit(vt), op.payload)), op.loc), (_post(log),) + body)
            return Branch(
                Send(op.channel, ListLit((Tid(), op.payload)), op.loc),
                (_post(_op_expr(op)),) + body,
            )
        y1 = _fresh(op.loc)
        log = ListLit((HashOf(op.channel), IntLit(RCV), IntLit(op.loc), Head(VarRef(y1))))
        unpack = (Assign(op.target, Last(VarRef(y1))),) if op.target is not None else ()
        zero = ListVal((IntVal(0), IntVal(0)))
        return Branch(Recv(op.channel, y1, op.loc, zero), (_post(log),) + unpack + body)

    def command(c) -> list:
        if isinstance(c, (Assign, MakeChan)):
            return [c]
        if isinstance(c, Go):
            return [Go((TraceInit(),) + prog(c.body))]
        if isinstance(c, Close):
            op = ListLit((HashOf(c.channel), IntLit(CLOSE), IntLit(c.loc)))
            return [_pre([op]), c, _post(op)]
        if isinstance(c, Select):
            ops = [_op_expr(b.op) for b in c.branches]
            default = None
            if c.default is not None:
                sel = ListLit((IntLit(SEL), IntLit(c.default.loc)))
                ops.append(sel)
                default = Default(c.default.loc, (_post(sel),) + prog(c.default.body))
            return [_pre(ops), Select(tuple(branch(b) for b in c.branches), default)]
        raise TypeError(f"not a command: {c!r}")

    def prog(q: Program) -> Program:
        return tuple(x for c in q for x in command(c))

    q = prog(p)
    return InstrumentedProgram(q, tuple(p), vtids, {loc: loc for loc in locations(p)})


def erase(q: Program) -> Program:
    """Strip instrumentation: drop logging, unwrap payloads, restore receive targets."""
    out = []
    for c in q:
        if isinstance(c, (TraceInit, TraceAppend)):
            continue
        if isinstance(c, Go):
            out.append(Go(erase(c.body)))
        elif isinstance(c, Select):
            branches = []
            for b in c.branches:
                op, body = b.op, list(b.body)
                if isinstance(op, Send):
                    op = Send(op.channel, op.payload.elements[1], op.loc)
                else:
                    target = None
                    rest = [x for x in body if not isinstance(x, TraceAppend)]
                    if rest and isinstance(rest[0], Assign) and rest[0].rhs == Last(VarRef(op.target)):
                        target = rest[0].target
                        body.remove(rest[0])
                    op = Recv(op.channel, target, op.loc)
                branches.append(Branch(op, erase(tuple(body))))
            default = None
            if c.default is not None:
                default = Default(c.default.loc, erase(c.default.body))
            out.append(Select(tuple(branches), default))
        else:
            out.append(c)
    return tuple(out)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _op_value(op, locs: bool, extra: int | None = None) -> Value:
    loc = (IntVal(op.loc),) if locs else ()
    tail = (IntVal(extra),) if extra is not None else ()
    if isinstance(op, DefaultOp):
        return ListVal((IntVal(SEL),) + loc)
    kind = {SndOp: SND, RcvOp: RCV, CloseOp: CLOSE}[type(op)]
    return ListVal((NameVal(op.channel), IntVal(kind)) + loc + tail)


def encode_event(ev: LocalEvent, locs: bool = True) -> Value:
    """List encoding of a local event, with or without location ids."""
    if isinstance(ev, PreEvent):
        return ListVal((IntVal(PRE),) + tuple(_op_value(o, locs) for o in ev.options))
    if isinstance(ev, PostSnd):
        body = _op_value(SndOp(ev.channel, ev.loc), locs)
    elif isinstance(ev, PostRcv):
        body = _op_value(RcvOp(ev.channel, ev.loc), locs, ev.from_tid)
    elif isinstance(ev, PostAsyncSnd):
        loc = (IntVal(ev.loc),) if locs else ()
        body = ListVal((NameVal(ev.channel), IntVal(ASYNC)) + loc + (IntVal(ev.vtid),))
    elif isinstance(ev, PostClose):
        body = _op_value(CloseOp(ev.channel, ev.loc), locs)
    elif isinstance(ev, PostSelect):
        body = _op_value(DefaultOp(ev.loc), locs)
    else:
        raise TypeError(ev)
    return ListVal((IntVal(POST), body))


def _ints(vals, where: str) -> list[int]:
    out = []
    for v in vals:
        if not isinstance(v, IntVal):
            raise DecodeError(f"{where}: expected integer, got {v}")
        out.append(v.value)
    return out


def _decode_op(v: Value, where: str):
    """Decode an op entry to (kind, channel, loc, extra)."""
    if not isinstance(v, ListVal) or not v.items:
        raise DecodeError(f"{where}: malformed op {v}")
    first = v.items[0]
    if isinstance(first, IntVal):
        if first.value != SEL or len(v.items) != 2:
            raise DecodeError(f"{where}: malformed op {v}")
        return SEL, None, _ints(v.items[1:], where)[0], None
    if not isinstance(first, NameVal) or len(v.items) not in (3, 4):
        raise DecodeError(f"{where}: malformed op {v}")
    nums = _ints(v.items[1:], where)
    kind, loc = nums[0], nums[1]
    extra = nums[2] if len(nums) == 3 else None
    if (
        kind not in (RCV, SND, CLOSE, ASYNC)
        or (kind in (SND, CLOSE) and extra is not None)
        or (kind == ASYNC and extra is None)
    ):
        raise DecodeError(f"{where}: malformed op {v}")
    return kind, first.name, loc, extra


def decode_event(v: Value, where: str = "entry") -> LocalEvent:
    """Inverse of ``encode_event(ev, locs=True)`` for pre and post entries."""
    if not isinstance(v, ListVal) or len(v.items) < 2 or not isinstance(v.items[0], IntVal):
        raise DecodeError(f"{where}: malformed event {v}")
    tag = v.items[0].value
    if tag == PRE:
        opts = []
        for item in v.items[1:]:
            kind, ch, loc, extra = _decode_op(item, where)
            if extra is not None:
                raise DecodeError(f"{where}: pre option carries a partner {item}")
            opts.append({SND: SndOp, RCV: RcvOp, CLOSE: CloseOp}[kind](ch, loc) if ch else DefaultOp(loc))
        try:
            return PreEvent(tuple(opts))
        except TraceFormatError as e:
            raise DecodeError(f"{where}: {e}") from None
    if tag == POST and len(v.items) == 2:
        kind, ch, loc, extra = _decode_op(v.items[1], where)
        if kind == SEL:
            return PostSelect(loc)
        if kind == SND:
            return PostSnd(ch, loc)
        if kind == CLOSE:
            return PostClose(ch, loc)
        if kind == ASYNC:
            return PostAsyncSnd(ch, loc, extra)
        if extra is None:
            raise DecodeError(f"{where}: receive post without sender {v}")
        return PostRcv(ch, loc, extra)
    raise DecodeError(f"{where}: malformed event {v}")


# ---------------------------------------------------------------------------
# Collecting traces
# ---------------------------------------------------------------------------


def collect_local_traces(result: RunResult) -> TraceSet:
    """Decode the per-thread trace variables of an instrumented run."""
    traces = []
    for tid in range(1, result.thread_count + 1):
        raw = result.final_state.get(trace_var(tid))
        if raw is None:
            traces.append(LocalTrace(tid, ()))
            continue
        if not isinstance(raw, ListVal):
            raise DecodeError(f"thread {tid}: trace variable holds {raw}")
        events = tuple(decode_event(v, f"thread {tid}, index {i}") for i, v in enumerate(raw.items))
        try:
            traces.append(LocalTrace(tid, events))
        except TraceFormatError as e:
            raise DecodeError(str(e)) from None
    return TraceSet(tuple(traces))


def virtual_view(vtids: dict[int, int]):
    """Map run-time events to how replay sees them after buffered normalization.

    A buffered send disappears at enqueue time; its receive becomes a send by
    the virtual thread immediately followed by the receive.
    """

    def view(e: TraceEvent) -> tuple[TraceEvent, ...]:
        if isinstance(e, SendEvt) and e.loc in vtids:
            return ()
        if isinstance(e, RecvEvt) and e.from_loc in vtids:
            vt = vtids[e.from_loc]
            return (SendEvt(vt, e.channel, e.from_loc), RecvEvt(e.tid, vt, e.channel, e.loc, e.from_loc))
        return (e,)

    return view


@dataclass
class TracedRun:
    instrumented: InstrumentedProgram
    result: RunResult
    traces: TraceSet  # as recorded, before buffered normalization

    @property
    def actual_trace(self) -> tuple[TraceEvent, ...]:
        """The run-time trace in the vocabulary of replay."""
        view = virtual_view(self.instrumented.vtids)
        return tuple(m for e in self.result.trace for m in view(e))


def trace_run(p: Program, seed: int = 0, max_steps: int = DEFAULT_MAX_STEPS) -> TracedRun:
    """Instrument ``p``, run it once and collect the local traces."""
    ip = instrument(p)
    result = run(ip.entry, seed, max_steps)
    return TracedRun(ip, result, collect_local_traces(result))
