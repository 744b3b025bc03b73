"""Hypothesis strategies for trace-model values."""

from hypothesis import strategies as st

from prepost.traces import (
    CloseOp,
    DefaultOp,
    LocalTrace,
    PostAsyncSnd,
    PostClose,
    PostRcv,
    PostSelect,
    PostSnd,
    PreEvent,
    RcvOp,
    SndOp,
    TraceSet,
)

names = st.sampled_from(["x", "y", "ch1", "r_2"])
locs = st.integers(1, 40)
tids = st.integers(1, 12)

comm_ops = st.one_of(st.builds(SndOp, names, locs), st.builds(RcvOp, names, locs))


@st.composite
def pre_events(draw):
    ops = draw(st.lists(st.one_of(comm_ops, st.builds(CloseOp, names, locs)), min_size=1, max_size=3, unique=True))
    if draw(st.booleans()):
        ops.append(DefaultOp(draw(locs.filter(lambda l: all(getattr(o, "loc", None) != l for o in ops)))))
    return PreEvent(tuple(ops))


def post_for(draw, pre):
    op = draw(st.sampled_from(pre.options))
    if isinstance(op, SndOp):
        if draw(st.booleans()):
            return PostAsyncSnd(op.channel, op.loc, draw(st.integers(20, 40)))
        return PostSnd(op.channel, op.loc)
    if isinstance(op, RcvOp):
        return PostRcv(op.channel, op.loc, draw(st.integers(0, 12)))
    if isinstance(op, CloseOp):
        return PostClose(op.channel, op.loc)
    return PostSelect(op.loc)


@st.composite
def local_events(draw):
    pre = draw(pre_events())
    return pre if draw(st.booleans()) else post_for(draw, pre)


@st.composite
def local_traces(draw, tid):
    evs = []
    for _ in range(draw(st.integers(0, 4))):
        pre = draw(pre_events())
        evs += [pre, post_for(draw, pre)]
    if draw(st.booleans()):
        evs.append(draw(pre_events()))
    return LocalTrace(tid, tuple(evs), draw(st.booleans()) if tid > 1 else False)


@st.composite
def trace_sets(draw):
    ids = draw(st.sets(st.integers(2, 12), max_size=4))
    return TraceSet(tuple(draw(local_traces(t)) for t in [1, *sorted(ids)]))
