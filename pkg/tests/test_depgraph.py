import pytest
from hypothesis import given, strategies as st

from prepost import corpus
from prepost.depgraph import (
    EdgeKind,
    alt_communications_graph,
    build_graph,
    can_be_pending_together,
    close_hazards,
    concurrent,
    happens_before,
    ordered_before,
    per_kind_out_degree_ok,
    schedules_by_backward_traversal,
    to_dot,
)
from prepost.dsl import parse_program
from prepost.events import SendEvt
from prepost.instrument import trace_run
from prepost.replay import (
    InconsistentTrace,
    enumerate_schedules,
    find_alternative_communications,
    linearize,
    matching,
    schedule_order,
)
from prepost.traces import TraceSet, parse_trace_set, read_trace_file
from conftest import GOLDEN
from oracle import order_in_all
from programs_strategy import programs

FIG1 = read_trace_file(GOLDEN / "fig1.trace")
NEWS = read_trace_file(GOLDEN / "newsreader_good.trace")


def edges(g, kind):
    return {(e.src, e.dst) for e in g.edges if e.kind is kind}


def pairing(s):
    return {(a.loc, b.loc) for a, b in zip(s, s[1:]) if isinstance(a, SendEvt)}


def test_fig1_structure():
    g = build_graph(FIG1)
    assert sorted(g.nodes) == [1, 2, 3, 4, 5, 6]
    assert edges(g, EdgeKind.SYNC) == {(3, 1), (5, 2), (4, 6)}
    assert edges(g, EdgeKind.PROGRAM_ORDER) == {(4, 5), (1, 2)}


def test_fig1_happens_before():
    g = build_graph(FIG1)
    assert happens_before(g, 3, 1) and happens_before(g, 3, 2)
    assert not happens_before(g, 5, 1) and not happens_before(g, 1, 5)
    assert not happens_before(g, 1, 1)
    assert concurrent(g, 5, 1) and not concurrent(g, 3, 1) and not concurrent(g, 2, 2)


def test_unknown_location():
    with pytest.raises(KeyError):
        happens_before(build_graph(FIG1), 1, 99)


def test_fig1_alternatives():
    assert alt_communications_graph(build_graph(FIG1)) == [(5, 1)]


def test_fig1_alternatives_brute_force():
    # every send/receive pair on one channel that did not sync and is concurrent
    g = build_graph(FIG1)
    sends = [n for n in g.nodes.values() if n.kind.value == "send"]
    recvs = [n for n in g.nodes.values() if n.kind.value == "recv"]
    want = sorted(
        (s.loc, r.loc)
        for s in sends
        for r in recvs
        if s.channel == r.channel and g.partner.get(s.loc) != r.loc and concurrent(g, s.loc, r.loc)
    )
    assert want == [(5, 1)]


def test_fig1_backward_traversal():
    scheds, truncated = schedules_by_backward_traversal(build_graph(FIG1))
    assert not truncated
    assert set(scheds) == set(enumerate_schedules(FIG1).traces)
    # y!|4 is only visited once x?|2 and x!|5 are marked
    for s in scheds:
        locs = [e.loc for e in s]
        assert locs.index(4) < locs.index(5) < locs.index(2)


def test_fig1_dot_golden():
    assert to_dot(build_graph(FIG1)) == (GOLDEN / "fig1.dot").read_text()
    dot = to_dot(build_graph(FIG1))
    assert dot.count("label=") == 6 and dot.count("->") == 5 and "dashed" not in dot


def test_newsreader_graph():
    g = build_graph(NEWS)
    assert not g.nodes[8].committed and not g.nodes[5].committed
    assert (1, 8) in alt_communications_graph(g)
    dot = to_dot(g)
    assert 'n8 [label="r?|8", style=dashed];' in dot
    assert dot == (GOLDEN / "newsreader_good.dot").read_text()


def test_empty_graph():
    g = build_graph(TraceSet.of({1: []}))
    assert g.nodes == {} and to_dot(g) == "digraph deps {\n}\n"
    assert schedules_by_backward_traversal(g) == ([()], False)


def test_chain_has_one_schedule():
    ts = parse_trace_set("T1: pre(x?@2); post(2#x?@2); pre(y!@3); post(y!@3)\nT2: pre(x!@1); post(x!@1); pre(y?@4); post(1#y?@4)\n")
    assert len(schedules_by_backward_traversal(build_graph(ts))[0]) == 1


def test_buffered_send_node_lives_in_virtual_trace():
    ts = read_trace_file(GOLDEN / "small" / "buffered2.seed0.trace")
    g = build_graph(ts)
    b1 = g.nodes[1]
    assert b1.tid == 3  # the virtual tid recorded by postA
    assert g.partner[1] == 3
    assert not g.nodes[2].committed


def test_addpipe_small_has_no_alternatives():
    prog = parse_program(corpus.generate_addpipe(3, 1))
    ts = trace_run(prog, 0).traces
    g = build_graph(ts)
    assert alt_communications_graph(g) == []
    assert len(enumerate_schedules(ts)) == 1


def test_close_edge_and_hazard():
    ts = read_trace_file(GOLDEN / "small" / "closedChan.seed0.trace")
    g = build_graph(ts)
    assert close_hazards(g) == [(1, 3)]
    closed = parse_trace_set("T1: pre(close x@2); post(close x@2); pre(x?@3); post(0#x?@3)\nT2: pre(x?@1); post(0#x?@1)\n")
    g = build_graph(closed)
    assert edges(g, EdgeKind.CLOSE_BEFORE) == {(2, 3), (2, 1)}
    assert ".." not in to_dot(g) and "style=dotted" in to_dot(g)


def test_cycle_is_inconsistent():
    ts = parse_trace_set(
        "T1: pre(x?@1); post(2#x?@1); pre(y!@2); post(y!@2)\nT2: pre(y?@3); post(1#y?@3); pre(x!@4); post(x!@4)\n"
    )
    with pytest.raises(InconsistentTrace):
        g = build_graph(ts)
        ordered_before(g, 1, 2)


def test_out_degree_per_kind():
    assert per_kind_out_degree_ok(build_graph(FIG1))
    g = build_graph(FIG1)
    # y!|4 has a program-order and a sync successor
    assert {e.kind for e in g.out_edges(4)} == {EdgeKind.PROGRAM_ORDER, EdgeKind.SYNC}


@pytest.mark.parametrize("name", corpus.NAMES)
def test_corpus_dot_golden(name):
    ts = read_trace_file(GOLDEN / "corpus" / f"{name}.trace")
    assert to_dot(build_graph(ts)) == (GOLDEN / "corpus" / f"{name}.dot").read_text()


@given(programs(), st.integers(0, 10_000))
def test_graph_agrees_with_replay(src, seed):
    ts = trace_run(parse_program(src), seed).traces
    g = build_graph(ts)
    assert per_kind_out_degree_ok(g)
    pairs = matching(linearize(ts))
    assert set(alt_communications_graph(g)) == find_alternative_communications(ts, pairs=pairs).pairs
    order, locs = schedule_order(ts, pairs=pairs)
    for a in locs:
        for b in locs:
            if a != b:
                assert ordered_before(g, a, b) == ((a, b) in order)
    back, truncated = schedules_by_backward_traversal(g)
    sched = enumerate_schedules(ts)
    if not truncated and not sched.truncated and sched.traces:
        assert set(back) == {s for s in sched.traces if pairing(s) == set(pairs)}


@given(programs(buffered=False), st.integers(0, 10_000))
def test_ordered_before_is_order_in_every_pinned_schedule(src, seed):
    ts = trace_run(parse_program(src), seed).traces
    sched = enumerate_schedules(ts)
    if not sched.traces or sched.truncated:
        return
    g = build_graph(ts)
    pairs = matching(linearize(ts))
    pinned = [s for s in sched.traces if pairing(s) == set(pairs)]
    committed = {e.loc for e in pinned[0]}
    for a in committed:
        for b in committed:
            if a != b:
                assert ordered_before(g, a, b) == order_in_all(pinned, a, b)


def test_pending_together_over_plain_concurrency():
    # c?|3 is attempted after d!|2, whose partner d?|6 comes after c?|5
    # took c!|1: no path links c!|1 and c?|3, yet they never wait together
    ts = parse_trace_set(
        "T1: pre(c!@1); post(c!@1)\n"
        "T2: pre(d!@2); post(d!@2); pre(c?@3)\n"
        "T3: pre(c?@5); post(1#c?@5); pre(d?@6); post(2#d?@6)\n"
    )
    g = build_graph(ts)
    assert concurrent(g, 1, 3)
    assert not can_be_pending_together(g, 1, 3)
    assert alt_communications_graph(g) == []
    assert find_alternative_communications(ts).pairs == set()
