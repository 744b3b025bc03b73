import pytest
from hypothesis import given, strategies as st

from prepost import corpus
from prepost.dsl import parse_program
from prepost.instrument import trace_run
from prepost.traces import (
    LocalTrace,
    PostAsyncSnd,
    PostRcv,
    PostSnd,
    PreEvent,
    RcvOp,
    SndOp,
    TraceFormatError,
    TraceSet,
    format_trace_set,
    normalize_buffered,
    parse_event,
    parse_trace_set,
    read_trace_file,
    write_trace_file,
)
from conftest import GOLDEN
from programs_strategy import programs
from strategies import trace_sets


def test_writer_line_format():
    ts = TraceSet.of({1: [], 2: [PreEvent((SndOp("r", 1),)), PostSnd("r", 1)]})
    assert format_trace_set(ts) == "T1:\nT2: pre(r!@1); post(r!@1)\n"


def test_empty_main_only():
    assert parse_trace_set("T1:\n") == TraceSet.of({1: []})


def test_newsreader_file_has_eight_threads():
    ts = read_trace_file(GOLDEN / "newsreader_good.trace")
    assert len(ts) == 8
    assert ts[5].dangling == PreEvent((RcvOp("r", 8),))


def test_event_syntax():
    assert parse_event("pre(x!@1|y?@2|close z@3|sel@4)").options[2].channel == "z"
    assert parse_event("post(3#x?@7)") == PostRcv("x", 7, 3)
    assert parse_event("postA(x!@2~9)") == PostAsyncSnd("x", 2, 9)


@pytest.mark.parametrize(
    "text",
    [
        "T1: post(x!@1); post(x!@1)",  # post without pre
        "T1: pre(x!@1); pre(x!@1)",  # two pres
        "T1: pre(x!@1); post(y!@1)",  # commits to an option not offered
        "T1: pre(sel@2|x!@1)",  # default not last
        "T1: pre(x!@1|x!@1)",  # duplicate option
        "T1: pre()",
        "X1: pre(x!@1)",
        "T1:\nT1:",
        "T1: pre(x!@1) post(x!@1)",
    ],
)
def test_malformed_rejected(text):
    with pytest.raises(TraceFormatError):
        parse_trace_set(text)


def test_error_names_line():
    with pytest.raises(TraceFormatError, match="line 2"):
        parse_trace_set("T1:\nT2: pre(x!@1); pre(x!@1)\n")


@given(trace_sets())
def test_text_round_trip(ts):
    assert parse_trace_set(format_trace_set(ts)) == ts


@given(programs(), st.integers(0, 10_000))
def test_file_round_trip_of_runs(tmp_path_factory, src, seed):
    ts = trace_run(parse_program(src), seed).traces
    path = tmp_path_factory.mktemp("t") / "run.trace"
    write_trace_file(ts, path)
    assert read_trace_file(path) == ts
    assert path.read_bytes().endswith(b"\n") and b"\r" not in path.read_bytes()


@pytest.mark.parametrize("name", corpus.NAMES)
def test_corpus_golden_traces_byte_exact(name):
    raw = (GOLDEN / "corpus" / f"{name}.trace").read_text(encoding="utf-8")
    assert format_trace_set(parse_trace_set(raw)) == raw
    assert format_trace_set(trace_run(corpus.load(name), 0).traces) == raw


def test_normalize_moves_buffered_send():
    ts = read_trace_file(GOLDEN / "small" / "buffered2.seed0.trace")
    n = normalize_buffered(ts)
    v = [t for t in n if t.virtual]
    assert len(v) == 1 and v[0].events == (PreEvent((SndOp("x", 1),)), PostSnd("x", 1))
    # the receive names the virtual thread
    assert n[1].events[1] == PostRcv("x", 3, v[0].tid)


def test_normalize_identity_without_buffers():
    ts = read_trace_file(GOLDEN / "fig1.trace")
    assert normalize_buffered(ts) == ts


def test_normalize_duplicate_virtual_tid():
    pre = PreEvent((SndOp("x", 1),))
    ts = TraceSet.of({1: [pre, PostAsyncSnd("x", 1, 2)], 2: []})
    with pytest.raises(TraceFormatError):
        normalize_buffered(ts)


@given(programs(), st.integers(0, 10_000))
def test_normalize_properties(src, seed):
    n = normalize_buffered(trace_run(parse_program(src), seed).traces)
    assert not any(isinstance(e, PostAsyncSnd) for t in n for e in t.events)
    assert all(len(t) == 2 for t in n if t.virtual)
    assert normalize_buffered(n) == n


def test_virtual_line_prefix():
    ts = TraceSet((LocalTrace(1, ()), LocalTrace(4, (PreEvent((SndOp("x", 1),)), PostSnd("x", 1)), True)))
    text = format_trace_set(ts)
    assert text.splitlines()[1].startswith("V4:")
    assert parse_trace_set(text) == ts
