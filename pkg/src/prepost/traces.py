"""Local traces of pre/post events and their text file format.

A local trace alternates ``pre`` (what a thread was about to try) and
``post`` (what actually committed). A trailing ``pre`` with no ``post`` is a
dangling pre: the thread blocked there or was never scheduled again.

File format, one line per thread, ``V`` marking virtual (buffered-send)
threads::

    T1: pre(x?@1); post(2#x?@1); pre(x?@2|sel@5); post(sel@5)
    T2: pre(x!@3); postA(x!@3~7)
    V7: pre(x!@3); post(x!@3)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union


class TraceFormatError(Exception):
    pass


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SndOp:
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"{self.channel}!@{self.loc}"


@dataclass(frozen=True)
class RcvOp:
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"{self.channel}?@{self.loc}"


@dataclass(frozen=True)
class CloseOp:
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"close {self.channel}@{self.loc}"


@dataclass(frozen=True)
class DefaultOp:
    loc: int

    def __str__(self) -> str:
        return f"sel@{self.loc}"


PreOp = Union[SndOp, RcvOp, CloseOp, DefaultOp]


@dataclass(frozen=True)
class PreEvent:
    options: tuple[PreOp, ...]

    def __post_init__(self):
        if not self.options:
            raise TraceFormatError("pre event needs at least one option")
        if len(set(self.options)) != len(self.options):
            raise TraceFormatError("duplicate options in pre event")
        for i, op in enumerate(self.options):
            if isinstance(op, DefaultOp) and i != len(self.options) - 1:
                raise TraceFormatError("default option must come last")

    def __str__(self) -> str:
        return "pre(" + "|".join(str(o) for o in self.options) + ")"


@dataclass(frozen=True)
class PostSnd:
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"post({self.channel}!@{self.loc})"


@dataclass(frozen=True)
class PostRcv:
    channel: str
    loc: int
    from_tid: int  # 0: receive on a closed channel

    def __str__(self) -> str:
        return f"post({self.from_tid}#{self.channel}?@{self.loc})"


@dataclass(frozen=True)
class PostAsyncSnd:
    channel: str
    loc: int
    vtid: int

    def __str__(self) -> str:
        return f"postA({self.channel}!@{self.loc}~{self.vtid})"


@dataclass(frozen=True)
class PostSelect:
    loc: int

    def __str__(self) -> str:
        return f"post(sel@{self.loc})"


@dataclass(frozen=True)
class PostClose:
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"post(close {self.channel}@{self.loc})"


PostEvent = Union[PostSnd, PostRcv, PostAsyncSnd, PostSelect, PostClose]
LocalEvent = Union[PreEvent, PostEvent]


def committed_op(post: PostEvent) -> PreOp:
    """The pre option a post event commits to."""
    if isinstance(post, (PostSnd, PostAsyncSnd)):
        return SndOp(post.channel, post.loc)
    if isinstance(post, PostRcv):
        return RcvOp(post.channel, post.loc)
    if isinstance(post, PostClose):
        return CloseOp(post.channel, post.loc)
    if isinstance(post, PostSelect):
        return DefaultOp(post.loc)
    raise TypeError(post)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalTrace:
    tid: int
    events: tuple[LocalEvent, ...] = ()
    virtual: bool = False

    def __post_init__(self):
        validate_events(self.tid, self.events)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def dangling(self) -> PreEvent | None:
        """The trailing pre with no post, if any."""
        if len(self.events) % 2 == 1:
            return self.events[-1]
        return None


def validate_events(tid: int, events: tuple) -> None:
    for i, ev in enumerate(events):
        want_pre = i % 2 == 0
        if want_pre and not isinstance(ev, PreEvent):
            raise TraceFormatError(f"thread {tid}, event {i}: expected pre, got {ev}")
        if not want_pre:
            if isinstance(ev, PreEvent):
                raise TraceFormatError(f"thread {tid}, event {i}: expected post, got {ev}")
            if committed_op(ev) not in events[i - 1].options:
                raise TraceFormatError(
                    f"thread {tid}, event {i}: {ev} commits to an option not offered by {events[i - 1]}"
                )


@dataclass(frozen=True)
class TraceSet:
    """Local traces of one run, sorted by thread id."""

    traces: tuple[LocalTrace, ...] = field(default_factory=tuple)

    def __post_init__(self):
        tids = [t.tid for t in self.traces]
        if len(set(tids)) != len(tids):
            raise TraceFormatError("duplicate thread id in trace set")
        ordered = tuple(sorted(self.traces, key=lambda t: t.tid))
        object.__setattr__(self, "traces", ordered)

    @classmethod
    def of(cls, mapping: dict[int, Iterable[LocalEvent]], virtual: Iterable[int] = ()) -> TraceSet:
        vs = set(virtual)
        return cls(tuple(LocalTrace(t, tuple(evs), t in vs) for t, evs in mapping.items()))

    def __iter__(self) -> Iterator[LocalTrace]:
        return iter(self.traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __getitem__(self, tid: int) -> LocalTrace:
        for t in self.traces:
            if t.tid == tid:
                return t
        raise KeyError(tid)

    @property
    def tids(self) -> list[int]:
        return [t.tid for t in self.traces]

    @property
    def event_count(self) -> int:
        return sum(len(t) for t in self.traces)


# ---------------------------------------------------------------------------
# Buffered sends
# ---------------------------------------------------------------------------


def normalize_buffered(ts: TraceSet) -> TraceSet:
    """Move each buffered send into its own virtual two-event trace.

    The ``pre`` and ``postA`` pair leaves its home thread; the virtual
    trace is named by the tid recorded in ``postA`` and ends with a plain
    send post, so the buffered send looks like a synchronous send made by
    a thread of its own. Runs in time linear in the number of events.
    """
    out: list[LocalTrace] = []
    moved: list[LocalTrace] = []
    for t in ts:
        kept: list[LocalEvent] = []
        evs = t.events
        i = 0
        while i < len(evs):
            if i + 1 < len(evs) and isinstance(evs[i + 1], PostAsyncSnd):
                post = evs[i + 1]
                moved.append(LocalTrace(post.vtid, (evs[i], PostSnd(post.channel, post.loc)), True))
                i += 2
                continue
            kept.append(evs[i])
            i += 1
        out.append(LocalTrace(t.tid, tuple(kept), t.virtual))
    seen = {t.tid for t in out}
    for v in moved:
        if v.tid in seen:
            raise TraceFormatError(f"duplicate virtual thread id {v.tid}")
        seen.add(v.tid)
    return TraceSet(tuple(out + moved))


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def format_trace_set(ts: TraceSet) -> str:
    lines = []
    for t in ts:
        head = f"{'V' if t.virtual else 'T'}{t.tid}:"
        body = "; ".join(str(e) for e in t.events)
        lines.append(f"{head} {body}" if body else head)
    return "\n".join(lines) + ("\n" if lines else "")


def write_trace_file(ts: TraceSet, path) -> None:
    Path(path).write_text(format_trace_set(ts), encoding="utf-8", newline="\n")


_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_LINE_RE = re.compile(r"^([TV])(\d+):(?: (.*))?$")
_OP_PATTERNS = [
    (re.compile(rf"^({_NAME})!@(\d+)$"), lambda m: SndOp(m[1], int(m[2]))),
    (re.compile(rf"^({_NAME})\?@(\d+)$"), lambda m: RcvOp(m[1], int(m[2]))),
    (re.compile(rf"^close ({_NAME})@(\d+)$"), lambda m: CloseOp(m[1], int(m[2]))),
    (re.compile(r"^sel@(\d+)$"), lambda m: DefaultOp(int(m[1]))),
]
_POST_PATTERNS = [
    (re.compile(rf"^post\(({_NAME})!@(\d+)\)$"), lambda m: PostSnd(m[1], int(m[2]))),
    (re.compile(rf"^post\((\d+)#({_NAME})\?@(\d+)\)$"), lambda m: PostRcv(m[2], int(m[3]), int(m[1]))),
    (re.compile(rf"^postA\(({_NAME})!@(\d+)~(\d+)\)$"), lambda m: PostAsyncSnd(m[1], int(m[2]), int(m[3]))),
    (re.compile(r"^post\(sel@(\d+)\)$"), lambda m: PostSelect(int(m[1]))),
    (re.compile(rf"^post\(close ({_NAME})@(\d+)\)$"), lambda m: PostClose(m[1], int(m[2]))),
]


def parse_event(text: str) -> LocalEvent:
    if text.startswith("pre(") and text.endswith(")"):
        opts = []
        for part in text[4:-1].split("|"):
            for pat, build in _OP_PATTERNS:
                m = pat.match(part)
                if m:
                    opts.append(build(m))
                    break
            else:
                raise TraceFormatError(f"bad pre option {part!r}")
        return PreEvent(tuple(opts))
    for pat, build in _POST_PATTERNS:
        m = pat.match(text)
        if m:
            return build(m)
    raise TraceFormatError(f"bad event {text!r}")


def parse_trace_set(text: str) -> TraceSet:
    traces = []
    for n, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise TraceFormatError(f"line {n}: expected 'T<tid>: events'")
        try:
            events = tuple(parse_event(e) for e in m[3].split("; ")) if m[3] else ()
            traces.append(LocalTrace(int(m[2]), events, m[1] == "V"))
        except TraceFormatError as e:
            raise TraceFormatError(f"line {n}: {e}") from None
    try:
        return TraceSet(tuple(traces))
    except TraceFormatError as e:
        raise TraceFormatError(f"{e}") from None


def read_trace_file(path) -> TraceSet:
    return parse_trace_set(Path(path).read_text(encoding="utf-8"))
