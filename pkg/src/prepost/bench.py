"""Tracing overhead in payload words and extra channel links.

Pre/post tracing piggybacks the sender's thread id on every message.
Vector-clock tracing ships a clock with one entry per thread and needs a
reply channel so the sender can learn the receiver's clock. Both are
counted per transmitted message of one run; wall-clock time is not
measured.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .events import RecvEvt
from .instrument import trace_run
from .interpreter import DEFAULT_MAX_STEPS
from .program import Program


@dataclass(frozen=True)
class SchemeCost:
    per_message_words: int
    total_words: int
    extra_links: int


@dataclass(frozen=True)
class OverheadStats:
    status: str
    thread_count: int
    message_count: int
    total_trace_events: int
    prepost: SchemeCost
    vclock: SchemeCost

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "threads": self.thread_count,
            "messages": self.message_count,
            "trace_events": self.total_trace_events,
            "prepost": vars(self.prepost),
            "vclock": vars(self.vclock),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        rows = [("scheme", "words/msg", "total words", "extra links")]
        for name, c in (("pre/post", self.prepost), ("vclock", self.vclock)):
            rows.append((name, str(c.per_message_words), str(c.total_words), str(c.extra_links)))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        table = [
            "  ".join([r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in range(1, 4)]) for r in rows
        ]
        head = [
            f"status: {self.status}",
            f"threads: {self.thread_count}",
            f"messages: {self.message_count}",
            f"trace events: {self.total_trace_events}",
        ]
        return "\n".join(head + table) + "\n"


def overhead(prog: Program, seed: int = 0, max_steps: int = DEFAULT_MAX_STEPS) -> OverheadStats:
    """Run ``prog`` once (instrumented) and account both tracing schemes."""
    tr = trace_run(prog, seed, max_steps)
    result = tr.result
    # every delivered message, synchronous or from a buffer; a receive on a
    # closed channel transmits nothing
    messages = sum(1 for e in result.trace if isinstance(e, RecvEvt) and e.from_tid != 0)
    threads = result.thread_count
    return OverheadStats(
        status=result.status.value,
        thread_count=threads,
        message_count=messages,
        total_trace_events=tr.traces.event_count,
        prepost=SchemeCost(1, messages, 0),
        vclock=SchemeCost(threads, messages * threads, messages),
    )
