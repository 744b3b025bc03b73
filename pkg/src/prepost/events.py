"""Run-time trace events: committed communications in global order."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class SendEvt:
    tid: int
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"{self.tid}!{self.channel}@{self.loc}"


@dataclass(frozen=True)
class RecvEvt:
    tid: int
    from_tid: int  # 0: received from a closed channel
    channel: str
    loc: int
    from_loc: int = 0

    def __str__(self) -> str:
        return f"{self.tid}?<{self.from_tid},{self.channel}>@{self.loc}"


@dataclass(frozen=True)
class SelectDefaultEvt:
    tid: int
    loc: int

    def __str__(self) -> str:
        return f"{self.tid}:select@{self.loc}"


@dataclass(frozen=True)
class CloseEvt:
    tid: int
    channel: str
    loc: int

    def __str__(self) -> str:
        return f"{self.tid}:close {self.channel}@{self.loc}"


TraceEvent = Union[SendEvt, RecvEvt, SelectDefaultEvt, CloseEvt]
RunTimeTrace = tuple  # tuple[TraceEvent, ...]


def format_run_trace(trace) -> str:
    return "; ".join(str(e) for e in trace)
