"""Analysis of a trace set, rendered as text or JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .depgraph import build_graph, close_hazards
from .dsl import format_expr
from .events import format_run_trace
from .program import Close, Go, Program, Recv, Select, Send
from .replay import (
    DEFAULT_MAX_SCHEDULES,
    DEFAULT_MAX_STATES,
    enumerate_schedules,
    find_alternative_communications,
    linearize,
    matching,
    residual_report,
)
from .traces import TraceSet, normalize_buffered

SAMPLE_SCHEDULES = 5


def op_snippets(prog: Program) -> dict[int, str]:
    """Source text of every located operation, keyed by location."""
    out: dict[int, str] = {}

    def walk(p: Program) -> None:
        for c in p:
            if isinstance(c, Go):
                walk(c.body)
            elif isinstance(c, Close):
                out[c.loc] = f"close({c.channel})"
            elif isinstance(c, Select):
                for b in c.branches:
                    op = b.op
                    if isinstance(op, Send):
                        out[op.loc] = f"{op.channel} <- {format_expr(op.payload)}"
                    elif isinstance(op, Recv):
                        out[op.loc] = f"{op.target} := <-{op.channel}" if op.target else f"<-{op.channel}"
                    walk(b.body)
                if c.default is not None:
                    out[c.default.loc] = "default"
                    walk(c.default.body)

    walk(prog)
    return out


@dataclass
class AnalysisReport:
    threads: list[int]
    virtual_threads: list[int]
    event_count: int
    deadlock: bool
    synchronisations: list[tuple[str, str]]
    schedule_count: int
    schedules_truncated: bool
    sample_schedules: list[str]
    alternatives: list[dict]
    alternatives_truncated: bool
    pending: list[tuple[int, str]]
    close_hazards: list[tuple[str, str]]
    graph_nodes: int
    graph_edges: int
    snippets: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "threads": self.threads,
            "virtual_threads": self.virtual_threads,
            "events": self.event_count,
            "status": "DEADLOCK" if self.deadlock else "COMPLETED",
            "synchronisations": [list(p) for p in self.synchronisations],
            "schedules": {
                "count": self.schedule_count,
                "truncated": self.schedules_truncated,
                "sample": self.sample_schedules,
            },
            "alternative_communications": {
                "pairs": self.alternatives,
                "truncated": self.alternatives_truncated,
            },
            "pending": [{"tid": t, "pre": p} for t, p in self.pending],
            "close_hazards": [{"send": s, "close": c} for s, c in self.close_hazards],
            "graph": {"nodes": self.graph_nodes, "edges": self.graph_edges},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"threads: {len(self.threads)} (virtual: {len(self.virtual_threads)})",
            f"events: {self.event_count}",
            f"status: {'DEADLOCK' if self.deadlock else 'COMPLETED'}",
            f"synchronisations: {len(self.synchronisations)}",
        ]
        lines += [f"  {s} -> {r}" for s, r in self.synchronisations]
        more = " (truncated)" if self.schedules_truncated else ""
        lines.append(f"schedules: {self.schedule_count}{more}")
        lines += [f"  {i}: {s}" for i, s in enumerate(self.sample_schedules, start=1)]
        more = " (truncated)" if self.alternatives_truncated else ""
        lines.append(f"alternative communications: {len(self.alternatives)}{more}")
        for a in self.alternatives:
            line = f"  {a['send']} <-> {a['recv']}"
            if a["send_loc"] in self.snippets and a["recv_loc"] in self.snippets:
                line += f"    [{self.snippets[a['send_loc']]}] / [{self.snippets[a['recv_loc']]}]"
            lines.append(line)
        lines.append(f"pending: {len(self.pending)}")
        lines += [f"  T{t}: {p}" for t, p in self.pending]
        lines.append(f"close hazards: {len(self.close_hazards)}")
        lines += [f"  {s} may follow {c}" for s, c in self.close_hazards]
        lines.append(f"graph: {self.graph_nodes} nodes, {self.graph_edges} edges")
        return "\n".join(lines) + "\n"


def analyze(
    ts: TraceSet,
    max_schedules: int = DEFAULT_MAX_SCHEDULES,
    max_states: int = DEFAULT_MAX_STATES,
    program: Program | None = None,
) -> AnalysisReport:
    """Run the replay and graph analyses over one trace set."""
    ts = normalize_buffered(ts)
    rs = linearize(ts, max_states)
    residue = residual_report(rs)
    g = build_graph(ts)
    label = lambda loc: g.nodes[loc].label  # noqa: E731
    scheds = enumerate_schedules(ts, max_schedules, max_states)
    alts = find_alternative_communications(ts, max_states)
    return AnalysisReport(
        threads=[t.tid for t in ts if not t.virtual],
        virtual_threads=[t.tid for t in ts if t.virtual],
        event_count=ts.event_count,
        deadlock=not residue.completed,
        synchronisations=[(label(s), label(r)) for s, r in sorted(matching(rs))],
        schedule_count=len(scheds),
        schedules_truncated=scheds.truncated,
        sample_schedules=[format_run_trace(s) for s in scheds.traces[:SAMPLE_SCHEDULES]],
        alternatives=[
            {
                "send": f"{m.channel}!|{m.send_loc}",
                "recv": f"{m.channel}?|{m.recv_loc}",
                "send_loc": m.send_loc,
                "recv_loc": m.recv_loc,
                "send_committed": m.send_committed,
                "recv_committed": m.recv_committed,
            }
            for m in alts.matches
        ],
        alternatives_truncated=alts.truncated,
        pending=[(tid, str(pre)) for tid, pre in residue.pending],
        close_hazards=[(label(s), label(c)) for s, c in close_hazards(g)],
        graph_nodes=len(g.nodes),
        graph_edges=len(g.edges),
        snippets=op_snippets(program) if program is not None else {},
    )
