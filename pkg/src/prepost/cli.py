"""Command-line front end: run, analyze, graph, bench.

Exit codes: 0 ok, 1 bad input or failed run, 2 traces that no replay can
explain.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus
from .bench import overhead
from .depgraph import build_graph, to_dot
from .dsl import ParseError, parse_program
from .events import format_run_trace
from .instrument import InstrumentationError, trace_run
from .interpreter import DEFAULT_MAX_STEPS, RunError
from .replay import DEFAULT_MAX_SCHEDULES, DEFAULT_MAX_STATES, InconsistentTrace
from .report import analyze
from .traces import TraceFormatError, format_trace_set, read_trace_file, write_trace_file

EXIT_OK, EXIT_INPUT, EXIT_INCONSISTENT = 0, 1, 2


class InputError(Exception):
    pass


def _load_program(spec: str):
    """A DSL file path, or the name of a bundled program."""
    path = Path(spec)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    elif spec in corpus.NAMES:
        text = corpus.source(spec)
    else:
        raise InputError(f"no such program: {spec}")
    return parse_program(text)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    prog = _load_program(args.program)
    tr = trace_run(prog, args.seed, args.max_steps)
    r = tr.result
    lines = [
        f"status: {r.status.value}",
        f"seed: {args.seed}",
        f"threads: {len(tr.traces)}",
        f"steps: {r.steps}",
        f"trace events: {len(r.trace)}",
        f"run-time trace: {format_run_trace(r.trace)}",
    ]
    if args.json:
        doc = {
            "status": r.status.value,
            "seed": args.seed,
            "threads": len(tr.traces),
            "steps": r.steps,
            "trace": [str(e) for e in r.trace],
        }
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        write_trace_file(tr.traces, args.out)
    elif not args.json:
        sys.stdout.write(format_trace_set(tr.traces))
    return EXIT_OK


def cmd_analyze(args) -> int:
    ts = read_trace_file(args.trace)
    prog = _load_program(args.program) if args.program else None
    rep = analyze(ts, args.max_schedules, args.max_states, prog)
    _emit(rep.to_json() if args.json else rep.to_text(), args.out)
    return EXIT_OK


def cmd_graph(args) -> int:
    ts = read_trace_file(args.trace)
    _emit(to_dot(build_graph(ts)), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.program in corpus.GENERATED and not Path(args.program).is_file():
        prog = parse_program(corpus.generate(args.program, args.n, args.k))
    else:
        if args.n is not None or args.k is not None:
            raise InputError("--n/--k apply only to addpipe, primesieve and collector")
        prog = _load_program(args.program)
    stats = overhead(prog, args.seed, args.max_steps)
    _emit(stats.to_json() if args.json else stats.to_text(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prepost", description="Pre/post tracing for channel programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="instrument and run a program, write its local traces")
    p.add_argument("program", help="DSL file or bundled program name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--out", help="trace file to write (default: standard output)")
    p.add_argument("--json", action="store_true", help="machine-readable summary")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="replay and graph analyses of a trace file")
    p.add_argument("trace")
    p.add_argument("--max-schedules", type=int, default=DEFAULT_MAX_SCHEDULES)
    p.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)
    p.add_argument("--program", help="program the traces came from, to quote source")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("graph", help="dependency graph of a trace file in DOT")
    p.add_argument("trace")
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("bench", help="tracing payload overhead of one run")
    p.add_argument("program", help="DSL file, bundled program or generator name")
    p.add_argument("--n", type=int, help="generator size (threads, primes or producers)")
    p.add_argument("--k", type=int, help="messages, for addpipe")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_schedules", 1) < 1 or getattr(args, "max_states", 1) < 1 or getattr(args, "max_steps", 1) < 1:
        print("error: limits must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InconsistentTrace as e:
        print(f"error: inconsistent traces: {e}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except (InputError, ParseError, TraceFormatError, InstrumentationError, RunError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
