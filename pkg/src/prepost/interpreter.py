"""Small-step semantics with a seeded scheduler.

A configuration holds the shared state, the live threads and the next
thread id. ``enabled_steps`` lists every applicable rule instance; ``run``
picks among them uniformly with a seeded PRNG until the main thread has
finished (the program exits), no step is enabled (deadlock) or the step
budget is spent.

``explore_traces`` and ``realize`` walk the whole choice tree instead of
sampling it; they serve as brute-force oracles for the trace analyses.
"""

from __future__ import annotations

import enum
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .events import CloseEvt, RecvEvt, SelectDefaultEvt, SendEvt, TraceEvent
from .program import (
    Assign,
    ChanState,
    Close,
    EvalError,
    Go,
    Last,
    ListVal,
    MakeChan,
    Message,
    Program,
    Select,
    Send,
    State,
    Start,
    TraceAppend,
    TraceInit,
    VarRef,
    eval_expr,
    state_override,
    trace_var,
)

MAIN_TID = 1
DEFAULT_MAX_STEPS = 100_000


class RunError(Exception):
    """The run aborted; ``trace`` holds the events emitted before the failure."""

    def __init__(self, message: str):
        super().__init__(message)
        self.trace: tuple[TraceEvent, ...] = ()


class CrashOnClosedSend(RunError):
    pass


class Status(enum.Enum):
    COMPLETED = "COMPLETED"
    DEADLOCK = "DEADLOCK"
    STEP_LIMIT = "STEP_LIMIT"


@dataclass(frozen=True)
class Config:
    state: State = field(default_factory=dict)
    threads: tuple[tuple[int, Program], ...] = ()
    next_tid: int = MAIN_TID + 1

    @classmethod
    def initial(cls, prog: Program) -> Config:
        return _settle(cls({}, ((MAIN_TID, tuple(prog)),), MAIN_TID + 1), (MAIN_TID,))

    def program_of(self, tid: int) -> Program:
        for t, p in self.threads:
            if t == tid:
                return p
        raise KeyError(tid)

    def key(self):
        return (frozenset(self.state.items()), self.threads, self.next_tid)

    @property
    def main_done(self) -> bool:
        return not self.program_of(MAIN_TID)


@dataclass(frozen=True)
class StepChoice:
    """One rule instance. For ``sync`` the sender is ``tid`` and the
    receiver ``partner``; branch indexes refer to the head selects."""

    rule: str
    tid: int
    branch: int = -1
    partner: int = 0
    partner_branch: int = -1


@dataclass
class RunResult:
    final_state: State
    trace: tuple[TraceEvent, ...]
    status: Status
    seed: int | None
    config: Config
    steps: int = 0

    @property
    def thread_count(self) -> int:
        return self.config.next_tid - 1


_LOCAL_RULES = {
    Assign: "assign",
    MakeChan: "makechan",
    Go: "go",
    Close: "close",
    TraceInit: "trace",
    TraceAppend: "trace",
    Start: "start",
}


def enabled_steps(cfg: Config) -> list[StepChoice]:
    """Every step the configuration can take, in a deterministic order."""
    state = cfg.state
    choices: list[StepChoice] = []
    senders: dict[str, list[tuple[int, int]]] = defaultdict(list)
    receivers: dict[str, list[tuple[int, int]]] = defaultdict(list)
    selects: list[tuple[int, Select]] = []

    for tid, prog in cfg.threads:
        if not prog:
            if tid != MAIN_TID:
                choices.append(StepChoice("terminate", tid))
            continue
        head = prog[0]
        if not isinstance(head, Select):
            choices.append(StepChoice(_LOCAL_RULES[type(head)], tid))
            continue
        selects.append((tid, head))
        for bi, b in enumerate(head.branches):
            ch = state.get(b.op.channel)
            if isinstance(ch, ChanState) and not ch.buffered and not ch.closed:
                side = senders if isinstance(b.op, Send) else receivers
                side[b.op.channel].append((tid, bi))

    for tid, sel in selects:
        ready = False
        for bi, b in enumerate(sel.branches):
            name = b.op.channel
            ch = state.get(name)
            if not isinstance(ch, ChanState):
                continue  # never-made channel blocks forever
            if isinstance(b.op, Send):
                if ch.closed:
                    choices.append(StepChoice("crash", tid, bi))
                    ready = True
                elif ch.buffered:
                    if len(ch.buffer) < ch.capacity:
                        choices.append(StepChoice("bsend", tid, bi))
                        ready = True
                elif any(t != tid for t, _ in receivers.get(name, ())):
                    ready = True
            else:
                if ch.buffer:
                    choices.append(StepChoice("brecv", tid, bi))
                    ready = True
                elif ch.closed:
                    choices.append(StepChoice("rclosed", tid, bi))
                    ready = True
                elif not ch.buffered and any(t != tid for t, _ in senders.get(name, ())):
                    ready = True
        if sel.default is not None and not ready:
            choices.append(StepChoice("default", tid))

    for name, slist in senders.items():
        rlist = receivers.get(name, ())
        for st, sb in slist:
            for rt, rb in rlist:
                if st != rt:
                    choices.append(StepChoice("sync", st, sb, rt, rb))
    return choices


def _replace_thread(threads, tid: int, prog: Program):
    return tuple((t, prog if t == tid else p) for t, p in threads)


def _log(state: State, tid: int, cmd) -> State:
    name = trace_var(tid)
    if isinstance(cmd, TraceInit):
        return state_override(state, name, ListVal(()))
    current = state.get(name)
    if not isinstance(current, ListVal):
        raise RunError(f"thread {tid} logs before its trace is initialised")
    entry = eval_expr(state, tid, cmd.entry)
    return state_override(state, name, ListVal(current.items + (entry,)))


def _bookkeeping(cmd) -> bool:
    """Logging, or unpacking a received ``[sender, value]`` pair."""
    if isinstance(cmd, (TraceInit, TraceAppend)):
        return True
    return (
        isinstance(cmd, Assign)
        and isinstance(cmd.rhs, Last)
        and isinstance(cmd.rhs.arg, VarRef)
        and cmd.rhs.arg.name.startswith("$")
    )


def _settle(cfg: Config, tids) -> Config:
    """Run the leading bookkeeping commands of ``tids`` within the current step.

    Bookkeeping is not behaviour: folding it into the step that precedes it
    gives an instrumented program exactly the scheduling choices of the
    original, and keeps the local traces in line with the committed events
    even when the program exits right after a communication.
    """
    state = cfg.state
    threads = cfg.threads
    for tid in tids:
        prog = None
        for t, p in threads:
            if t == tid:
                prog = p
        if not prog or not _bookkeeping(prog[0]):
            continue
        i = 0
        while i < len(prog) and _bookkeeping(prog[i]):
            cmd = prog[i]
            if isinstance(cmd, Assign):
                state = state_override(state, cmd.target, eval_expr(state, tid, cmd.rhs))
            else:
                state = _log(state, tid, cmd)
            i += 1
        threads = _replace_thread(threads, tid, prog[i:])
    if state is cfg.state and threads is cfg.threads:
        return cfg
    return Config(state, threads, cfg.next_tid)


def step(cfg: Config, choice: StepChoice) -> tuple[Config, list[TraceEvent]]:
    """Apply one enabled rule instance; returns the new config and emitted events."""
    try:
        nxt, events = _apply(cfg, choice)
        return _settle(nxt, (choice.tid, choice.partner)), events
    except EvalError as e:
        raise RunError(f"thread {choice.tid}: {e}") from e


def _apply(cfg: Config, choice: StepChoice) -> tuple[Config, list[TraceEvent]]:
    state = cfg.state
    tid = choice.tid
    prog = cfg.program_of(tid)
    rule = choice.rule

    if rule == "terminate":
        threads = tuple((t, p) for t, p in cfg.threads if t != tid)
        return Config(state, threads, cfg.next_tid), []

    head, rest = prog[0], prog[1:]
    events: list[TraceEvent] = []

    if rule == "assign":
        state = state_override(state, head.target, eval_expr(state, tid, head.rhs))
    elif rule == "makechan":
        state = state_override(state, head.target, ChanState(head.capacity))
    elif rule == "go":
        new_tid = cfg.next_tid
        threads = _replace_thread(cfg.threads, tid, rest) + ((new_tid, (Start(),) + head.body),)
        return Config(state, threads, new_tid + 1), []
    elif rule == "close":
        ch = state.get(head.channel)
        if not isinstance(ch, ChanState):
            raise RunError(f"close of non-channel {head.channel!r}")
        if ch.closed:
            raise RunError(f"close of closed channel {head.channel!r}")
        state = state_override(state, head.channel, ChanState(ch.capacity, ch.buffer, True))
        events.append(CloseEvt(tid, head.channel, head.loc))
    elif rule == "trace":
        state = _log(state, tid, head)
    elif rule == "start":
        pass
    elif rule == "sync":
        op_s = head.branches[choice.branch].op
        rprog = cfg.program_of(choice.partner)
        rsel = rprog[0]
        rbranch = rsel.branches[choice.partner_branch]
        op_r = rbranch.op
        value = eval_expr(state, tid, op_s.payload)
        if op_r.target is not None:
            state = state_override(state, op_r.target, value)
        events = [
            SendEvt(tid, op_s.channel, op_s.loc),
            RecvEvt(choice.partner, tid, op_r.channel, op_r.loc, op_s.loc),
        ]
        body_s = head.branches[choice.branch].body
        threads = tuple(
            (t, body_s + rest if t == tid else rbranch.body + rprog[1:] if t == choice.partner else p)
            for t, p in cfg.threads
        )
        return Config(state, threads, cfg.next_tid), events
    elif rule == "bsend":
        branch = head.branches[choice.branch]
        op = branch.op
        ch = state[op.channel]
        msg = Message(eval_expr(state, tid, op.payload), tid, op.loc)
        state = state_override(state, op.channel, ChanState(ch.capacity, ch.buffer + (msg,), ch.closed))
        events.append(SendEvt(tid, op.channel, op.loc))
        rest = branch.body + rest
    elif rule in ("brecv", "rclosed"):
        branch = head.branches[choice.branch]
        op = branch.op
        if rule == "brecv":
            ch = state[op.channel]
            msg, buffer = ch.buffer[0], ch.buffer[1:]
            state = state_override(state, op.channel, ChanState(ch.capacity, buffer, ch.closed))
            value, sender, send_loc = msg.value, msg.sender, msg.send_loc
        else:
            value, sender, send_loc = op.zero, 0, 0
        if op.target is not None:
            state = state_override(state, op.target, value)
        events.append(RecvEvt(tid, sender, op.channel, op.loc, send_loc))
        rest = branch.body + rest
    elif rule == "default":
        events.append(SelectDefaultEvt(tid, head.default.loc))
        rest = head.default.body + rest
    elif rule == "crash":
        op = head.branches[choice.branch].op
        raise CrashOnClosedSend(f"thread {tid} sends on closed channel {op.channel!r} at {op.loc}")
    else:
        raise ValueError(f"unknown rule {rule!r}")

    return Config(state, _replace_thread(cfg.threads, tid, rest), cfg.next_tid), events


def finish(cfg: Config) -> Config:
    """Start every thread still waiting for its first turn and settle all
    bookkeeping, without any further communication."""
    threads = tuple((t, p[1:] if p and isinstance(p[0], Start) else p) for t, p in cfg.threads)
    return _settle(Config(cfg.state, threads, cfg.next_tid), [t for t, _ in threads])


def run(prog: Program, seed: int = 0, max_steps: int = DEFAULT_MAX_STEPS) -> RunResult:
    """Execute ``prog`` under a seeded uniform scheduler.

    The run ends as soon as the main thread has no commands left, like a Go
    program returning from ``main``; pending threads are abandoned. Their
    are started and their leading logging is flushed first (see ``finish``),
    so a thread parked on a communication still shows its pre record.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    rng = random.Random(seed)
    cfg = Config.initial(prog)
    trace: list[TraceEvent] = []
    steps = 0
    status = Status.COMPLETED
    while not cfg.main_done:
        if steps >= max_steps:
            status = Status.STEP_LIMIT
            break
        choices = enabled_steps(cfg)
        if not choices:
            status = Status.DEADLOCK
            break
        choice = choices[rng.randrange(len(choices))]
        try:
            cfg, events = step(cfg, choice)
        except RunError as e:
            e.trace = tuple(trace)
            raise
        trace.extend(events)
        steps += 1
    cfg = finish(cfg)
    return RunResult(cfg.state, tuple(trace), status, seed, cfg, steps)


def run_choices(prog: Program, choices: Iterable[int]) -> tuple[Config, tuple[TraceEvent, ...]]:
    """Replay an explicit sequence of choice indexes into ``enabled_steps``."""
    cfg = Config.initial(prog)
    trace: list[TraceEvent] = []
    for idx in choices:
        cfg, events = step(cfg, enabled_steps(cfg)[idx])
        trace.extend(events)
    return cfg, tuple(trace)


def _successors(cfg: Config):
    for idx, choice in enumerate(enabled_steps(cfg)):
        try:
            nxt, events = step(cfg, choice)
        except RunError:
            continue  # crashing branches produce no complete run
        yield idx, nxt, events


def explore_traces(prog: Program, max_configs: int = 200_000) -> set[tuple[TraceEvent, ...]]:
    """All traces at configurations where the main thread has finished.

    Runs may continue after main finishes, so every such configuration on
    every path counts. Raises ``RuntimeError`` past ``max_configs``.
    """
    memo: dict = {}

    def visit(cfg: Config) -> frozenset:
        key = cfg.key()
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= max_configs:
            raise RuntimeError("configuration budget exhausted")
        out = {()} if cfg.main_done else set()
        for _, nxt, events in _successors(cfg):
            ev = tuple(events)
            out.update(ev + suffix for suffix in visit(nxt))
        result = frozenset(out)
        memo[key] = result
        return result

    return set(visit(Config.initial(prog)))


def realize(
    prog: Program,
    target: tuple[TraceEvent, ...],
    view: Callable[[TraceEvent], tuple[TraceEvent, ...]] | None = None,
    max_configs: int = 500_000,
) -> list[int] | None:
    """Find choice indexes under which ``prog`` emits exactly ``target``
    (after mapping each event through ``view``) and main finishes.

    Returns ``None`` when no such run exists.
    """
    view = view or (lambda e: (e,))
    target = tuple(target)
    dead: set = set()

    def search(cfg: Config, pos: int, path: list[int]) -> list[int] | None:
        if pos == len(target) and cfg.main_done:
            return path
        key = (cfg.key(), pos)
        if key in dead:
            return None
        if len(dead) >= max_configs:
            raise RuntimeError("configuration budget exhausted")
        for idx, nxt, events in _successors(cfg):
            mapped = tuple(m for e in events for m in view(e))
            end = pos + len(mapped)
            if target[pos:end] != mapped:
                continue
            found = search(nxt, end, path + [idx])
            if found is not None:
                return found
        dead.add(key)
        return None

    return search(Config.initial(prog), 0, [])
