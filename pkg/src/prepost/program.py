"""AST, values, state and expression evaluation for the straight-line channel language.

A program is a tuple of commands. Communication only happens through
``Select``; a bare ``x <- e`` or ``y := <-x`` is a one-branch select with no
default. Every communication op, close and default branch carries a
location id that identifies it across traces and the dependency graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class EvalError(Exception):
    """Expression evaluation failed (unbound name, head of empty list, ...)."""


# ---------------------------------------------------------------------------
# Values and storables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntVal:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class NameVal:
    """A variable name used as a value; stands in for the name's hash index."""

    name: str

    def __str__(self) -> str:
        return f"#{self.name}"


@dataclass(frozen=True)
class ListVal:
    items: tuple[Value, ...] = ()

    def __str__(self) -> str:
        return "[" + ", ".join(str(v) for v in self.items) + "]"


Value = Union[IntVal, NameVal, ListVal]


@dataclass(frozen=True)
class Message:
    """A buffered message: the value plus who sent it and from where."""

    value: Value
    sender: int
    send_loc: int


@dataclass(frozen=True)
class ChanState:
    capacity: int = 0
    buffer: tuple[Message, ...] = ()
    closed: bool = False

    @property
    def buffered(self) -> bool:
        return self.capacity > 0


Storable = Union[IntVal, NameVal, ListVal, ChanState]
State = Mapping[str, Storable]


def state_override(base: State, name: str, value: Storable) -> dict[str, Storable]:
    """Return ``base ⊕ (name ↦ value)``; the new binding wins."""
    new = dict(base)
    new[name] = value
    return new


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class HashOf:
    name: str


@dataclass(frozen=True)
class Head:
    arg: Expr


@dataclass(frozen=True)
class Last:
    arg: Expr


@dataclass(frozen=True)
class ListLit:
    elements: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class Tid:
    pass


Expr = Union[VarRef, IntLit, HashOf, Head, Last, ListLit, Tid]


def eval_expr(state: State, tid: int, e: Expr) -> Value:
    """Big-step evaluation of ``e`` in thread ``tid``. Never mutates ``state``."""
    if isinstance(e, IntLit):
        if not INT_MIN <= e.value <= INT_MAX:
            raise EvalError(f"integer literal {e.value} overflows 64 bits")
        return IntVal(e.value)
    if isinstance(e, VarRef):
        try:
            v = state[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
        if isinstance(v, ChanState):
            raise EvalError(f"{e.name!r} is a channel, not a value")
        return v
    if isinstance(e, HashOf):
        return NameVal(e.name)
    if isinstance(e, Tid):
        return IntVal(tid)
    if isinstance(e, ListLit):
        return ListVal(tuple(eval_expr(state, tid, b) for b in e.elements))
    if isinstance(e, (Head, Last)):
        v = eval_expr(state, tid, e.arg)
        what = "head" if isinstance(e, Head) else "last"
        if not isinstance(v, ListVal):
            raise EvalError(f"{what} of non-list value {v}")
        if not v.items:
            raise EvalError(f"{what} of empty list")
        return v.items[0] if isinstance(e, Head) else v.items[-1]
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    channel: str
    payload: Expr
    loc: int


@dataclass(frozen=True)
class Recv:
    channel: str
    target: str | None
    loc: int
    # value delivered when the channel is closed; instrumentation widens it
    # to a [sender, value] pair so head/last still apply
    zero: Value = IntVal(0)


CommOp = Union[Send, Recv]


@dataclass(frozen=True)
class Branch:
    op: CommOp
    body: Program = ()


@dataclass(frozen=True)
class Default:
    loc: int
    body: Program = ()


@dataclass(frozen=True)
class Assign:
    target: str
    rhs: Expr


@dataclass(frozen=True)
class MakeChan:
    target: str
    capacity: int = 0


@dataclass(frozen=True)
class Go:
    body: Program


@dataclass(frozen=True)
class Select:
    branches: tuple[Branch, ...]
    default: Default | None = None


@dataclass(frozen=True)
class Close:
    channel: str
    loc: int


@dataclass(frozen=True)
class TraceInit:
    """Instrumentation only: start this thread's local trace as ``[]``."""


@dataclass(frozen=True)
class TraceAppend:
    """Instrumentation only: append the value of ``entry`` to this thread's trace."""

    entry: Expr


@dataclass(frozen=True)
class Start:
    """Run-time only: heads a spawned thread until the scheduler first picks it."""


Command = Union[Assign, MakeChan, Go, Select, Close, TraceInit, TraceAppend, Start]
Program = tuple  # tuple[Command, ...]


def trace_var(tid: int) -> str:
    """Reserved state name holding the local trace of thread ``tid``."""
    return f"$trace${tid}"


def send(channel: str, payload: Expr, loc: int) -> Select:
    return Select((Branch(Send(channel, payload, loc)),))


def recv(channel: str, target: str | None, loc: int) -> Select:
    return Select((Branch(Recv(channel, target, loc)),))


def iter_commands(prog: Program):
    """Yield every command in ``prog`` depth-first, in source order."""
    for c in prog:
        yield c
        if isinstance(c, Go):
            yield from iter_commands(c.body)
        elif isinstance(c, Select):
            for b in c.branches:
                yield from iter_commands(b.body)
            if c.default is not None:
                yield from iter_commands(c.default.body)


def locations(prog: Program) -> list[int]:
    """All location ids in source order."""
    out: list[int] = []

    def walk(p: Program) -> None:
        for c in p:
            if isinstance(c, Go):
                walk(c.body)
            elif isinstance(c, Close):
                out.append(c.loc)
            elif isinstance(c, Select):
                for b in c.branches:
                    out.append(b.op.loc)
                    walk(b.body)
                if c.default is not None:
                    out.append(c.default.loc)
                    walk(c.default.body)

    walk(prog)
    return out


def comm_ops(prog: Program) -> list[CommOp]:
    """All send/receive ops in source order."""
    ops: list[CommOp] = []
    for c in iter_commands(prog):
        if isinstance(c, Select):
            ops.extend(b.op for b in c.branches)
    return ops


def channel_capacities(prog: Program) -> dict[str, int]:
    """Capacity of every channel name created by ``makeChan``.

    A name made both synchronous and buffered is rejected since its sends
    could not be classified ahead of the run.
    """
    caps: dict[str, int] = {}
    for c in iter_commands(prog):
        if isinstance(c, MakeChan):
            prev = caps.setdefault(c.target, c.capacity)
            if (prev > 0) != (c.capacity > 0):
                raise ValueError(f"channel {c.target!r} is made both buffered and unbuffered")
    return caps
