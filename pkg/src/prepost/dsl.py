"""Text syntax for programs: tokenizer, recursive-descent parser, printer.

One command per line (``;`` also separates). ``//`` starts a comment.
Location ids are assigned in source order unless every op carries an
explicit ``@N`` label, which lets corpus files reuse published numbering.

    x := makeChan            y := makeChan(cap 2)
    x <- [1, tid]            y := <-x          <-x
    go { ... }               close(x)
    select {
      case x <- 1:  ...
      case y := <-x @4: ...
      default: ...
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .program import (
    Assign,
    Branch,
    Close,
    Default,
    Expr,
    Go,
    HashOf,
    Head,
    IntLit,
    Last,
    ListLit,
    MakeChan,
    Program,
    Recv,
    Select,
    Send,
    Tid,
    TraceAppend,
    TraceInit,
    VarRef,
    locations,
)

KEYWORDS = {
    "makeChan", "go", "select", "case", "default", "timeout",
    "close", "head", "last", "tid", "cap",
}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # NAME INT OP NL EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>//[^\n]*)|(?P<nl>\n)"
    r"|(?P<int>-?\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|<-|[{}()\[\],;:#@])"
)


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            toks.append(Token("NL", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "int":
            toks.append(Token("INT", m.group(), line, col))
        elif kind == "name":
            toks.append(Token("NAME", m.group(), line, col))
        elif kind == "op":
            toks.append(Token("OP", m.group(), line, col))
        pos = m.end()
    toks.append(Token("EOF", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.labels: list[int | None] = []  # one entry per located op, source order

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("OP", "NAME") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.tok.text if self.tok.kind != "NL" else "newline"
            raise self.error(f"expected {text!r}, found {shown or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> str:
        t = self.tok
        if t.kind != "NAME" or t.text in KEYWORDS:
            raise self.error(f"expected a name, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def skip_seps(self) -> None:
        while self.tok.kind == "NL" or self.at(";"):
            self.i += 1

    def end_command(self) -> None:
        if self.tok.kind in ("NL", "EOF") or self.at(";") or self.at("}"):
            return
        if self.at("case") or self.at("default") or self.at("timeout"):
            return
        raise self.error(f"unexpected {self.tok.text!r} after command")

    # -- locations ---------------------------------------------------------

    def located(self) -> int:
        """Reserve a location slot, reading an optional ``@N`` label."""
        label = None
        if self.at("@"):
            self.i += 1
            t = self.tok
            if t.kind != "INT" or int(t.text) < 1:
                raise self.error("expected a positive location number after '@'")
            self.i += 1
            label = int(t.text)
        self.labels.append(label)
        return len(self.labels)  # provisional, resolved after parsing

    # -- grammar -----------------------------------------------------------

    def program(self, closing: tuple[str, ...] = ()) -> Program:
        cmds = []
        self.skip_seps()
        while self.tok.kind != "EOF" and not any(self.at(c) for c in closing):
            cmds.append(self.command())
            self.end_command()
            self.skip_seps()
        return tuple(cmds)

    def command(self):
        t = self.tok
        if self.at("go"):
            self.i += 1
            self.expect("{")
            body = self.program(("}",))
            self.expect("}")
            return Go(body)
        if self.at("select"):
            return self.select()
        if self.at("close"):
            self.i += 1
            self.expect("(")
            ch = self.name()
            self.expect(")")
            return Close(ch, self.located())
        if self.at("<-"):
            return Select((Branch(self.comm_op()),))
        if t.kind == "NAME" and t.text not in KEYWORDS:
            nxt = self.peek()
            if nxt.text == "<-":
                return Select((Branch(self.comm_op()),))
            if nxt.text == ":=":
                if self.peek(2).text == "<-":
                    return Select((Branch(self.comm_op()),))
                target = self.name()
                self.expect(":=")
                if self.at("makeChan"):
                    self.i += 1
                    cap = 0
                    if self.at("("):
                        self.i += 1
                        self.expect("cap")
                        ct = self.tok
                        if ct.kind != "INT" or int(ct.text) < 0:
                            raise self.error("expected a non-negative capacity")
                        self.i += 1
                        cap = int(ct.text)
                        self.expect(")")
                    return MakeChan(target, cap)
                return Assign(target, self.expr())
        raise self.error(f"unknown construct starting with {t.text or 'end of input'!r}")

    def comm_op(self):
        if self.at("<-"):
            self.i += 1
            ch = self.name()
            return Recv(ch, None, self.located())
        first = self.name()
        if self.at("<-"):
            self.i += 1
            payload = self.expr()
            return Send(first, payload, self.located())
        self.expect(":=")
        self.expect("<-")
        ch = self.name()
        return Recv(ch, first, self.located())

    def select(self) -> Select:
        self.expect("select")
        self.expect("{")
        self.skip_seps()
        branches = []
        default = None
        while self.at("case"):
            self.i += 1
            op = self.comm_op()
            self.expect(":")
            body = self.program(("case", "default", "timeout", "}"))
            branches.append(Branch(op, body))
        if self.at("default") or self.at("timeout"):
            self.i += 1
            loc = self.located()
            self.expect(":")
            body = self.program(("}",))
            default = Default(loc, body)
        if not branches and default is None:
            raise self.error("select needs at least one case")
        self.expect("}")
        return Select(tuple(branches), default)

    def expr(self) -> Expr:
        t = self.tok
        if t.kind == "INT":
            self.i += 1
            return IntLit(int(t.text))
        if self.at("["):
            self.i += 1
            elems = []
            if not self.at("]"):
                elems.append(self.expr())
                while self.at(","):
                    self.i += 1
                    elems.append(self.expr())
            self.expect("]")
            return ListLit(tuple(elems))
        if self.at("#"):
            self.i += 1
            return HashOf(self.name())
        if self.at("tid"):
            self.i += 1
            return Tid()
        if self.at("head") or self.at("last"):
            fn = Head if t.text == "head" else Last
            self.i += 1
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return fn(arg)
        if t.kind == "NAME" and t.text not in KEYWORDS:
            self.i += 1
            return VarRef(t.text)
        raise self.error(f"expected an expression, found {t.text or 'end of input'!r}")


def _relabel(prog: Program, mapping: dict[int, int]) -> Program:
    """Replace provisional location ids by final ones."""
    out = []
    for c in prog:
        if isinstance(c, Go):
            out.append(Go(_relabel(c.body, mapping)))
        elif isinstance(c, Close):
            out.append(Close(c.channel, mapping[c.loc]))
        elif isinstance(c, Select):
            branches = []
            for b in c.branches:
                op = b.op
                if isinstance(op, Send):
                    op = Send(op.channel, op.payload, mapping[op.loc])
                else:
                    op = Recv(op.channel, op.target, mapping[op.loc], op.zero)
                branches.append(Branch(op, _relabel(b.body, mapping)))
            default = None
            if c.default is not None:
                default = Default(mapping[c.default.loc], _relabel(c.default.body, mapping))
            out.append(Select(tuple(branches), default))
        else:
            out.append(c)
    return tuple(out)


def parse_program(text: str) -> Program:
    """Parse DSL source into a program with dense location ids."""
    p = _Parser(text)
    prog = p.program()
    if p.tok.kind != "EOF":
        raise p.error(f"unexpected {p.tok.text!r}")
    labels = p.labels
    given = [x for x in labels if x is not None]
    if not given:
        return prog  # provisional ids are already source order
    if len(given) != len(labels):
        raise ParseError("either every op carries an @N label or none does", 1, 1)
    if sorted(given) != list(range(1, len(labels) + 1)):
        raise ParseError(f"@N labels must be exactly 1..{len(labels)}", 1, 1)
    return _relabel(prog, {i + 1: lab for i, lab in enumerate(labels)})


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def format_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, HashOf):
        return f"#{e.name}"
    if isinstance(e, Tid):
        return "tid"
    if isinstance(e, Head):
        return f"head({format_expr(e.arg)})"
    if isinstance(e, Last):
        return f"last({format_expr(e.arg)})"
    if isinstance(e, ListLit):
        return "[" + ", ".join(format_expr(b) for b in e.elements) + "]"
    raise TypeError(f"not an expression: {e!r}")


def format_program(prog: Program, indent: str = "  ") -> str:
    """Render ``prog`` as DSL text; ``parse_program`` inverts it."""
    locs = locations(prog)
    labelled = locs != list(range(1, len(locs) + 1))
    lines: list[str] = []

    def lab(loc: int) -> str:
        return f" @{loc}" if labelled else ""

    def op_text(op) -> str:
        if isinstance(op, Send):
            return f"{op.channel} <- {format_expr(op.payload)}{lab(op.loc)}"
        if op.target is None:
            return f"<-{op.channel}{lab(op.loc)}"
        return f"{op.target} := <-{op.channel}{lab(op.loc)}"

    def emit(p: Program, depth: int) -> None:
        pad = indent * depth
        for c in p:
            if isinstance(c, Assign):
                lines.append(f"{pad}{c.target} := {format_expr(c.rhs)}")
            elif isinstance(c, MakeChan):
                cap = f"(cap {c.capacity})" if c.capacity else ""
                lines.append(f"{pad}{c.target} := makeChan{cap}")
            elif isinstance(c, Go):
                lines.append(f"{pad}go {{")
                emit(c.body, depth + 1)
                lines.append(f"{pad}}}")
            elif isinstance(c, Close):
                lines.append(f"{pad}close({c.channel}){lab(c.loc)}")
            elif isinstance(c, Select):
                if len(c.branches) == 1 and c.default is None and not c.branches[0].body:
                    lines.append(pad + op_text(c.branches[0].op))
                    continue
                lines.append(f"{pad}select {{")
                for b in c.branches:
                    lines.append(f"{pad}{indent}case {op_text(b.op)}:")
                    emit(b.body, depth + 2)
                if c.default is not None:
                    lines.append(f"{pad}{indent}default{lab(c.default.loc)}:")
                    emit(c.default.body, depth + 2)
                lines.append(f"{pad}}}")
            elif isinstance(c, (TraceInit, TraceAppend)):
                raise ValueError("instrumented programs have no surface syntax")
            else:
                raise TypeError(f"not a command: {c!r}")

    emit(prog, 0)
    return "\n".join(lines) + ("\n" if lines else "")
