"""Bundled example programs and generators for the scalable ones.

The language has no loops, so add-pipe, primesieve and collector are
unrolled by the generators below. Their shipped ``.mp`` files are the
generator output at the default sizes.
"""

from __future__ import annotations

from importlib import resources

from .dsl import parse_program
from .program import Program

STATIC = [
    "newsreader",
    "newsReaderFixed",
    "fig1",
    "bufferedChan",
    "buffered2",
    "selDefault",
    "closedChan",
]
GENERATED = ["addpipe", "primesieve", "collector"]
NAMES = STATIC + GENERATED

ADDPIPE_THREADS = 6  # five stages plus main
ADDPIPE_MESSAGES = 10
PRIMESIEVE_PRIMES = 5
COLLECTOR_SIZE = 4


def generate_addpipe(threads: int, messages: int) -> str:
    """A pipeline of ``threads - 1`` forwarding stages fed by main.

    Main sends each message into the head and waits for it at the tail
    before sending the next. Stages forward values unchanged.
    """
    if threads < 2:
        raise ValueError("add-pipe needs at least one stage")
    stages = threads - 1
    lines = [f"// add-pipe: {stages} stages, {messages} messages"]
    lines += [f"c{i} := makeChan" for i in range(stages + 1)]
    for s in range(1, stages + 1):
        lines.append("go {")
        for _ in range(messages):
            lines.append(f"  v{s} := <-c{s - 1}")
            lines.append(f"  c{s} <- v{s}")
        lines.append("}")
    for m in range(1, messages + 1):
        lines.append(f"c0 <- {m}")
        lines.append(f"r := <-c{stages}")
    return "\n".join(lines) + "\n"


def _primes(n: int) -> list[int]:
    out: list[int] = []
    k = 2
    while len(out) < n:
        if all(k % p for p in out):
            out.append(k)
        k += 1
    return out


def generate_primesieve(n: int) -> str:
    """Sieve for the first ``n`` primes.

    The generator sends 2..p_n. Filter ``j`` reads channel ``j - 1`` and
    forwards what its prime does not divide; which values reach which
    filter is decided here, since the language has no conditionals.
    """
    if n < 1:
        raise ValueError("need at least one prime")
    primes = _primes(n)
    values = list(range(2, primes[-1] + 1))
    # stream[j]: values sent on channel j, in order
    stream = [values]
    for p in primes:
        stream.append([v for v in stream[-1][1:] if v % p])
    lines = [f"// primesieve: first {n} primes", "ch0 := makeChan", "go {"]
    lines += [f"  ch0 <- {v}" for v in values]
    lines.append("}")
    for j, p in enumerate(primes, start=1):
        lines.append(f"p{j} := <-ch{j - 1}")
        lines.append(f"ch{j} := makeChan")
        lines.append("go {")
        lines.append(f"  // filter {p}")
        forwarded = set(stream[j])
        for v in stream[j - 1][1:]:
            lines.append(f"  t{j} := <-ch{j - 1}")
            if v in forwarded:
                lines.append(f"  ch{j} <- t{j}")
        lines.append("}")
    return "\n".join(lines) + "\n"


def generate_collector(n: int) -> str:
    """``n`` producer threads each send one value; main collects them."""
    lines = [f"// collector: {n} producers", "x := makeChan"]
    for i in range(n):
        lines += ["go {", f"  x <- {i}", "}"]
    lines += ["<-x"] * n
    return "\n".join(lines) + "\n"


def generate(name: str, n: int | None = None, k: int | None = None) -> str:
    if name == "addpipe":
        return generate_addpipe(n if n is not None else ADDPIPE_THREADS, k if k is not None else ADDPIPE_MESSAGES)
    if name == "primesieve":
        return generate_primesieve(n if n is not None else PRIMESIEVE_PRIMES)
    if name == "collector":
        return generate_collector(n if n is not None else COLLECTOR_SIZE)
    raise KeyError(name)


def source(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown corpus program {name!r}")
    return resources.files("prepost").joinpath("programs", f"{name}.mp").read_text(encoding="utf-8")


def load(name: str) -> Program:
    return parse_program(source(name))


def corpus() -> dict[str, Program]:
    return {name: load(name) for name in NAMES}
