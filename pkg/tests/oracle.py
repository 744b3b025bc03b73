"""Brute-force references the library is checked against.

Nothing here calls replay or the dependency graph; the ground truth comes
from exhaustively running the instrumented program under every scheduler
choice.
"""

from __future__ import annotations

from collections import defaultdict

from prepost.instrument import collect_local_traces, instrument, virtual_view
import sys

from prepost.interpreter import Config, RunResult, Status, enabled_steps, finish, step

sys.setrecursionlimit(20_000)
from prepost.traces import format_trace_set


def all_runs(prog):
    """Every (local traces text, replay-view run-time trace, status) of ``prog``.

    Once main is done every configuration counts as an end point, and the
    other threads may keep going, which is how replay treats them. A stuck
    configuration with main unfinished is a deadlock. Suffix sets are
    memoised per configuration.
    """
    ip = instrument(prog)
    view = virtual_view(ip.vtids)
    memo: dict = {}

    def here(cfg, status):
        final = finish(cfg)
        ts = collect_local_traces(RunResult(final.state, (), status, None, final))
        return (format_trace_set(ts), (), status)

    def finals(cfg):
        k = cfg.key()
        if k in memo:
            return memo[k]
        choices = enabled_steps(cfg)
        res = set()
        if cfg.main_done:
            res.add(here(cfg, Status.COMPLETED))
        elif not choices:
            res.add(here(cfg, Status.DEADLOCK))
        for c in choices:
            nxt, evs = step(cfg, c)
            pre = tuple(m for e in evs for m in view(e))
            res |= {(text, pre + suf, st) for text, suf, st in finals(nxt)}
        memo[k] = res
        return res

    return finals(Config.initial(ip.entry))


def runs_by_traces(prog):
    """local traces text -> set of run-time traces that produced it."""
    groups = defaultdict(set)
    status = {}
    for text, t, st in all_runs(prog):
        groups[text].add(t)
        status[text] = st
    return groups, status


def order_in_all(schedules, a, b):
    """``a`` before ``b`` in every schedule (locations, first occurrence)."""
    for s in schedules:
        locs = [e.loc for e in s]
        if a not in locs or b not in locs or locs.index(a) > locs.index(b):
            return False
    return True


def head_pairs(ts, runs):
    """Send/receive options that sit at two thread heads at once along some run.

    ``ts`` must be buffered-normalised. After a thread has committed ``k``
    events its head is local event ``2k``. Pairs a thread actually
    committed together are dropped.
    """
    from prepost.events import RecvEvt
    from prepost.traces import PostRcv, PostSnd, PreEvent, RcvOp, SndOp

    def head(tid, k):
        evs = ts[tid].events
        if 2 * k < len(evs) and isinstance(evs[2 * k], PreEvent):
            return evs[2 * k], (evs[2 * k + 1] if 2 * k + 1 < len(evs) else None)
        return None, None

    found = set()
    for run in runs:
        done = {t: 0 for t in ts.tids}
        i = 0
        while True:
            heads = {t: head(t, done[t]) for t in ts.tids}
            for s, (spre, spost) in heads.items():
                if spre is None:
                    continue
                for r, (rpre, rpost) in heads.items():
                    if rpre is None or r == s:
                        continue
                    for so in spre.options:
                        for ro in rpre.options:
                            if not (isinstance(so, SndOp) and isinstance(ro, RcvOp) and so.channel == ro.channel):
                                continue
                            named = (
                                isinstance(spost, PostSnd)
                                and spost.loc == so.loc
                                and isinstance(rpost, PostRcv)
                                and rpost.loc == ro.loc
                                and rpost.from_tid == s
                            )
                            if not named:
                                found.add((so.loc, ro.loc))
            if i == len(run):
                break
            done[run[i].tid] += 1
            # a synchronisation commits both partners in one step
            if i + 1 < len(run) and isinstance(run[i + 1], RecvEvt) and run[i + 1].from_tid == run[i].tid:
                i += 1
                done[run[i].tid] += 1
            i += 1
    return found
