"""Post-hoc invariant checks over a recorded trace.

Each check replays the trace on its own and reports the first instant at
which it saw a violation. None of them consult simulator state, so they can
also be run on a trace file written by an earlier run.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field

from .kernel import Trace, parse_detail


@dataclass
class CheckResult:
    name: str
    passed: bool = True
    at: int | None = None
    message: str = ""

    def fail(self, at: int, message: str) -> None:
        if self.passed:
            self.passed = False
            self.at = at
            self.message = message

    def line(self) -> str:
        if self.passed:
            return f"PASS {self.name}"
        return f"FAIL {self.name} at {self.at}: {self.message}"


@dataclass
class _Thread:
    name: str
    priority: int
    sporadic: bool = False
    low_priority: int | None = None
    init_budget: int = 0
    repl_period: int = 0
    state: str = "blocked"
    eff: int = 0
    normal_since: int | None = None
    intervals: list[tuple[int, int]] = field(default_factory=list)

    @property
    def on_normal(self) -> bool:
        return self.state == "running" and self.eff == self.priority


def _threads(trace: Trace) -> dict[str, _Thread]:
    out = {}
    for r in trace.select("THREAD"):
        d = parse_detail(r.detail)
        th = _Thread(r.thread, int(d["priority"]))
        if d.get("policy") == "SCHED_SPORADIC":
            th.sporadic = True
            th.low_priority = int(d["low_priority"])
            th.init_budget = int(d["init_budget_ns"])
            th.repl_period = int(d["repl_period_ns"])
        th.eff = th.priority
        out[r.thread] = th
    return out


def normal_priority_intervals(trace: Trace) -> dict[str, list[tuple[int, int]]]:
    """Half-open intervals during which each sporadic thread ran at normal priority."""
    threads = _threads(trace)
    last = trace.records[-1].time if trace.records else 0
    for r in trace:
        th = threads.get(r.thread)
        if th is None:
            continue
        before = th.on_normal
        if r.tag == "DISPATCH":
            th.state = "running"
        elif r.tag == "PREEMPT":
            th.state = "ready"
        elif r.tag == "BLOCK":
            th.state = "blocked"
        elif r.tag in ("PRIO_DROP", "PRIO_RESTORE"):
            th.eff = int(parse_detail(r.detail)["prio"])
        after = th.on_normal
        if not before and after:
            th.normal_since = r.time
        elif before and not after:
            if r.time > th.normal_since:
                th.intervals.append((th.normal_since, r.time))
            th.normal_since = None
    for th in threads.values():
        if th.normal_since is not None and last > th.normal_since:
            th.intervals.append((th.normal_since, last))
    return {n: th.intervals for n, th in threads.items() if th.sporadic}


def max_window_usage(intervals: list[tuple[int, int]], window: int) -> tuple[int, int]:
    """Largest total overlap of `intervals` with any [t, t + window); returns (usage, t)."""
    if not intervals:
        return 0, 0
    # the maximum is reached with a window edge on an interval edge
    candidates = sorted({s for s, _ in intervals} | {e - window for _, e in intervals})
    best, best_t = 0, candidates[0]
    lo = 0
    for t in candidates:
        end = t + window
        while lo < len(intervals) and intervals[lo][1] <= t:
            lo += 1
        used = 0
        i = lo
        while i < len(intervals) and intervals[i][0] < end:
            s, e = intervals[i]
            used += min(e, end) - max(s, t)
            i += 1
        if used > best:
            best, best_t = used, t
    return best, best_t


def check_budget_window(trace: Trace) -> CheckResult:
    res = CheckResult("budget_window")
    threads = _threads(trace)
    for name, ivs in normal_priority_intervals(trace).items():
        th = threads[name]
        used, t = max_window_usage(ivs, th.repl_period)
        if used > th.init_budget:
            res.fail(t, f"{name} ran {used} ns at normal priority in "
                        f"[{t}, {t + th.repl_period}), budget {th.init_budget}")
    return res


def check_lock_nesting(trace: Trace) -> CheckResult:
    res = CheckResult("lock_nesting")
    holders: dict[str, str | None] = {}
    for r in trace:
        if r.tag == "LOCK":
            if holders.get(r.detail) is not None:
                res.fail(r.time, f"{r.thread} locked {r.detail} held by {holders[r.detail]}")
            holders[r.detail] = r.thread
        elif r.tag == "UNLOCK":
            if holders.get(r.detail) != r.thread:
                res.fail(r.time, f"{r.thread} unlocked {r.detail} held by {holders.get(r.detail)}")
            holders[r.detail] = None
    return res


def check_readiness_gating(trace: Trace) -> CheckResult:
    res = CheckResult("readiness_gating")
    busy: dict[str, bool] = collections.defaultdict(bool)
    signalled: dict[str, int] = collections.defaultdict(int)
    for r in trace:
        if r.tag == "SIGNAL":
            worker = parse_detail(r.detail).get("worker", "")
            if busy[worker]:
                res.fail(r.time, f"{worker} signalled while BUSY")
            busy[worker] = True
            signalled[worker] += 1
        elif r.tag == "CB_START":
            if signalled[r.thread] == 0:
                res.fail(r.time, f"{r.thread} started a callback without a signal")
            else:
                signalled[r.thread] -= 1
            busy[r.thread] = True
        elif r.tag == "CB_END":
            busy[r.thread] = False
    return res


def _scheduling_replay(trace: Trace, on_instant_end, on_dispatch) -> None:
    threads = _threads(trace)
    i, recs = 0, trace.records
    while i < len(recs):
        t = recs[i].time
        while i < len(recs) and recs[i].time == t:
            r = recs[i]
            th = threads.get(r.thread)
            if th is not None:
                if r.tag == "WAKE":
                    th.state = "ready"
                elif r.tag == "DISPATCH":
                    on_dispatch(t, th, threads)
                    th.state = "running"
                elif r.tag == "PREEMPT":
                    th.state = "ready"
                elif r.tag == "BLOCK":
                    th.state = "blocked"
                elif r.tag in ("PRIO_DROP", "PRIO_RESTORE"):
                    th.eff = int(parse_detail(r.detail)["prio"])
            i += 1
        on_instant_end(t, threads)


def check_work_conservation(trace: Trace) -> CheckResult:
    res = CheckResult("work_conservation")

    def instant_end(t, threads):
        states = [th.state for th in threads.values()]
        if "running" not in states and "ready" in states:
            idle = [th.name for th in threads.values() if th.state == "ready"]
            res.fail(t, f"CPU idle while ready: {','.join(idle)}")

    _scheduling_replay(trace, instant_end, lambda *a: None)
    return res


def check_priority_order(trace: Trace) -> CheckResult:
    res = CheckResult("priority_order")

    def best_ready(threads, exclude=None):
        prios = [th.eff for th in threads.values() if th.state == "ready" and th is not exclude]
        return max(prios, default=None)

    def dispatch(t, th, threads):
        top = best_ready(threads, exclude=th)
        if top is not None and top > th.eff:
            res.fail(t, f"dispatched {th.name} at {th.eff} over a ready thread at {top}")

    def instant_end(t, threads):
        running = [th for th in threads.values() if th.state == "running"]
        if len(running) > 1:
            res.fail(t, "more than one running thread")
        top = best_ready(threads)
        if running and top is not None and top > running[0].eff:
            res.fail(t, f"{running[0].name} runs at {running[0].eff} with a ready thread at {top}")

    _scheduling_replay(trace, instant_end, dispatch)
    return res


def check_message_conservation(trace: Trace) -> CheckResult:
    res = CheckResult("message_conservation")
    arrived = collections.Counter()
    taken = collections.Counter()
    dropped = collections.Counter()
    ended = {}
    for r in trace:
        if r.tag in ("ARRIVE", "TAKE", "DROP_MSG", "END"):
            topic = parse_detail(r.detail).get("topic")
            if r.tag == "ARRIVE":
                arrived[topic] += 1
            elif r.tag == "TAKE":
                taken[topic] += 1
                if taken[topic] + dropped[topic] > arrived[topic]:
                    res.fail(r.time, f"{topic}: took a message that never arrived")
            elif r.tag == "DROP_MSG":
                dropped[topic] += 1
            else:
                ended[topic] = (r.time, int(parse_detail(r.detail)["queued"]))
    for topic in sorted(set(arrived) | set(ended)):
        if topic in ended:
            t, queued = ended[topic]
            if arrived[topic] != taken[topic] + dropped[topic] + queued:
                res.fail(t, f"{topic}: arrived {arrived[topic]} != taken {taken[topic]} "
                            f"+ dropped {dropped[topic]} + queued {queued}")
    return res


CHECKS = (
    check_budget_window,
    check_lock_nesting,
    check_readiness_gating,
    check_work_conservation,
    check_priority_order,
    check_message_conservation,
)


def check_trace(trace: Trace) -> list[CheckResult]:
    return [check(trace) for check in CHECKS]


def report(results: list[CheckResult]) -> str:
    return "".join(r.line() + "\n" for r in results)
