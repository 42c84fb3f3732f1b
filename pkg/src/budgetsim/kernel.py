"""Deterministic discrete-event engine.

Virtual time is an integer number of nanoseconds. Events are dequeued in
(due, kind rank, enqueue sequence) order, so a scenario always replays the
same way.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

MS = 1_000_000
SEC = 1_000_000_000

TAGS = frozenset({
    # scheduling
    "THREAD", "WAKE", "DISPATCH", "PREEMPT", "BLOCK",
    # sporadic server
    "EXHAUST", "REPLENISH", "PRIO_DROP", "PRIO_RESTORE",
    # executor
    "ARRIVE", "TAKE", "SIGNAL", "SKIP_BUSY", "DROP_MSG",
    "CB_START", "CB_END", "PUBLISH", "LOCK", "UNLOCK",
    "END",
})


class SimError(Exception):
    pass


class PastDue(SimError):
    pass


class EventKind(enum.IntEnum):
    """Event kinds; the integer value is the tie-break rank at equal due times.

    Replenishments come before exhaustion checks so that a thread replenished
    exactly at its exhaustion instant keeps its normal priority.
    """

    REPLENISHMENT = 0
    BUDGET_EXHAUSTION = 1
    LOCK_RELEASE = 2
    CALLBACK_COMPLETION = 3
    TIMER = 4
    MESSAGE_ARRIVAL = 5
    SIMULATION_END = 6


class CancelResult(enum.Enum):
    CONFIRMED = "confirmed"
    ALREADY_FIRED = "already-fired"


@dataclass(eq=False)
class Event:
    due: int
    kind: EventKind
    action: Callable[..., Any] | None = None
    args: tuple = ()
    seq: int = -1
    fired: bool = False
    cancelled: bool = False

    def sort_key(self) -> tuple[int, int, int]:
        return (self.due, int(self.kind), self.seq)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    thread: str
    tag: str
    detail: str = "-"

    def line(self) -> str:
        return f"{self.time} {self.thread} {self.tag} {self.detail}"


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def record(self, time: int, thread: str, tag: str, detail: str = "-") -> None:
        if tag not in TAGS:
            raise ValueError(f"unknown trace tag {tag!r}")
        if self.records and time < self.records[-1].time:
            raise SimError("trace time went backwards")
        self.records.append(TraceRecord(time, thread, tag, detail or "-"))

    def select(self, tag: str | None = None, thread: str | None = None) -> list[TraceRecord]:
        return [r for r in self.records
                if (tag is None or r.tag == tag) and (thread is None or r.thread == thread)]

    def to_text(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "Trace":
        """Parse the text format; raises TraceParseError with the 1-based line."""
        trace = cls()
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(" ", 3)
            if len(parts) < 3:
                raise TraceParseError(lineno, "expected '<time_ns> <thread> <tag> <detail>'")
            time_s, thread, tag = parts[:3]
            detail = parts[3] if len(parts) == 4 else "-"
            try:
                time = int(time_s)
            except ValueError:
                raise TraceParseError(lineno, f"bad time {time_s!r}") from None
            if time < 0:
                raise TraceParseError(lineno, "negative time")
            if tag not in TAGS:
                raise TraceParseError(lineno, f"unknown tag {tag!r}")
            if trace.records and time < trace.records[-1].time:
                raise TraceParseError(lineno, "time goes backwards")
            trace.records.append(TraceRecord(time, thread, tag, detail))
        return trace


class TraceParseError(SimError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def parse_detail(detail: str) -> dict[str, str]:
    """Split a `k=v k=v` detail string into a dict."""
    out = {}
    for tok in detail.split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


class Simulator:
    """Virtual clock, event queue and trace recorder.

    Hooks in `after_event` run after every fired event, in registration
    order; the CPU scheduler uses this to reschedule.
    """

    def __init__(self) -> None:
        self.now = 0
        self.trace = Trace()
        self.after_event: list[Callable[[], None]] = []
        self.on_end: list[Callable[[int], None]] = []
        self._queue: list[tuple[int, int, int, Event]] = []
        self._seq = itertools.count()

    def schedule(self, event: Event) -> Event:
        if event.due < self.now:
            raise PastDue(f"event due {event.due} < now {self.now}")
        event.seq = next(self._seq)
        heapq.heappush(self._queue, (*event.sort_key(), event))
        return event

    def at(self, due: int, kind: EventKind, action: Callable[..., Any] | None = None,
           *args) -> Event:
        return self.schedule(Event(due, kind, action, args))

    def after(self, delay: int, kind: EventKind, action=None, *args) -> Event:
        if delay < 0:
            raise PastDue(f"negative delay {delay}")
        return self.at(self.now + delay, kind, action, *args)

    def cancel(self, handle: Event) -> CancelResult:
        if handle.fired:
            return CancelResult.ALREADY_FIRED
        handle.cancelled = True
        return CancelResult.CONFIRMED

    def record(self, thread: str, tag: str, detail: str = "-") -> None:
        self.trace.record(self.now, thread, tag, detail)

    def pending(self) -> int:
        return sum(1 for *_, ev in self._queue if not ev.cancelled)

    def next_due(self) -> int | None:
        """Due time of the earliest live event, if any."""
        while self._queue and self._queue[0][-1].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def step(self) -> Event | None:
        """Fire the next live event; returns it, or None if the queue is empty."""
        while self._queue:
            *_, ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            assert ev.due >= self.now
            self.now = ev.due
            ev.fired = True
            if ev.action is not None:
                ev.action(*ev.args)
            for hook in self.after_event:
                hook()
            return ev
        return None

    def run_until(self, end: int) -> Trace:
        if end < self.now:
            raise PastDue(f"end {end} < now {self.now}")
        self.at(end, EventKind.SIMULATION_END, self._finish, end)
        # let hooks settle state created before the run (e.g. threads made ready)
        for hook in self.after_event:
            hook()
        while self._queue and self._queue[0][0] <= end:
            ev = self.step()
            if ev is not None and ev.kind is EventKind.SIMULATION_END and ev.args == (end,):
                break
        self.now = end
        return self.trace

    def _finish(self, end: int) -> None:
        for hook in self.on_end:
            hook(end)
