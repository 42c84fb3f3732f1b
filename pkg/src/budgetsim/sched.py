"""Single-CPU fixed-priority preemptive scheduler with FIFO and sporadic policies.

Priorities are integers and a larger number is more urgent (110 > 60 > 10).

Thread bodies are generators. A body yields `Compute(ns)` to burn CPU time
(preemptible, budget-charged) or `BLOCK` to give up the CPU until some other
party calls `make_ready` on it. Everything a body does between two yields
happens atomically at the current instant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Generator, Iterator

from .kernel import Event, EventKind, SimError, Simulator


class Policy(enum.Enum):
    FIFO = "SCHED_FIFO"
    SPORADIC = "SCHED_SPORADIC"


class InvalidParams(SimError, ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


class InvalidState(SimError):
    pass


class BudgetUnderflow(SimError):
    pass


@dataclass(frozen=True)
class SchedParams:
    policy: Policy
    priority: int
    low_priority: int | None = None
    init_budget: int | None = None
    repl_period: int | None = None
    max_repl: int | None = None

    @classmethod
    def fifo(cls, priority: int) -> "SchedParams":
        return cls(Policy.FIFO, priority)

    @classmethod
    def sporadic(cls, priority: int, low_priority: int, init_budget: int,
                 repl_period: int, max_repl: int) -> "SchedParams":
        return cls(Policy.SPORADIC, priority, low_priority, init_budget, repl_period, max_repl)

    @property
    def is_sporadic(self) -> bool:
        return self.policy is Policy.SPORADIC

    def validate(self) -> "SchedParams":
        if not isinstance(self.priority, int):
            raise InvalidParams("priority", "must be an integer")
        if not self.is_sporadic:
            return self
        if self.low_priority is None or self.low_priority >= self.priority:
            raise InvalidParams("low_priority", "must be lower than priority")
        if self.repl_period is None or self.repl_period <= 0:
            raise InvalidParams("repl_period", "must be positive")
        if self.init_budget is None or self.init_budget <= 0:
            raise InvalidParams("init_budget", "must be positive")
        if self.init_budget > self.repl_period:
            raise InvalidParams("init_budget", "must not exceed repl_period")
        if self.max_repl is None or self.max_repl < 1:
            raise InvalidParams("max_repl", "must be >= 1")
        return self

    def describe(self) -> str:
        if not self.is_sporadic:
            return f"policy={self.policy.value} priority={self.priority}"
        return (f"policy={self.policy.value} priority={self.priority} "
                f"low_priority={self.low_priority} init_budget_ns={self.init_budget} "
                f"repl_period_ns={self.repl_period} max_repl={self.max_repl}")


@dataclass(frozen=True)
class Compute:
    ns: int


class _Block:
    def __repr__(self) -> str:
        return "BLOCK"


BLOCK = _Block()

Body = Generator[object, object, None]


class State(enum.Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"


@dataclass(eq=False)
class ReplenishmentOp:
    amount: int
    due: int
    handle: Event | None = None


@dataclass(eq=False)
class SimThread:
    id: int
    name: str
    params: SchedParams
    body: Body | None = None
    state: State = State.BLOCKED
    ready_since: int = 0
    effective_priority: int = 0
    remaining_budget: int = 0
    activation_time: int | None = None
    activation_consumed: int = 0
    pending_repls: list[ReplenishmentOp] = field(default_factory=list)
    exhaustion_handle: Event | None = None
    # current compute request; None means the body must be stepped
    work: int | None = None
    completion_handle: Event | None = None
    resume_value: object = None
    last_charge: int = 0
    finished: bool = False
    normal_cpu: int = 0
    low_cpu: int = 0
    exhaustions: int = 0
    replenishments: int = 0

    @property
    def is_sporadic(self) -> bool:
        return self.params.is_sporadic

    @property
    def at_low_priority(self) -> bool:
        return self.is_sporadic and self.effective_priority == self.params.low_priority


def spin() -> Iterator[Compute]:
    """Body with unbounded CPU demand."""
    while True:
        yield Compute(1 << 62)


class CpuScheduler:
    """One virtual CPU shared by SimThreads under fixed-priority preemption."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.threads: dict[int, SimThread] = {}
        self.running: int | None = None
        self.last_dispatch_time = 0
        self.on_block: list[Callable[[SimThread], None]] = []
        sim.after_event.append(self.reschedule)
        sim.on_end.append(self.account)

    # -- registry -------------------------------------------------------

    def add_thread(self, name: str, params: SchedParams, body: Body | None = None,
                   ready: bool = False) -> SimThread:
        params.validate()
        if any(t.name == name for t in self.threads.values()):
            raise InvalidState(f"duplicate thread name {name!r}")
        th = SimThread(id=len(self.threads), name=name, params=params,
                       body=body if body is not None else spin())
        th.effective_priority = params.priority
        if params.is_sporadic:
            th.remaining_budget = params.init_budget
        self.threads[th.id] = th
        self.sim.record(name, "THREAD", params.describe())
        if ready:
            self.make_ready(th.id, self.sim.now)
        return th

    def thread(self, tid: int) -> SimThread:
        return self.threads[tid]

    def by_name(self, name: str) -> SimThread:
        for th in self.threads.values():
            if th.name == name:
                return th
        raise KeyError(name)

    @property
    def running_thread(self) -> SimThread | None:
        return None if self.running is None else self.threads[self.running]

    # -- core operations --------------------------------------------------

    def make_ready(self, tid: int, now: int, value: object = None, reason: str = "") -> bool:
        """Wake a blocked thread. Returns True if it should preempt the running one."""
        th = self.threads[tid]
        if th.state is not State.BLOCKED or th.finished:
            raise InvalidState(f"{th.name} is {th.state.value}, not blocked")
        th.state = State.READY
        th.ready_since = now
        th.resume_value = value
        self.sim.record(th.name, "WAKE", f"prio={th.effective_priority}" +
                        (f" reason={reason}" if reason else ""))
        cur = self.running_thread
        return cur is not None and th.effective_priority > cur.effective_priority

    def pick_next(self, now: int | None = None) -> int | None:
        ready = [t for t in self.threads.values() if t.state is State.READY]
        if not ready:
            return None
        best = min(ready, key=lambda t: (-t.effective_priority, t.ready_since, t.id))
        return best.id

    def dispatch(self, tid: int, now: int) -> None:
        th = self.threads[tid]
        if th.state is not State.READY or self.running is not None:
            raise InvalidState(f"cannot dispatch {th.name}")
        th.state = State.RUNNING
        self.running = tid
        self.last_dispatch_time = now
        th.last_charge = now
        self.sim.record(th.name, "DISPATCH", f"prio={th.effective_priority}")
        if th.is_sporadic and not th.at_low_priority:
            if th.activation_time is None:
                th.activation_time = now
            self._arm_exhaustion(th, now)
        if th.work is not None:
            self._arm_completion(th, now)

    def charge(self, tid: int, upto: int) -> None:
        th = self.threads[tid]
        if th.state is not State.RUNNING:
            raise InvalidState(f"{th.name} is not running")
        elapsed = upto - th.last_charge
        if elapsed < 0:
            raise InvalidState("charge into the past")
        th.last_charge = upto
        if elapsed == 0:
            return
        if th.work is not None:
            th.work -= elapsed
            assert th.work >= 0, "ran past its completion event"
        if th.is_sporadic and not th.at_low_priority:
            if elapsed > th.remaining_budget:
                raise BudgetUnderflow(f"{th.name}: charged {elapsed} with "
                                      f"{th.remaining_budget} left")
            th.remaining_budget -= elapsed
            th.activation_consumed += elapsed
            th.normal_cpu += elapsed
        elif th.is_sporadic:
            th.low_cpu += elapsed
        else:
            th.normal_cpu += elapsed

    def on_block_or_preempt(self, tid: int, now: int) -> None:
        th = self.threads[tid]
        self._close_activation(th)
        self._disarm(th)

    def on_budget_exhausted(self, tid: int, now: int) -> None:
        th = self.threads[tid]
        th.exhaustion_handle = None
        self.charge(tid, now)
        if th.remaining_budget != 0:
            raise InvalidState(f"{th.name} exhausted with budget {th.remaining_budget}")
        self._drop(th)

    def _drop(self, th: SimThread) -> None:
        th.exhaustions += 1
        self.sim.record(th.name, "EXHAUST", f"consumed={th.activation_consumed}")
        self._close_activation(th)
        th.effective_priority = th.params.low_priority
        self.sim.record(th.name, "PRIO_DROP", f"prio={th.effective_priority}")

    def on_replenishment(self, tid: int, op: ReplenishmentOp, now: int) -> None:
        th = self.threads[tid]
        if not th.pending_repls or th.pending_repls[0] is not op or op.due != now:
            raise InvalidState(f"{th.name}: replenishment out of order")
        running = th.state is State.RUNNING
        if running:
            self.charge(tid, now)
            # the running slice ends here; a fresh activation starts at now
            self._close_activation(th, keep_repl=op)
            if th.exhaustion_handle is not None:
                self.sim.cancel(th.exhaustion_handle)
                th.exhaustion_handle = None
        th.pending_repls.remove(op)
        was_low = th.at_low_priority
        th.remaining_budget += op.amount
        th.replenishments += 1
        self.sim.record(th.name, "REPLENISH",
                        f"amount={op.amount} budget={th.remaining_budget}")
        if was_low and th.remaining_budget > 0:
            th.effective_priority = th.params.priority
            self.sim.record(th.name, "PRIO_RESTORE", f"prio={th.effective_priority}")
        if running and not th.at_low_priority:
            th.activation_time = now
            self._arm_exhaustion(th, now)

    # -- driver -----------------------------------------------------------

    def preempt(self, tid: int, now: int) -> None:
        th = self.threads[tid]
        self._charge_out(th, now)
        self.on_block_or_preempt(tid, now)
        th.state = State.READY  # ready_since is kept from the original wakeup
        self.running = None
        self.sim.record(th.name, "PREEMPT", f"prio={th.effective_priority}")

    def block(self, tid: int, now: int, why: str = "") -> None:
        th = self.threads[tid]
        self._charge_out(th, now)
        self.on_block_or_preempt(tid, now)
        th.state = State.BLOCKED
        self.running = None
        self.sim.record(th.name, "BLOCK", why or "-")
        for hook in self.on_block:
            hook(th)

    def reschedule(self) -> None:
        """Bring the CPU to a consistent state at the current instant."""
        now = self.sim.now
        while True:
            cur = self.running_thread
            best_id = self.pick_next(now)
            best = None if best_id is None else self.threads[best_id]
            if cur is not None and best is not None \
                    and best.effective_priority > cur.effective_priority:
                self.preempt(cur.id, now)
                cur = None
            if cur is None:
                if best is None:
                    return
                self.dispatch(best.id, now)
                cur = best
            if cur.work is None:
                self._step(cur)
                continue
            return

    def account(self, now: int | None = None) -> None:
        """Charge the running thread up to `now` (no state change)."""
        if self.running is not None:
            self.charge(self.running, self.sim.now if now is None else now)

    def budget_balance(self, th: SimThread) -> int:
        """remaining + pending + consumed in the open activation; == init_budget."""
        return (th.remaining_budget + th.activation_consumed
                + sum(op.amount for op in th.pending_repls))

    # -- internals --------------------------------------------------------

    def _charge_out(self, th: SimThread, now: int) -> None:
        # leaving the CPU exactly as the budget runs out still counts as exhaustion
        self.charge(th.id, now)
        if th.is_sporadic and not th.at_low_priority and th.remaining_budget == 0:
            if th.exhaustion_handle is not None:
                self.sim.cancel(th.exhaustion_handle)
                th.exhaustion_handle = None
            self._drop(th)

    def _step(self, th: SimThread) -> None:
        now = self.sim.now
        value, th.resume_value = th.resume_value, None
        try:
            req = th.body.send(value)
        except StopIteration:
            th.finished = True
            self.block(th.id, now, "exit")
            return
        if isinstance(req, Compute):
            if req.ns < 0:
                raise InvalidState(f"{th.name}: negative compute")
            if req.ns > 0:
                th.work = req.ns
                th.last_charge = now
                self._arm_completion(th, now)
        elif req is BLOCK:
            self.block(th.id, now)
        else:
            raise InvalidState(f"{th.name}: bad request {req!r}")

    def _arm_completion(self, th: SimThread, now: int) -> None:
        th.completion_handle = self.sim.at(now + th.work, EventKind.CALLBACK_COMPLETION,
                                           self._on_completion, th.id)

    def _arm_exhaustion(self, th: SimThread, now: int) -> None:
        th.exhaustion_handle = self.sim.at(now + th.remaining_budget,
                                           EventKind.BUDGET_EXHAUSTION,
                                           self.on_budget_exhausted, th.id, now + th.remaining_budget)

    def _disarm(self, th: SimThread) -> None:
        for attr in ("exhaustion_handle", "completion_handle"):
            handle = getattr(th, attr)
            if handle is not None:
                self.sim.cancel(handle)
                setattr(th, attr, None)

    def _on_completion(self, tid: int) -> None:
        th = self.threads[tid]
        th.completion_handle = None
        self.charge(tid, self.sim.now)
        assert th.work == 0
        th.work = None

    def _close_activation(self, th: SimThread, keep_repl: ReplenishmentOp | None = None) -> None:
        """End the current activation, queueing a replenishment for what it used."""
        if not th.is_sporadic or th.activation_time is None:
            return
        consumed, start = th.activation_consumed, th.activation_time
        th.activation_consumed = 0
        th.activation_time = None
        if consumed == 0:
            return
        due = start + th.params.repl_period
        # the op about to be applied no longer counts against max_repl
        live = [op for op in th.pending_repls if op is not keep_repl]
        if len(live) >= th.params.max_repl:
            # saturated: fold into the newest op and move it to the later due
            # time so the credit never returns early
            last = live[-1]
            self.sim.cancel(last.handle)
            last.amount += consumed
            last.due = due
            last.handle = self.sim.at(due, EventKind.REPLENISHMENT,
                                      self._fire_repl, th.id, last)
            return
        op = ReplenishmentOp(consumed, due)
        op.handle = self.sim.at(due, EventKind.REPLENISHMENT, self._fire_repl, th.id, op)
        th.pending_repls.append(op)

    def _fire_repl(self, tid: int, op: ReplenishmentOp) -> None:
        self.on_replenishment(tid, op, self.sim.now)
