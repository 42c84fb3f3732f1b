"""Multi-threaded real-time executor model.

One executor thread polls the middleware and hands each message to the
dedicated worker thread of its subscription, but only when that worker is
READY; otherwise the message stays queued. All middleware calls (wait, take,
publish) are serialized by a single lock.
"""

from __future__ import annotations

import collections
import enum
from dataclasses import dataclass
from typing import Callable

from .kernel import EventKind, SimError, Simulator
from .sched import BLOCK, Compute, CpuScheduler, SchedParams, SimThread


class DuplicateTopic(SimError):
    pass


class WorkerState(enum.Enum):
    READY = "READY"
    BUSY = "BUSY"


@dataclass(frozen=True)
class Message:
    topic: str
    seq: int
    publish_time: int
    # for replies: the request this answers
    origin: "Message | None" = None


@dataclass(frozen=True)
class CallbackSpec:
    busy_time: int = 0
    sleep_time: int = 0
    publishes: str | None = None

    def __post_init__(self):
        if self.busy_time < 0 or self.sleep_time < 0:
            raise ValueError("callback times must be non-negative")


@dataclass(frozen=True)
class MiddlewareCosts:
    fill: int = 0
    wait: int = 0
    take: int = 0
    publish: int = 0


class MiddlewareQueue:
    """Per-topic bounded FIFO; overflow drops the oldest message."""

    def __init__(self, sim: Simulator, topic: str, depth: int = 16):
        if depth < 1:
            raise ValueError("queue depth must be positive")
        self.sim = sim
        self.topic = topic
        self.depth = depth
        self.items: collections.deque[Message] = collections.deque()
        self.arrived = 0
        self.taken = 0
        self.dropped = 0

    def __len__(self) -> int:
        return len(self.items)

    def push(self, msg: Message) -> None:
        self.arrived += 1
        if len(self.items) >= self.depth:
            old = self.items.popleft()
            self.dropped += 1
            self.sim.record("middleware", "DROP_MSG", f"topic={self.topic} seq={old.seq}")
        self.items.append(msg)

    def take(self) -> Message:
        self.taken += 1
        return self.items.popleft()


class MiddlewareLock:
    """The single mutex around middleware calls. Waiters are served by
    effective priority, then arrival order; ownership passes directly to the
    chosen waiter on release."""

    def __init__(self, cpu: CpuScheduler, name: str = "mw_mutex"):
        self.cpu = cpu
        self.name = name
        self.holder: SimThread | None = None
        self.waiters: list[tuple[int, SimThread]] = []
        self._order = 0

    def acquire(self, th: SimThread):
        """Generator: `yield from lock.acquire(me)` inside a thread body."""
        if self.holder is None:
            self.holder = th
            self.cpu.sim.record(th.name, "LOCK", self.name)
            return
        if self.holder is th:
            raise SimError(f"{th.name} already holds {self.name}")
        self.waiters.append((self._order, th))
        self._order += 1
        yield BLOCK
        assert self.holder is th

    def release(self, th: SimThread) -> None:
        if self.holder is not th:
            raise SimError(f"{th.name} releases {self.name} it does not hold")
        sim = self.cpu.sim
        sim.record(th.name, "UNLOCK", self.name)
        self.holder = None
        if not self.waiters:
            return
        entry = min(self.waiters, key=lambda w: (-w[1].effective_priority, w[0]))
        self.waiters.remove(entry)
        nxt = entry[1]
        self.holder = nxt
        sim.record(nxt.name, "LOCK", self.name)
        sim.at(sim.now, EventKind.LOCK_RELEASE, self._wake, nxt.id)

    def _wake(self, tid: int) -> None:
        self.cpu.make_ready(tid, self.cpu.sim.now, reason="lock")


@dataclass(eq=False)
class Subscription:
    topic: str
    callback: CallbackSpec
    sched: SchedParams
    worker: SimThread | None = None
    state: WorkerState = WorkerState.READY
    msg_slot: Message | None = None
    skipped_busy: int = 0
    completed: int = 0


class Executor:
    """Executor configuration plus the runtime state of one executor thread."""

    def __init__(self, sim: Simulator, cpu: CpuScheduler, *, priority: int = 110,
                 wait_timeout: int = 100_000_000, queue_depth: int = 16,
                 costs: MiddlewareCosts = MiddlewareCosts(), name: str = "executor"):
        if wait_timeout <= 0:
            raise ValueError("wait_timeout must be positive")
        self.sim = sim
        self.cpu = cpu
        self.name = name
        self.priority = priority
        self.wait_timeout = wait_timeout
        self.queue_depth = queue_depth
        self.costs = costs
        self.lock = MiddlewareLock(cpu)
        self.subscriptions: list[Subscription] = []
        self.queues: dict[str, MiddlewareQueue] = {}
        # reply topics that leave the MCU, e.g. pong -> ping node
        self.peers: dict[str, Callable[[Message, int], None]] = {}
        self.unrouted: collections.Counter[str] = collections.Counter()
        self.published: collections.Counter[str] = collections.Counter()
        self.thread: SimThread | None = None
        self.waiting = False
        self._timeout_handle = None
        self._pub_seq: collections.Counter[str] = collections.Counter()
        sim.on_end.append(self._on_end)

    # -- user interface ---------------------------------------------------

    def add_subscription_sched(self, topic: str, callback: CallbackSpec,
                               sched: SchedParams) -> Subscription:
        if topic in self.queues:
            raise DuplicateTopic(topic)
        if self.thread is not None:
            raise SimError("subscriptions must be added before start()")
        sched.validate()
        sub = Subscription(topic, callback, sched)
        self.subscriptions.append(sub)
        self.queues[topic] = MiddlewareQueue(self.sim, topic, self.queue_depth)
        return sub

    def subscription(self, topic: str) -> Subscription:
        for sub in self.subscriptions:
            if sub.topic == topic:
                return sub
        raise KeyError(topic)

    def start(self) -> SimThread:
        """Create the executor thread; it spawns the workers when first run."""
        self.thread = self.cpu.add_thread(self.name, SchedParams.fifo(self.priority),
                                          self.executor_spin())
        self.cpu.make_ready(self.thread.id, self.sim.now, reason="start")
        return self.thread

    # -- middleware side ---------------------------------------------------

    def deliver(self, msg: Message) -> None:
        """A message arrives from the network into the topic's queue."""
        queue = self.queues[msg.topic]
        self.sim.record("middleware", "ARRIVE", f"topic={msg.topic} seq={msg.seq}")
        queue.push(msg)
        if self.waiting:
            self._wake_executor("data")

    def has_work(self) -> bool:
        return any(sub.state is WorkerState.READY and self.queues[sub.topic]
                   for sub in self.subscriptions)

    def _wake_executor(self, reason: str) -> None:
        self.waiting = False
        if self._timeout_handle is not None:
            self.sim.cancel(self._timeout_handle)
            self._timeout_handle = None
        self.cpu.make_ready(self.thread.id, self.sim.now, value=reason, reason=reason)

    def _on_timeout(self) -> None:
        self._timeout_handle = None
        if self.waiting:
            self._wake_executor("timeout")

    # -- thread bodies -------------------------------------------------------

    def spawn_workers(self) -> list[SimThread]:
        workers = []
        for sub in self.subscriptions:
            sub.worker = self.cpu.add_thread(f"worker_{sub.topic}", sub.sched,
                                             self.worker_loop(sub))
            workers.append(sub.worker)
        return workers

    def executor_spin(self):
        me = self.thread
        self.spawn_workers()
        costs = self.costs
        while True:
            yield from self.lock.acquire(me)
            yield Compute(costs.fill)
            yield Compute(costs.wait)
            if not self.has_work():
                self.lock.release(me)
                self.waiting = True
                self._timeout_handle = self.sim.after(self.wait_timeout, EventKind.TIMER,
                                                      self._on_timeout)
                yield BLOCK
                yield from self.lock.acquire(me)
            for sub in self.subscriptions:
                queue = self.queues[sub.topic]
                if not queue:
                    continue
                if sub.state is not WorkerState.READY:
                    sub.skipped_busy += 1
                    self.sim.record(me.name, "SKIP_BUSY", f"topic={sub.topic} queued={len(queue)}")
                    continue
                yield Compute(costs.take)
                sub.msg_slot = queue.take()
                sub.state = WorkerState.BUSY
                self.sim.record(me.name, "TAKE", f"topic={sub.topic} seq={sub.msg_slot.seq}")
                self.sim.record(me.name, "SIGNAL", f"topic={sub.topic} worker={sub.worker.name}")
                self.cpu.make_ready(sub.worker.id, self.sim.now, reason="signal")
            self.lock.release(me)

    def worker_loop(self, sub: Subscription):
        # A worker thread is created blocked; its body first runs when the
        # executor signals it, so the top of the loop is the condition wakeup.
        me = sub.worker
        cb = sub.callback
        while True:
            msg = sub.msg_slot
            self.sim.record(me.name, "CB_START", f"topic={sub.topic} seq={msg.seq}")
            yield Compute(cb.busy_time)
            if cb.sleep_time:
                self.sim.after(cb.sleep_time, EventKind.TIMER, self._sleep_done, me.id)
                yield BLOCK
            if cb.publishes is not None:
                reply = Message(cb.publishes, self._next_seq(cb.publishes), self.sim.now, origin=msg)
                yield from self.executor_publish(me, reply)
            sub.msg_slot = None
            sub.state = WorkerState.READY
            sub.completed += 1
            self.sim.record(me.name, "CB_END", f"topic={sub.topic} seq={msg.seq}")
            if self.waiting and self.queues[sub.topic]:
                self._wake_executor("worker_ready")
            yield BLOCK

    def _sleep_done(self, tid: int) -> None:
        self.cpu.make_ready(tid, self.sim.now, reason="sleep")

    def _next_seq(self, topic: str) -> int:
        self._pub_seq[topic] += 1
        return self._pub_seq[topic]

    def executor_publish(self, me: SimThread, msg: Message):
        """Generator: publish under the middleware lock."""
        yield from self.lock.acquire(me)
        yield Compute(self.costs.publish)
        self.sim.record(me.name, "PUBLISH", f"topic={msg.topic} seq={msg.seq}")
        self.published[msg.topic] += 1
        self.lock.release(me)
        if msg.topic in self.queues:
            self.deliver(msg)
        elif msg.topic in self.peers:
            self.peers[msg.topic](msg, self.sim.now)
        else:
            self.unrouted[msg.topic] += 1

    def _on_end(self, end: int) -> None:
        for sub in self.subscriptions:
            q = self.queues[sub.topic]
            self.sim.record("middleware", "END", f"topic={sub.topic} queued={len(q)} "
                            f"arrived={q.arrived} taken={q.taken} dropped={q.dropped}")
