"""Ping/pong scenarios and the three built-in experiments.

The ping side is an ideal external host: sending and receiving cost no
simulated MCU time and the network adds no latency. The first ping of a
stream is sent at t = period, so a 10 s run at 10 ms yields 1000 pings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction

from .executor import CallbackSpec, Executor, Message, MiddlewareCosts
from .kernel import MS, SEC, EventKind, Simulator, Trace
from .metrics import Metrics, TopicMetrics
from .sched import CpuScheduler, SchedParams


class ScenarioError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class PingNodeModel:
    send_topic: str
    reply_topic: str
    period: int
    sent_count: int = 0
    received_count: int = 0
    received_latencies: list[int] = field(default_factory=list)

    def fresh(self) -> "PingNodeModel":
        return dataclasses.replace(self, sent_count=0, received_count=0, received_latencies=[])


@dataclass(frozen=True)
class SubscriptionSpec:
    topic: str
    callback: CallbackSpec
    sched: SchedParams


@dataclass
class Scenario:
    duration: int = 10 * SEC
    executor_priority: int = 110
    wait_timeout: int = 100 * MS
    queue_depth: int = 16
    middleware_costs: MiddlewareCosts = MiddlewareCosts()
    pings: list[PingNodeModel] = field(default_factory=list)
    subscriptions: list[SubscriptionSpec] = field(default_factory=list)
    seed: int = 0
    name: str = "custom"

    def validate(self) -> "Scenario":
        if self.duration <= 0:
            raise ScenarioError("duration_ns", "must be positive")
        if self.wait_timeout <= 0:
            raise ScenarioError("wait_timeout_ns", "must be positive")
        if self.queue_depth < 1:
            raise ScenarioError("queue_depth", "must be positive")
        topics = [s.topic for s in self.subscriptions]
        if len(set(topics)) != len(topics):
            raise ScenarioError("topic", "duplicate subscription topic")
        for p in self.pings:
            if p.send_topic not in topics:
                raise ScenarioError("topic", f"ping topic {p.send_topic!r} has no subscription")
            if p.period <= 0:
                raise ScenarioError("period_ns", "must be positive")
        for s in self.subscriptions:
            s.sched.validate()
        return self


# -- built-in experiments ----------------------------------------------------

REPL_PERIOD = 100 * MS
PING_PERIOD = 10 * MS
CALLBACK_BUSY = 10 * MS


def _as_fraction(value, name: str) -> Fraction:
    try:
        return Fraction(value) if not isinstance(value, float) else Fraction(str(value))
    except (TypeError, ValueError):
        raise ScenarioError(name, f"not a rational number: {value!r}") from None


def _ping_pong(topic: str, callback: CallbackSpec, sched: SchedParams):
    return (PingNodeModel(topic, f"{topic}_pong", PING_PERIOD),
            SubscriptionSpec(topic, callback, sched))


def _two_streams(name: str, hprt: SchedParams, lpbe: SchedParams,
                 lpbe_callback: CallbackSpec | None = None) -> Scenario:
    hp_ping, hp_sub = _ping_pong("hprt", CallbackSpec(CALLBACK_BUSY, 0, "hprt_pong"), hprt)
    lp_ping, lp_sub = _ping_pong("lpbe", lpbe_callback or CallbackSpec(CALLBACK_BUSY, 0, "lpbe_pong"),
                                 lpbe)
    return Scenario(name=name, pings=[hp_ping, lp_ping], subscriptions=[hp_sub, lp_sub])


def hprt_sporadic(budget_fraction: Fraction) -> SchedParams:
    budget = int(budget_fraction * REPL_PERIOD)
    return SchedParams.sporadic(60, 10, budget, REPL_PERIOD, 100)


def build_case1(budget_fraction) -> Scenario:
    """HPRT under the sporadic server, LPBE FIFO(50); budget = fraction of 100 ms."""
    f = _as_fraction(budget_fraction, "budget_fraction")
    if not 0 < f <= 1:
        raise ScenarioError("budget_fraction", "must be in (0, 1]")
    return _two_streams("case1", hprt_sporadic(f), SchedParams.fifo(50))


def build_case2(nominal_budget=None) -> Scenario:
    """Both streams FIFO (60/50). The nominal budget is accepted and ignored."""
    if nominal_budget is not None:
        _as_fraction(nominal_budget, "budget_fraction")
    return _two_streams("case2", SchedParams.fifo(60), SchedParams.fifo(50))


def build_workconserving(sleep_fraction) -> Scenario:
    """HPRT sporadic at 30 % budget; LPBE callback splits 10 ms into busy + sleep."""
    s = _as_fraction(sleep_fraction, "sleep_fraction")
    if not 0 <= s <= 1:
        raise ScenarioError("sleep_fraction", "must be in [0, 1]")
    sleep = int(s * CALLBACK_BUSY)
    lpbe_cb = CallbackSpec(CALLBACK_BUSY - sleep, sleep, "lpbe_pong")
    return _two_streams("workconserving", hprt_sporadic(Fraction(3, 10)),
                        SchedParams.fifo(50), lpbe_cb)


BUILDERS = {
    "case1": build_case1,
    "case2": build_case2,
    "workconserving": build_workconserving,
}


# -- running -------------------------------------------------------------------

class Run:
    """A scenario wired into a simulator, ready to run."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.sim = Simulator()
        self.cpu = CpuScheduler(self.sim)
        self.executor = Executor(self.sim, self.cpu, priority=scenario.executor_priority,
                                 wait_timeout=scenario.wait_timeout,
                                 queue_depth=scenario.queue_depth,
                                 costs=scenario.middleware_costs)
        for spec in scenario.subscriptions:
            self.executor.add_subscription_sched(spec.topic, spec.callback, spec.sched)
        self.pings = [p.fresh() for p in scenario.pings]
        for ping in self.pings:
            self.executor.peers[ping.reply_topic] = self._receiver(ping)
            self.sim.at(ping.period, EventKind.MESSAGE_ARRIVAL, self._send, ping)
        self.executor.start()

    def _send(self, ping: PingNodeModel) -> None:
        ping.sent_count += 1
        self.executor.deliver(Message(ping.send_topic, ping.sent_count, self.sim.now))
        self.sim.at(self.sim.now + ping.period, EventKind.MESSAGE_ARRIVAL, self._send, ping)

    def _receiver(self, ping: PingNodeModel):
        def receive(msg: Message, now: int) -> None:
            ping.received_count += 1
            if msg.origin is not None:
                ping.received_latencies.append(now - msg.origin.publish_time)
        return receive

    def run(self) -> tuple[Metrics, Trace]:
        trace = self.sim.run_until(self.scenario.duration)
        return self.metrics(), trace

    def metrics(self) -> Metrics:
        m = Metrics()
        ex = self.executor
        by_topic = {p.send_topic: p for p in self.pings}
        for sub in ex.subscriptions:
            q = ex.queues[sub.topic]
            w = sub.worker
            tm = TopicMetrics(sub.topic, dropped=q.dropped, skipped_busy=sub.skipped_busy,
                              taken=q.taken, queued=len(q), arrived=q.arrived)
            ping = by_topic.get(sub.topic)
            if ping is not None:
                tm.sent = ping.sent_count
                tm.received = ping.received_count
                lat = ping.received_latencies
                if lat:
                    tm.mean_latency_ns = sum(lat) // len(lat)
                    tm.max_latency_ns = max(lat)
            if w is not None:
                tm.normal_prio_cpu_ns = w.normal_cpu
                tm.low_prio_cpu_ns = w.low_cpu
                tm.exhaustions = w.exhaustions
                tm.replenishments = w.replenishments
            m.topics.append(tm)
        for th in self.cpu.threads.values():
            m.thread_cpu[th.name] = (th.normal_cpu, th.low_cpu)
        return m


def run_scenario(scenario: Scenario) -> tuple[Metrics, Trace]:
    return Run(scenario).run()
