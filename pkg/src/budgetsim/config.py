"""INI-style scenario files.

Scheduling keys inside a ``[subscription <topic>]`` section use the POSIX
``sched_param`` vocabulary::

    [subscription hprt]
    busy_ns = 10000000
    sleep_ns = 0
    publishes = hprt_pong
    policy = SCHED_SPORADIC
    priority = 60
    low_priority = 10
    repl_period_ns = 100000000
    init_budget_ns = 30000000
    max_repl = 100

    [ping hprt]
    period_ns = 10000000
    reply_topic = hprt_pong
"""

from __future__ import annotations

import configparser
import io

from .executor import CallbackSpec, MiddlewareCosts
from .sched import InvalidParams, Policy, SchedParams
from .workload import PingNodeModel, Scenario, ScenarioError, SubscriptionSpec


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


# SchedParams field -> config key
_SCHED_KEYS = {
    "priority": "priority",
    "low_priority": "low_priority",
    "init_budget": "init_budget_ns",
    "repl_period": "repl_period_ns",
    "max_repl": "max_repl",
}


def _int(section: configparser.SectionProxy, key: str, default=None) -> int:
    where = f"[{section.name}] {key}"
    if key not in section:
        if default is None:
            raise ConfigError(where, "missing")
        return default
    try:
        return int(section[key])
    except ValueError:
        raise ConfigError(where, f"not an integer: {section[key]!r}") from None


def _sched(section: configparser.SectionProxy) -> SchedParams:
    policy_s = section.get("policy", "SCHED_FIFO").strip().upper()
    try:
        policy = Policy(policy_s)
    except ValueError:
        raise ConfigError(f"[{section.name}] policy", f"unknown policy {policy_s!r}") from None
    if policy is Policy.FIFO:
        params = SchedParams.fifo(_int(section, "priority"))
    else:
        params = SchedParams.sporadic(
            _int(section, "priority"), _int(section, "low_priority"),
            _int(section, "init_budget_ns"), _int(section, "repl_period_ns"),
            _int(section, "max_repl"))
    try:
        return params.validate()
    except InvalidParams as exc:
        key = _SCHED_KEYS.get(exc.field, exc.field)
        raise ConfigError(f"[{section.name}] {key}", str(exc).split(": ", 1)[-1]) from None


def parse_config(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).replace("\n", " ")) from None

    sc = Scenario()
    if cp.has_section("scenario"):
        s = cp["scenario"]
        sc.name = s.get("name", sc.name)
        sc.duration = _int(s, "duration_ns", sc.duration)
        sc.seed = _int(s, "seed", sc.seed)
    if cp.has_section("executor"):
        s = cp["executor"]
        sc.executor_priority = _int(s, "priority", sc.executor_priority)
        sc.wait_timeout = _int(s, "wait_timeout_ns", sc.wait_timeout)
        sc.queue_depth = _int(s, "queue_depth", sc.queue_depth)
    if cp.has_section("middleware"):
        s = cp["middleware"]
        costs = {}
        for op in ("fill", "wait", "take", "publish"):
            costs[op] = _int(s, f"{op}_ns", 0)
            if costs[op] < 0:
                raise ConfigError(f"[middleware] {op}_ns", "must be non-negative")
        sc.middleware_costs = MiddlewareCosts(**costs)

    for name in cp.sections():
        kind, _, topic = name.partition(" ")
        s = cp[name]
        if kind == "subscription":
            if not topic:
                raise ConfigError(f"[{name}]", "missing topic name")
            busy, sleep = _int(s, "busy_ns", 0), _int(s, "sleep_ns", 0)
            if busy < 0 or sleep < 0:
                raise ConfigError(f"[{name}] busy_ns", "must be non-negative")
            cb = CallbackSpec(busy, sleep, s.get("publishes") or None)
            sc.subscriptions.append(SubscriptionSpec(topic.strip(), cb, _sched(s)))
        elif kind == "ping":
            sc.pings.append(PingNodeModel(topic.strip(), s.get("reply_topic", f"{topic}_pong"),
                                          _int(s, "period_ns")))
        elif kind not in ("scenario", "executor", "middleware"):
            raise ConfigError(f"[{name}]", "unknown section")
    try:
        sc.validate()
    except ScenarioError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None
    return sc


def load_config(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(sc: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": sc.name, "duration_ns": str(sc.duration), "seed": str(sc.seed)}
    cp["executor"] = {"priority": str(sc.executor_priority),
                      "wait_timeout_ns": str(sc.wait_timeout),
                      "queue_depth": str(sc.queue_depth)}
    c = sc.middleware_costs
    cp["middleware"] = {"fill_ns": str(c.fill), "wait_ns": str(c.wait),
                        "take_ns": str(c.take), "publish_ns": str(c.publish)}
    for sub in sc.subscriptions:
        p = sub.sched
        sec = {"busy_ns": str(sub.callback.busy_time), "sleep_ns": str(sub.callback.sleep_time),
               "publishes": sub.callback.publishes or "",
               "policy": p.policy.value, "priority": str(p.priority)}
        if p.is_sporadic:
            sec.update(low_priority=str(p.low_priority), repl_period_ns=str(p.repl_period),
                       init_budget_ns=str(p.init_budget), max_repl=str(p.max_repl))
        cp[f"subscription {sub.topic}"] = sec
    for ping in sc.pings:
        cp[f"ping {ping.send_topic}"] = {"period_ns": str(ping.period),
                                         "reply_topic": ping.reply_topic}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
