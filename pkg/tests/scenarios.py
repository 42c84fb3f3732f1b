"""Seeded random scenarios plus an invariant observer for the simulator."""

import random

from budgetsim import (MS, SEC, CallbackSpec, MiddlewareCosts, PingNodeModel, SchedParams,
                       Scenario, SubscriptionSpec)
from budgetsim.sched import State
from budgetsim.workload import Run


def random_scenario(seed, duration=SEC):
    rnd = random.Random(seed)
    subs, pings = [], []
    for i in range(rnd.randint(2, 4)):
        topic = f"t{i}"
        prio = rnd.randint(20, 100)
        if rnd.random() < 0.6:
            period = rnd.randint(10, 200) * MS
            sched = SchedParams.sporadic(prio, rnd.randint(1, prio - 1),
                                         rnd.randint(1, period // MS) * MS, period,
                                         rnd.randint(1, 8))
        else:
            sched = SchedParams.fifo(prio)
        cb = CallbackSpec(rnd.randint(0, 20) * MS + rnd.choice([0, 250_000]),
                          rnd.choice([0, 0, rnd.randint(1, 10) * MS]), f"{topic}_pong")
        subs.append(SubscriptionSpec(topic, cb, sched))
        pings.append(PingNodeModel(topic, f"{topic}_pong", rnd.randint(5, 50) * MS))
    costs = MiddlewareCosts(*(rnd.choice([0, 0, rnd.randint(1, 300) * 1000]) for _ in range(4)))
    return Scenario(duration=duration, subscriptions=subs, pings=pings,
                    executor_priority=rnd.choice([110, 110, 110, 45]),
                    wait_timeout=rnd.choice([20, 100]) * MS,
                    queue_depth=rnd.randint(1, 16), middleware_costs=costs,
                    seed=seed, name=f"random{seed}")


class InvariantWatch:
    """Checks scheduler invariants after every event of a run."""

    def __init__(self, run: Run):
        self.run = run
        self.violations: list[str] = []
        run.sim.after_event.append(self.check)

    def _fail(self, msg):
        if len(self.violations) < 20:
            self.violations.append(f"{self.run.sim.now}: {msg}")

    def check(self):
        sim, cpu = self.run.sim, self.run.cpu
        cpu.account()
        running = [th for th in cpu.threads.values() if th.state is State.RUNNING]
        if len(running) > 1:
            self._fail("more than one running thread")
        used = sum(th.normal_cpu + th.low_cpu for th in cpu.threads.values())
        if used > sim.now:
            self._fail(f"charged {used} ns of CPU by t={sim.now}")
        settled = (sim.next_due() or sim.now + 1) > sim.now
        for th in cpu.threads.values():
            if not th.is_sporadic:
                continue
            p = th.params
            if cpu.budget_balance(th) != p.init_budget:
                self._fail(f"{th.name} budget balance {cpu.budget_balance(th)}")
            if len(th.pending_repls) > p.max_repl:
                self._fail(f"{th.name} has {len(th.pending_repls)} pending replenishments")
            if th.remaining_budget < 0:
                self._fail(f"{th.name} negative budget")
            if settled and th.at_low_priority != (th.remaining_budget == 0):
                self._fail(f"{th.name} low={th.at_low_priority} "
                           f"remaining={th.remaining_budget}")
