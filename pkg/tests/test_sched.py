import pytest

from budgetsim.kernel import MS, SEC, EventKind, Simulator
from budgetsim.sched import (BLOCK, Compute, CpuScheduler, InvalidParams, InvalidState,
                             SchedParams, State)


def job(*segments):
    """Body that burns each segment of CPU in turn, then blocks for good."""
    for ns in segments:
        yield Compute(ns)
    while True:
        yield BLOCK


def sporadic(budget=30 * MS, period=100 * MS, max_repl=100, prio=60, low=10):
    return SchedParams.sporadic(prio, low, budget, period, max_repl)


@pytest.fixture
def cpu():
    return CpuScheduler(Simulator())


def test_sporadic_wakeup_preempts_fifo(cpu):
    cpu.add_thread("lpbe", SchedParams.fifo(50), ready=True)
    cpu.sim.run_until(0)
    hp = cpu.add_thread("hprt", sporadic(), job(10 * MS))
    assert cpu.make_ready(hp.id, 0) is True


def test_equal_priority_wakeup_does_not_preempt(cpu):
    a = cpu.add_thread("a", SchedParams.fifo(50), ready=True)
    cpu.sim.run_until(0)
    b = cpu.add_thread("b", SchedParams.fifo(50), job(MS))
    assert cpu.make_ready(b.id, 0) is False
    cpu.sim.run_until(MS)
    assert cpu.running == a.id
    assert b.state is State.READY


def test_dropped_sporadic_wakeup_does_not_preempt(cpu):
    hp = cpu.add_thread("hprt", sporadic(budget=5 * MS), job(5 * MS), ready=True)
    cpu.sim.run_until(6 * MS)
    assert hp.state is State.BLOCKED
    assert hp.effective_priority == 10
    cpu.add_thread("lpbe", SchedParams.fifo(50), ready=True)
    cpu.sim.run_until(7 * MS)
    hp.body = job(MS)
    assert cpu.make_ready(hp.id, cpu.sim.now) is False


def test_make_ready_requires_blocked(cpu):
    th = cpu.add_thread("a", SchedParams.fifo(50), ready=True)
    with pytest.raises(InvalidState):
        cpu.make_ready(th.id, 0)


def test_pick_next_highest_priority(cpu):
    cpu.add_thread("worker", SchedParams.fifo(60), ready=True)
    ex = cpu.add_thread("executor", SchedParams.fifo(110), ready=True)
    assert cpu.pick_next(0) == ex.id


def test_pick_next_empty(cpu):
    assert cpu.pick_next(0) is None


def test_pick_next_fifo_tiebreak(cpu):
    a = cpu.add_thread("a", SchedParams.fifo(50))
    b = cpu.add_thread("b", SchedParams.fifo(50))
    cpu.make_ready(b.id, 1 * MS)
    cpu.make_ready(a.id, 2 * MS)
    assert cpu.pick_next(2 * MS) == b.id


def test_dispatch_arms_exhaustion(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    cpu.dispatch(th.id, 0)
    assert th.activation_time == 0
    assert th.exhaustion_handle.due == 30 * MS
    assert th.exhaustion_handle.kind is EventKind.BUDGET_EXHAUSTION


def test_dispatch_fifo_has_no_exhaustion(cpu):
    th = cpu.add_thread("f", SchedParams.fifo(50), ready=True)
    cpu.dispatch(th.id, 0)
    assert th.exhaustion_handle is None


def test_low_priority_dispatch_runs_without_exhaustion(cpu):
    th = cpu.add_thread("s", sporadic(budget=10 * MS), ready=True)
    trace = cpu.sim.run_until(50 * MS)
    assert [r.time for r in trace.select("EXHAUST")] == [10 * MS]
    assert th.state is State.RUNNING and th.effective_priority == 10
    assert th.exhaustion_handle is None
    assert th.low_cpu == 40 * MS


def test_dispatch_requires_idle_cpu(cpu):
    a = cpu.add_thread("a", SchedParams.fifo(50), ready=True)
    b = cpu.add_thread("b", SchedParams.fifo(40), ready=True)
    cpu.dispatch(a.id, 0)
    with pytest.raises(InvalidState):
        cpu.dispatch(b.id, 0)


def test_charge_sporadic(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    cpu.dispatch(th.id, 0)
    cpu.charge(th.id, 10 * MS)
    assert th.remaining_budget == 20 * MS


def test_charge_fifo_leaves_budget(cpu):
    th = cpu.add_thread("f", SchedParams.fifo(50), ready=True)
    cpu.dispatch(th.id, 0)
    cpu.charge(th.id, 10 * MS)
    assert th.remaining_budget == 0
    assert th.normal_cpu == 10 * MS


def test_charge_exact_budget_exhausts_at_that_instant(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    trace = cpu.sim.run_until(31 * MS)
    ex = trace.select("EXHAUST")
    assert [r.time for r in ex] == [30 * MS]
    assert th.remaining_budget == 0


def test_block_queues_replenishment(cpu):
    th = cpu.add_thread("s", sporadic(), job(10 * MS), ready=True)
    cpu.sim.run_until(20 * MS)
    assert [(op.amount, op.due) for op in th.pending_repls] == [(10 * MS, 100 * MS)]
    assert th.activation_time is None


def test_zero_length_slice_has_no_replenishment(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    cpu.dispatch(th.id, 0)
    cpu.preempt(th.id, 0)
    assert th.pending_repls == []


def test_max_repl_saturation_merges(cpu):
    def body():
        yield Compute(10 * MS)
        yield BLOCK
        yield Compute(5 * MS)
        while True:
            yield BLOCK

    sim = cpu.sim
    th = cpu.add_thread("s", sporadic(max_repl=1), body(), ready=True)
    sim.run_until(20 * MS)
    assert [(op.amount, op.due) for op in th.pending_repls] == [(10 * MS, 100 * MS)]
    sim.at(50 * MS, EventKind.TIMER, cpu.make_ready, th.id, 50 * MS)
    sim.run_until(60 * MS)
    assert len(th.pending_repls) == 1
    op = th.pending_repls[0]
    assert op.amount == 15 * MS
    # merged credit returns no earlier than the newest activation allows
    assert op.due == 150 * MS
    assert th.remaining_budget + op.amount == 30 * MS


def test_exhaustion_drops_priority(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    trace = cpu.sim.run_until(40 * MS)
    assert th.effective_priority == 10
    assert trace.select("PRIO_DROP")[0].time == 30 * MS
    assert [(op.amount, op.due) for op in th.pending_repls] == [(30 * MS, 100 * MS)]


def test_exhausted_thread_keeps_cpu_when_alone(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    cpu.sim.run_until(90 * MS)
    assert cpu.running == th.id
    assert th.low_cpu == 60 * MS


def test_fifo_preempts_at_priority_drop(cpu):
    hp = cpu.add_thread("hprt", sporadic(), ready=True)
    lp = cpu.add_thread("lpbe", SchedParams.fifo(50), ready=True)
    trace = cpu.sim.run_until(50 * MS)
    assert cpu.running == lp.id
    pre = trace.select("PREEMPT", "hprt")
    assert [r.time for r in pre] == [30 * MS]
    assert hp.state is State.READY


def test_replenishment_restores_priority(cpu):
    # 50 ms of work against a 30 ms budget: 20 ms left over at the drop
    th = cpu.add_thread("s", sporadic(), job(10 * MS, 40 * MS), ready=True)
    cpu.add_thread("f", SchedParams.fifo(50), ready=True)
    sim = cpu.sim
    sim.run_until(99 * MS)
    assert th.effective_priority == 10
    trace = sim.run_until(100 * MS)
    assert trace.select("PRIO_RESTORE", "s")[-1].time == 100 * MS
    assert th.effective_priority == 60
    assert cpu.running == th.id


def test_replenish_while_blocked_keeps_priority(cpu):
    th = cpu.add_thread("s", sporadic(), job(10 * MS), ready=True)
    trace = cpu.sim.run_until(150 * MS)
    assert th.remaining_budget == 30 * MS
    assert th.effective_priority == 60
    assert not trace.select("PRIO_RESTORE")


def test_replenished_thread_preempts_fifo(cpu):
    th = cpu.add_thread("s", sporadic(), ready=True)
    cpu.add_thread("f", SchedParams.fifo(50), ready=True)
    trace = cpu.sim.run_until(101 * MS)
    assert trace.select("PREEMPT", "f")[-1].time == 100 * MS
    assert cpu.running == th.id


def test_exhaustion_cancelled_when_thread_blocks_early(cpu):
    th = cpu.add_thread("s", sporadic(), job(10 * MS), ready=True)
    cpu.sim.run_until(5 * MS)
    handle = th.exhaustion_handle
    assert handle is not None and handle.due == 30 * MS
    trace = cpu.sim.run_until(200 * MS)
    assert handle.cancelled
    assert not trace.select("EXHAUST")


@pytest.mark.parametrize("kwargs,field", [
    (dict(low=60), "low_priority"),
    (dict(low=70), "low_priority"),
    (dict(budget=200 * MS), "init_budget"),
    (dict(budget=0), "init_budget"),
    (dict(max_repl=0), "max_repl"),
])
def test_invalid_params(kwargs, field):
    with pytest.raises(InvalidParams) as err:
        sporadic(**kwargs).validate()
    assert err.value.field == field


def test_budget_conservation_through_run(cpu):
    th = cpu.add_thread("s", sporadic(budget=7 * MS, period=20 * MS, max_repl=2),
                        job(*([3 * MS] * 200)), ready=True)
    cpu.add_thread("f", SchedParams.fifo(50), ready=True)
    sim = cpu.sim

    def check():
        cpu.account()
        assert cpu.budget_balance(th) == 7 * MS
        assert len(th.pending_repls) <= 2

    sim.after_event.append(check)
    sim.at(13 * MS, EventKind.TIMER)
    sim.run_until(SEC)
