"""Discrete-event simulator of a budget-based real-time publish/subscribe executor."""

from .executor import (CallbackSpec, DuplicateTopic, Executor, Message, MiddlewareCosts,
                       MiddlewareLock, MiddlewareQueue, Subscription, WorkerState)
from .kernel import (MS, SEC, CancelResult, Event, EventKind, PastDue, SimError, Simulator,
                     Trace, TraceParseError, TraceRecord)
from .metrics import CSV_COLUMNS, Metrics, TopicMetrics
from .sched import (BLOCK, BudgetUnderflow, Compute, CpuScheduler, InvalidParams, InvalidState,
                    Policy, ReplenishmentOp, SchedParams, SimThread, State)
from .workload import (PingNodeModel, Run, Scenario, ScenarioError, SubscriptionSpec,
                       build_case1, build_case2, build_workconserving, run_scenario)

__version__ = "0.1.0"
