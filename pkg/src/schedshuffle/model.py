"""Task, task-set and run-time scheduler state types.

All time quantities are non-negative integers counted in slots. Inside a
:class:`TaskSet` tasks are kept in priority order, so a task's list index is
also its priority rank (0 = highest). The idle pseudo-task is ``IDLE``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDLE = -1

# Slot counters in the simulation kernels are int64; keep hyper-periods well
# clear of that so hyper_periods * L cannot overflow.
MAX_HYPER_PERIOD = 2**31


class ConfigError(ValueError):
    """Invalid task set or run configuration."""


@dataclass(frozen=True)
class TaskSpec:
    id: int
    period: int
    wcet: int
    deadline: int | None = None
    priority: int | None = None

    def __post_init__(self):
        if self.deadline is None:
            object.__setattr__(self, "deadline", self.period)
        if self.period < 1 or self.wcet < 1:
            raise ConfigError(f"task {self.id}: period and wcet must be >= 1")
        if self.deadline != self.period:
            raise ConfigError(f"task {self.id}: only implicit deadlines (d = p) are supported")
        if self.wcet > self.deadline:
            raise ConfigError(f"task {self.id}: wcet {self.wcet} exceeds deadline {self.deadline}")

    @property
    def utilization(self) -> float:
        return self.wcet / self.period


def hyper_period(periods) -> int:
    """Least common multiple of the task periods."""
    periods = [int(p) for p in periods]
    if not periods or min(periods) < 1:
        raise ConfigError("periods must be >= 1")
    L = math.lcm(*periods)
    if L > MAX_HYPER_PERIOD:
        raise ConfigError(f"hyper-period {L} exceeds the supported maximum {MAX_HYPER_PERIOD}")
    return L


class TaskSet:
    """A priority-ordered set of periodic tasks plus the implicit idle task.

    Priorities are taken from the specs when all of them carry one, otherwise
    they are assigned rate-monotonically (ties on equal periods go to the
    lower id).
    """

    def __init__(self, tasks, name: str = ""):
        tasks = list(tasks)
        if not tasks:
            raise ConfigError("a task set needs at least one task")
        ids = [t.id for t in tasks]
        if len(set(ids)) != len(ids):
            raise ConfigError("task ids must be unique")
        given = [t.priority is not None for t in tasks]
        if all(given):
            prios = [t.priority for t in tasks]
            if len(set(prios)) != len(prios):
                raise ConfigError("task priorities must be distinct")
            tasks.sort(key=lambda t: t.priority)
        elif any(given):
            raise ConfigError("either every task or no task may specify a priority")
        else:
            tasks.sort(key=lambda t: (t.period, t.id))
            tasks = [TaskSpec(t.id, t.period, t.wcet, t.deadline, rank) for rank, t in enumerate(tasks)]
        self.tasks: list[TaskSpec] = tasks
        self.name = name
        self.hyper_period = hyper_period(t.period for t in tasks)
        self.periods = np.array([t.period for t in tasks], dtype=np.int64)
        self.wcets = np.array([t.wcet for t in tasks], dtype=np.int64)
        self.deadlines = np.array([t.deadline for t in tasks], dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs, name: str = "") -> TaskSet:
        """Build a set from ``(period, wcet)`` pairs with ids 1, 2, ...

        >>> TaskSet.from_pairs([(5, 2), (7, 2), (20, 3)]).hyper_period
        140
        """
        return cls([TaskSpec(i + 1, p, e) for i, (p, e) in enumerate(pairs)], name=name)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, index) -> TaskSpec:
        return self.tasks[index]

    def __repr__(self):
        body = ", ".join(f"{t.id}:(p={t.period},e={t.wcet})" for t in self.tasks)
        return f"TaskSet({self.name!r}, [{body}])"

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tasks]

    @property
    def utilizations(self) -> np.ndarray:
        return self.wcets / self.periods

    @property
    def utilization(self) -> float:
        return float(self.utilizations.sum())

    @property
    def idle_capacity(self) -> int:
        """Idle slots per hyper-period: L minus the total demand of all jobs."""
        L = self.hyper_period
        return L - int(sum(int(t.wcet) * (L // t.period) for t in self.tasks))

    def hp(self, index: int) -> range:
        return range(index)

    def lp(self, index: int) -> range:
        return range(index + 1, len(self.tasks))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tasks": [
                {"id": t.id, "period": t.period, "wcet": t.wcet, "deadline": t.deadline, "priority": t.priority}
                for t in self.tasks
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> TaskSet:
        try:
            specs = [
                TaskSpec(
                    int(t["id"]),
                    int(t["period"]),
                    int(t["wcet"]),
                    None if t.get("deadline") is None else int(t["deadline"]),
                    None if t.get("priority") is None else int(t["priority"]),
                )
                for t in data["tasks"]
            ]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed task-set document: {exc}") from exc
        return cls(specs, name=str(data.get("name", "")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> TaskSet:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read task set {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class TaskRuntime:
    """Per-task view of the scheduler state at one slot."""

    release: int
    residue: int
    remaining: int
    inv_budget: int = 0
    ts_budget: int = 0

    @property
    def active(self) -> bool:
        return self.residue > 0


def effective_deadline(rt: TaskRuntime, spec: TaskSpec) -> int:
    """Deadline of the current job if active, else of the earliest next job."""
    if rt.active:
        return rt.release + spec.deadline
    return rt.release + 2 * spec.deadline


@dataclass
class SchedState:
    """Full scheduler state at the start of slot ``now``.

    Arrays are indexed by priority rank. ``residue`` is the scheduler's
    WCET-based bookkeeping; ``remaining`` is the job's true outstanding work.
    ``idle_used`` counts idle slots already spent in the current hyper-period,
    minus WCET left unused by jobs that completed early.
    """

    now: int
    release: np.ndarray
    residue: np.ndarray
    remaining: np.ndarray
    inv_budget: np.ndarray
    ts_budget: np.ndarray
    idle_used: int = 0
    previous: int = IDLE
    committed: int = IDLE

    @classmethod
    def at_start(cls, taskset: TaskSet) -> SchedState:
        """State at slot 0 with every task just released (budgets zeroed)."""
        n = len(taskset)
        return cls(
            now=0,
            release=np.zeros(n, dtype=np.int64),
            residue=taskset.wcets.copy(),
            remaining=taskset.wcets.copy(),
            inv_budget=np.zeros(n, dtype=np.int64),
            ts_budget=np.zeros(n, dtype=np.int64),
        )

    def copy(self) -> SchedState:
        return SchedState(
            self.now,
            self.release.copy(),
            self.residue.copy(),
            self.remaining.copy(),
            self.inv_budget.copy(),
            self.ts_budget.copy(),
            self.idle_used,
            self.previous,
            self.committed,
        )

    def runtime(self, index: int) -> TaskRuntime:
        return TaskRuntime(
            int(self.release[index]),
            int(self.residue[index]),
            int(self.remaining[index]),
            int(self.inv_budget[index]),
            int(self.ts_budget[index]),
        )

    @property
    def ready_queue(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.residue > 0)]

    def offset(self, index: int, taskset: TaskSet) -> int:
        """Distance from ``now`` to the earliest next release of a task."""
        return int(self.release[index] + taskset.periods[index] - self.now)

