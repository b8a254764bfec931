"""Offline analyses computed once per task set.

Response times use the classic fixed-point iteration for fixed-priority
preemptive scheduling. The shuffler baseline budget ``V`` inflates each
higher-priority interference term by one deferred job; the maximum slack
``V_bar`` is the largest execution inflation a task tolerates under a
synchronous release.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import TaskSet


def _fixed_point(wcet, hp_periods, hp_wcets, limit):
    w = wcet
    while True:
        nxt = wcet + sum(-(-w // p) * e for p, e in zip(hp_periods, hp_wcets))
        if nxt == w:
            return w
        if nxt > limit:
            return None
        w = nxt


def response_time(taskset: TaskSet, index: int, extra: int = 0):
    """Worst-case response time of one task, or ``None`` if it exceeds the deadline.

    ``extra`` inflates the task's own execution time (used by :func:`max_slack`).
    """
    spec = taskset[index]
    wcet = spec.wcet + extra
    if wcet > spec.deadline:
        return None
    hp_p = [int(p) for p in taskset.periods[:index]]
    hp_e = [int(e) for e in taskset.wcets[:index]]
    return _fixed_point(wcet, hp_p, hp_e, spec.deadline)


def is_schedulable(taskset: TaskSet) -> bool:
    return all(response_time(taskset, i) is not None for i in range(len(taskset)))


def ts_max_inversion_budget(taskset: TaskSet, index: int) -> int:
    """Static inversion budget of the shuffler baseline (may be negative)."""
    spec = taskset[index]
    d = spec.deadline
    interference = sum(
        (-(-d // int(p)) + 1) * int(e) for p, e in zip(taskset.periods[:index], taskset.wcets[:index])
    )
    return d - spec.wcet - interference


def max_slack(taskset: TaskSet, index: int) -> int:
    """Largest q >= 0 with the response time at wcet + q still within the deadline."""
    if response_time(taskset, index) is None:
        raise ValueError(f"task {taskset[index].id} is not schedulable")
    q = 0
    while response_time(taskset, index, q + 1) is not None:
        q += 1
    return q


@dataclass
class StaticAnalysisResult:
    wcrt: list
    ts_budget: np.ndarray
    max_slack: np.ndarray
    utilization: np.ndarray

    @property
    def schedulable(self) -> bool:
        return all(w is not None for w in self.wcrt)

    def to_dict(self, taskset: TaskSet) -> dict:
        return {
            "schedulable": self.schedulable,
            "tasks": [
                {
                    "id": spec.id,
                    "wcrt": self.wcrt[i],
                    "V": int(self.ts_budget[i]),
                    "V_bar": int(self.max_slack[i]),
                    "utilization": float(self.utilization[i]),
                }
                for i, spec in enumerate(taskset)
            ],
        }

    def to_json(self, taskset: TaskSet) -> str:
        return json.dumps(self.to_dict(taskset), indent=2)


def analyze(taskset: TaskSet) -> StaticAnalysisResult:
    """Run every offline analysis. Slack is -1 for unschedulable tasks."""
    n = len(taskset)
    wcrt = [response_time(taskset, i) for i in range(n)]
    ts = np.array([ts_max_inversion_budget(taskset, i) for i in range(n)], dtype=np.int64)
    slack = np.array([max_slack(taskset, i) if wcrt[i] is not None else -1 for i in range(n)], dtype=np.int64)
    return StaticAnalysisResult(wcrt, ts, slack, taskset.utilizations)
