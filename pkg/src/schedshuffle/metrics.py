"""Slot distributions and the entropy metrics computed from them.

A slot distribution is an ``(L, N + 1)`` matrix of probabilities, one row
per slot of the hyper-period and one column per task in priority order, with
the idle task in the last column. All logarithms are base 2.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import IDLE, TaskSet

ROW_TOLERANCE = 1e-9


def fmt(x) -> str:
    """Nine significant digits, the serialization used for every float output."""
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


@dataclass
class SlotDistribution:
    probs: np.ndarray
    task_ids: list
    sample_count: int = 0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2 or self.probs.shape[1] != len(self.task_ids) + 1:
            raise ValueError("probs must have shape (L, tasks + 1)")
        if np.any(self.probs < -ROW_TOLERANCE) or np.any(self.probs > 1 + ROW_TOLERANCE):
            raise ValueError("probabilities must lie in [0, 1]")
        rows = self.probs.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > ROW_TOLERANCE):
            raise ValueError("every slot row must sum to 1")

    @property
    def L(self) -> int:
        return self.probs.shape[0]

    @property
    def task_probs(self) -> np.ndarray:
        """Columns of the real tasks only."""
        return self.probs[:, :-1]

    def prob(self, slot: int, task_index: int) -> float:
        """``Pr(x_slot = task)``; ``task_index`` is a priority index or ``IDLE``."""
        return float(self.probs[slot, -1 if task_index == IDLE else task_index])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot"] + [str(i) for i in self.task_ids] + ["idle"])
        for t, row in enumerate(self.probs):
            w.writerow([t] + [fmt(x) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sample_count: int = 0) -> SlotDistribution:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        ids = [int(x) for x in header[1:-1]]
        probs = np.array([[float(x) for x in r[1:]] for r in body])
        return cls(probs, ids, sample_count)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "task_ids": list(self.task_ids),
            "sample_count": int(self.sample_count),
            "probs": [[float(fmt(x)) for x in row] for row in self.probs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> SlotDistribution:
        return cls(np.array(data["probs"], dtype=float), list(data["task_ids"]), int(data.get("sample_count", 0)))


class TraceAccumulator:
    """Folds executed-slot chunks into slot counts and per-task offset ranges.

    Chunks must start on a hyper-period boundary and contain whole
    hyper-periods, which is how the simulator produces them.
    """

    def __init__(self, taskset: TaskSet):
        self.taskset = taskset
        self.L = taskset.hyper_period
        self.n = len(taskset)
        self.counts = np.zeros((self.L, self.n + 1), dtype=np.int64)
        self.hyper_periods = 0

    def add(self, start: int, executed: np.ndarray) -> None:
        L, n = self.L, self.n
        if start % L or len(executed) % L:
            raise ValueError("chunks must cover whole hyper-periods")
        col = np.where(executed < 0, n, executed).astype(np.int64)
        slot = np.arange(len(executed), dtype=np.int64) % L
        self.counts += np.bincount(slot * (n + 1) + col, minlength=L * (n + 1)).reshape(L, n + 1)
        self.hyper_periods += len(executed) // L

    def distribution(self) -> SlotDistribution:
        if self.hyper_periods == 0:
            raise ValueError("no hyper-periods accumulated")
        return SlotDistribution(self.counts / self.hyper_periods, self.taskset.ids, self.hyper_periods)

    def range_ratios(self) -> np.ndarray:
        # p divides L, so the offset of slot t is (t mod L) mod p
        ratios = np.zeros(self.n)
        for i, p in enumerate(self.taskset.periods):
            offs = np.flatnonzero(self.counts[:, i]) % int(p)
            if len(offs):
                ratios[i] = (offs.max() - offs.min() + 1) / int(p)
        return ratios


def _executed(trace):
    return trace.executed if hasattr(trace, "executed") else np.asarray(trace)


def estimate_distribution(trace, taskset: TaskSet) -> SlotDistribution:
    """Empirical per-slot frequencies of a trace folded modulo the hyper-period."""
    executed = _executed(trace)
    if len(executed) % taskset.hyper_period:
        raise ValueError("trace length must be a multiple of the hyper-period")
    acc = TraceAccumulator(taskset)
    acc.add(0, executed)
    return acc.distribution()


def slot_min_entropies(dist: SlotDistribution) -> np.ndarray:
    """Per-slot min-entropy over real tasks; ``inf`` for slots that are surely idle."""
    top = dist.task_probs.max(axis=1) if dist.task_probs.shape[1] else np.zeros(dist.L)
    out = np.full(dist.L, math.inf)
    busy = top > 0
    out[busy] = -np.log2(np.minimum(top[busy], 1.0))
    return out + 0.0  # turn -0.0 into 0.0


def slot_min_entropy(dist: SlotDistribution, t: int) -> float:
    if not 0 <= t < dist.L:
        raise IndexError(f"slot {t} outside [0, {dist.L})")
    return float(slot_min_entropies(dist)[t])


def schedule_min_entropy(dist: SlotDistribution) -> float:
    """Weakest slot of the hyper-period; surely-idle slots are skipped."""
    h = slot_min_entropies(dist)
    finite = h[np.isfinite(h)]
    return float(finite.min()) if len(finite) else math.inf


def slot_shannon_entropies(dist: SlotDistribution, include_idle: bool = True) -> np.ndarray:
    p = dist.probs if include_idle else dist.task_probs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=1) + 0.0


def schedule_shannon_entropy(dist: SlotDistribution) -> float:
    """Sum of the per-slot Shannon entropies, idle included."""
    return float(slot_shannon_entropies(dist).sum())


def entropy_bound(taskset: TaskSet) -> float:
    """Upper bound on schedule min-entropy: ``-log2`` of the largest task utilization."""
    u = float(taskset.utilizations.max())
    if not 0.0 < u <= 1.0:
        raise ValueError("utilizations must lie in (0, 1]")
    return -math.log2(u) + 0.0


def execution_range_ratio(trace, taskset: TaskSet) -> np.ndarray:
    """Per task: span of release-relative offsets at which it ran, over its period."""
    executed = _executed(trace)
    ratios = np.zeros(len(taskset))
    slots = np.arange(len(executed), dtype=np.int64)
    for i, p in enumerate(taskset.periods):
        offs = slots[executed == i] % int(p)
        if len(offs):
            ratios[i] = (offs.max() - offs.min() + 1) / int(p)
    return ratios


@dataclass
class EntropyReport:
    slot_min_entropy: np.ndarray
    schedule_min_entropy: float
    schedule_shannon_entropy: float
    entropy_bound: float
    range_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    context_switches: float | None = None  # per hyper-period

    @property
    def mean_range_ratio(self) -> float:
        return float(np.mean(self.range_ratios)) if len(self.range_ratios) else 0.0

    @property
    def eps(self) -> float | None:
        """Schedule min-entropy gained per context switch (per hyper-period)."""
        if self.context_switches is None or self.context_switches <= 0:
            return None
        return self.schedule_min_entropy / self.context_switches

    def to_dict(self) -> dict:
        return {
            "schedule_min_entropy": fmt(self.schedule_min_entropy),
            "schedule_shannon_entropy": fmt(self.schedule_shannon_entropy),
            "entropy_bound": fmt(self.entropy_bound),
            "range_ratios": [fmt(x) for x in self.range_ratios],
            "mean_range_ratio": fmt(self.mean_range_ratio),
            "context_switches_per_hyper_period": fmt(self.context_switches),
            "eps": fmt(self.eps),
            "slot_min_entropy": [fmt(x) for x in self.slot_min_entropy],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def entropy_report(dist: SlotDistribution, taskset: TaskSet, range_ratios=None,
                   context_switches=None) -> EntropyReport:
    return EntropyReport(
        slot_min_entropies(dist),
        schedule_min_entropy(dist),
        schedule_shannon_entropy(dist),
        entropy_bound(taskset),
        np.zeros(len(taskset)) if range_ratios is None else np.asarray(range_ratios, float),
        context_switches,
    )
