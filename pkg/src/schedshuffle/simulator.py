"""Discrete-time execution engine.

Each slot: release due jobs (counting misses of jobs still pending at their
deadline), initialize run-time budgets, build the candidate list, select one
job with a single uniform draw, execute it for one slot and charge inversion
budgets of every active task it overtook.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from ._jit import kernel

from .analysis import StaticAnalysisResult, analyze
from .model import IDLE, ConfigError, SchedState, TaskSet
from .policies import (
    APPROX,
    ARMED,
    EXACT,
    EXCESS,
    R_STAR,
    RHO_BAR,
    TS,
    count_candidates_kernel,
    init_budget_kernel,
    policy_code,
    select_kernel,
    selection_code,
)

# integer run statistics
MISSES, SWITCHES, SHADOW, OVERDRAFT, OVF_VIOLATIONS, NEG_BUDGET, BUDGET_OVER, FIRST_MISS_SLOT, FIRST_MISS_TASK, \
    DECISIONS, INVERSIONS, RELEASES, OVF_CHECKS = range(13)
N_STATS = 13
# float run statistics
RATIO_SUM, RATIO_COUNT = 0, 1

# misc scalar state
IDLE_USED, PREV, LAST_TASK, COMMITTED = range(4)

CHUNK_SLOTS = 1 << 20


class DeadlineMissError(RuntimeError):
    """Raised under strict mode; carries the state at the miss."""

    def __init__(self, slot, task_index, state):
        super().__init__(f"deadline miss of task index {task_index} at slot {slot}")
        self.slot = slot
        self.task_index = task_index
        self.state = state


@kernel
def release_phase(t, L, policy, instrument, e, p, d, slack, ts_v, release, residue, remaining,
                  inv_budget, ts_budget, misc, ovf, actual, use_actual, stats, fstats):
    """Process releases at slot t. Returns the index of a missed task or -1."""
    N = e.shape[0]
    missed = -1
    any_release = False
    for i in range(N):
        if t == release[i] + p[i]:
            any_release = True
            if remaining[i] > 0:
                stats[MISSES] += 1
                if stats[FIRST_MISS_SLOT] < 0:
                    stats[FIRST_MISS_SLOT] = t
                    stats[FIRST_MISS_TASK] = i
                if missed < 0:
                    missed = i
            release[i] = t
            residue[i] = e[i]
            remaining[i] = actual[i] if use_actual else e[i]
            stats[RELEASES] += 1
    if any_release and t % L == 0:
        misc[IDLE_USED] = 0
    if not any_release or (policy != APPROX and policy != TS):
        return missed
    pending = 0
    for i in range(N):
        if release[i] == t:
            if policy == TS:
                ts_budget[i] = ts_v[i]
            else:
                v = init_budget_kernel(t, i, release, residue, e, p, d)
                inv_budget[i] = v
                if instrument:
                    if v < 0:
                        stats[NEG_BUDGET] += 1
                    if v > d[i] - e[i]:
                        stats[BUDGET_OVER] += 1
                    if slack[i] > 0:
                        fstats[RATIO_SUM] += v / slack[i]
                        fstats[RATIO_COUNT] += 1.0
                    if ovf[ARMED, i] == 1:
                        stats[OVF_CHECKS] += 1
                        if pending > ovf[RHO_BAR, i] + ovf[EXCESS, i]:
                            stats[OVF_VIOLATIONS] += 1
                        ovf[ARMED, i] = 0
        if release[i] != t:
            pending += residue[i]
    return missed


@kernel
def decide_dispatch(t, L, idle_cap, policy, selection, completion, shadow, instrument, count_idle,
                    draw, e, p, d, slack, ts_v, release, residue, remaining, inv_budget, ts_budget,
                    misc, ovf, ready, stats):
    """Choose and execute the job of slot t. Returns the priority index, or N for idle."""
    N = e.shape[0]
    nready = 0
    for i in range(N):
        if residue[i] > 0:
            ready[nready] = i
            nready += 1
    committed = misc[COMMITTED]
    if completion and committed >= 0 and residue[committed] > 0:
        sel = committed
    else:
        misc[COMMITTED] = -1
        k = count_candidates_kernel(policy, completion, t, ready, nready, release, residue, e, p, d,
                                    ts_v, slack, inv_budget, ts_budget, ovf, instrument)
        if shadow and policy == APPROX:
            kx = count_candidates_kernel(EXACT, completion, t, ready, nready, release, residue, e, p, d,
                                         ts_v, slack, inv_budget, ts_budget, ovf, False)
            if k > kx:
                stats[SHADOW] += 1
        idle_left = idle_cap - misc[IDLE_USED]
        if idle_left < 0:
            idle_left = 0
        idx = select_kernel(selection, draw, k, t, ready, nready, release, residue, d,
                            float(idle_left), float(L - t % L))
        sel = ready[idx] if idx < nready else N
        stats[DECISIONS] += 1
        if idx > 0:
            stats[INVERSIONS] += 1
            if completion and sel < N:
                misc[COMMITTED] = sel

    # charge every active task the job overtakes
    pending = 0
    top = sel if sel < N else N
    for h in range(top):
        if residue[h] > 0:
            if policy == APPROX:
                if inv_budget[h] < 1:
                    stats[OVERDRAFT] += 1
                inv_budget[h] -= 1
            elif policy == TS:
                if ts_budget[h] < 1:
                    stats[OVERDRAFT] += 1
                ts_budget[h] -= 1
        elif instrument and policy == APPROX and ovf[ARMED, h] == 1:
            if pending > 0 and t >= ovf[R_STAR, h]:
                ovf[EXCESS, h] += 1
        pending += residue[h]

    if sel < N:
        residue[sel] -= 1
        remaining[sel] -= 1
        if remaining[sel] <= 0:
            # WCET the job did not use turns into idle capacity
            misc[IDLE_USED] -= residue[sel]
            remaining[sel] = 0
            residue[sel] = 0
        cur = sel
    else:
        misc[IDLE_USED] += 1
        cur = -1
    if count_idle:
        if cur != misc[PREV]:
            stats[SWITCHES] += 1
    elif cur >= 0 and cur != misc[LAST_TASK]:
        stats[SWITCHES] += 1
    misc[PREV] = cur
    if cur >= 0:
        misc[LAST_TASK] = cur
    return sel


@kernel
def simulate_kernel(t0, t1, L, idle_cap, policy, selection, completion, strict, shadow, instrument,
                    count_idle, e, p, d, slack, ts_v, release, residue, remaining, inv_budget, ts_budget,
                    misc, ovf, draws, exec_table, exec_ptr, use_actual, executed, stats, fstats, ready, actual):
    """Run slots [t0, t1). Returns t1, or the slot of the first miss in strict mode.

    ``ready`` and ``actual`` are length-N scratch arrays.
    """
    N = e.shape[0]
    for t in range(t0, t1):
        if use_actual:
            for i in range(N):
                if t == release[i] + p[i]:
                    actual[i] = exec_table[i, exec_ptr[i]]
                    exec_ptr[i] += 1
        missed = release_phase(t, L, policy, instrument, e, p, d, slack, ts_v, release, residue, remaining,
                               inv_budget, ts_budget, misc, ovf, actual, use_actual, stats, fstats)
        if strict and missed >= 0:
            return t
        sel = decide_dispatch(t, L, idle_cap, policy, selection, completion, shadow, instrument, count_idle,
                              draws[t - t0], e, p, d, slack, ts_v, release, residue, remaining, inv_budget,
                              ts_budget, misc, ovf, ready, stats)
        executed[t - t0] = sel if sel < N else -1
    return t1


def parse_exec_time(spec) -> float | None:
    """``'wcet'`` -> None, ``'uniform:0.7'`` -> 0.7."""
    if spec is None or spec == "wcet":
        return None
    if isinstance(spec, (int, float)):
        low = float(spec)
    else:
        kind, _, value = str(spec).partition(":")
        if kind != "uniform" or not value:
            raise ConfigError(f"exec-time model must be 'wcet' or 'uniform:<low>', got {spec!r}")
        try:
            low = float(value)
        except ValueError:
            raise ConfigError(f"bad exec-time ratio {value!r}") from None
    if not 0.0 < low <= 1.0:
        raise ConfigError(f"exec-time ratio must lie in (0, 1], got {low}")
    return low


@dataclass
class SimConfig:
    policy: str = "tspp-exact"
    selection: str = "weighted"
    hyper_periods: int = 1
    seed: int = 0
    exec_time: str = "wcet"
    set_index: int = 0
    run_index: int = 0
    completion: bool = False
    strict: bool = False
    count_idle_switches: bool = True
    shadow: bool = False
    instrument: bool = False

    def __post_init__(self):
        if self.hyper_periods < 1:
            raise ConfigError("hyper_periods must be >= 1")
        try:
            policy_code(self.policy)
            selection_code(self.selection)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.exec_low = parse_exec_time(self.exec_time)

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(self.set_index, self.run_index))


@dataclass
class ScheduleTrace:
    """Per-slot record of one run; ``executed`` holds priority indices, -1 for idle."""

    executed: np.ndarray
    hyper_period: int
    deadline_misses: int
    context_switches: int
    stats: dict = field(default_factory=dict)
    slots: int = -1  # simulated slots; differs from len(executed) when the trace was streamed

    def __post_init__(self):
        if self.slots < 0:
            self.slots = len(self.executed)

    @property
    def hyper_periods(self) -> int:
        return self.slots // self.hyper_period

    @property
    def switches_per_hyper_period(self) -> float:
        return self.context_switches / self.hyper_periods

    def summary(self) -> dict:
        return {"misses": self.deadline_misses, "context_switches": self.context_switches,
                "slots": int(self.slots)}

    def to_csv(self, path, taskset: TaskSet) -> None:
        ids = np.array(taskset.ids + [IDLE])
        labels = ids[self.executed]
        with open(path, "w") as fh:
            fh.write("slot,task_id\n")
            for slot, task in enumerate(labels):
                fh.write(f"{slot},{'idle' if task == IDLE else int(task)}\n")


class Simulator:
    """Slot-by-slot stepper sharing the compiled kernels with :func:`run`."""

    def __init__(self, taskset: TaskSet, config: SimConfig, analysis: StaticAnalysisResult | None = None):
        self.taskset = taskset
        self.config = config
        self.analysis = analysis if analysis is not None else analyze(taskset)
        n = len(taskset)
        self.policy = policy_code(config.policy)
        self.selection = selection_code(config.selection)
        self.slack = np.asarray(self.analysis.max_slack, np.int64)
        self.ts_v = np.asarray(self.analysis.ts_budget, np.int64)
        self.now = 0
        # "previous release" one period back, so the first release fires at 0
        self.release = -taskset.periods.astype(np.int64)
        self.residue = np.zeros(n, np.int64)
        self.remaining = np.zeros(n, np.int64)
        self.inv_budget = np.zeros(n, np.int64)
        self.ts_budget = np.zeros(n, np.int64)
        self.misc = np.array([0, -1, -1, -1], np.int64)
        self.ovf = np.zeros((4, n), np.int64)
        self.stats = np.zeros(N_STATS, np.int64)
        self.stats[FIRST_MISS_SLOT] = -1
        self.stats[FIRST_MISS_TASK] = -1
        self.fstats = np.zeros(2)
        self._ready = np.empty(n, np.int64)
        self._released_for = -1
        ss = config.seed_sequence()
        sel_ss, exec_ss = ss.spawn(2)
        self._sel_rng = np.random.default_rng(sel_ss)
        self._exec_rngs = [np.random.default_rng(s) for s in exec_ss.spawn(n)]
        self._low = [max(1, math.ceil(config.exec_low * int(e) - 1e-9)) if config.exec_low else int(e)
                     for e in taskset.wcets]

    def _draw_actual(self, counts) -> np.ndarray:
        width = max(1, int(max(counts)))
        table = np.zeros((len(self.taskset), width), np.int64)
        for i, (rng, lo, hi) in enumerate(zip(self._exec_rngs, self._low, self.taskset.wcets)):
            if counts[i]:
                table[i, :counts[i]] = rng.integers(lo, int(hi) + 1, size=counts[i])
        return table

    def _release(self):
        t = self.now
        ts = self.taskset
        if self.config.exec_low is not None:
            due = [1 if t % int(p) == 0 else 0 for p in ts.periods]
            actual = self._draw_actual(due)[:, 0]
        else:
            actual = ts.wcets
        missed = release_phase(t, ts.hyper_period, self.policy, self.config.instrument, ts.wcets, ts.periods,
                               ts.deadlines, self.slack, self.ts_v, self.release, self.residue, self.remaining,
                               self.inv_budget, self.ts_budget, self.misc, self.ovf, actual,
                               self.config.exec_low is not None, self.stats, self.fstats)
        self._released_for = t
        if missed >= 0 and self.config.strict:
            raise DeadlineMissError(t, missed, self.decision_state())

    def decision_state(self) -> SchedState:
        """State at the current slot after its releases, before dispatch."""
        if self._released_for != self.now:
            self._release()
        m = self.misc
        return SchedState(self.now, self.release.copy(), self.residue.copy(), self.remaining.copy(),
                          self.inv_budget.copy(), self.ts_budget.copy(), int(m[IDLE_USED]),
                          int(m[PREV]), int(m[COMMITTED]))

    def step(self) -> int:
        """Execute one slot; returns the priority index run, or ``IDLE``."""
        if self._released_for != self.now:
            self._release()
        ts = self.taskset
        cfg = self.config
        draw = float(self._sel_rng.random())
        sel = decide_dispatch(self.now, ts.hyper_period, ts.idle_capacity, self.policy, self.selection,
                              cfg.completion, cfg.shadow, cfg.instrument, cfg.count_idle_switches, draw,
                              ts.wcets, ts.periods, ts.deadlines, self.slack, self.ts_v, self.release,
                              self.residue, self.remaining, self.inv_budget, self.ts_budget, self.misc,
                              self.ovf, self._ready, self.stats)
        self.now += 1
        return IDLE if sel >= len(ts) else int(sel)


def _release_counts(periods, t0, t1):
    return [(t1 - 1) // int(p) - (t0 - 1) // int(p) for p in periods]


def run(taskset: TaskSet, analysis: StaticAnalysisResult | None, config: SimConfig,
        sink=None, keep_trace: bool = True) -> ScheduleTrace:
    """Simulate ``config.hyper_periods`` hyper-periods from slot 0.

    The trace depends only on (taskset, config); in particular the random
    streams derive from ``(seed, set_index, run_index)`` and one selection
    draw is consumed per slot whatever the policy.

    ``sink(start, executed)`` is called for every chunk of whole
    hyper-periods; with ``keep_trace=False`` the returned trace holds no
    slots, which keeps long runs in bounded memory.
    """
    sim = Simulator(taskset, config, analysis)
    L = taskset.hyper_period
    total = L * config.hyper_periods
    dtype = np.int16 if len(taskset) < 32000 else np.int32
    chunk = max(1, CHUNK_SLOTS // L) * L
    executed = np.empty(total if keep_trace else min(total, chunk), dtype)
    exec_ptr = np.zeros(len(taskset), np.int64)
    use_actual = config.exec_low is not None
    t = 0
    while t < total:
        t1 = min(total, t + chunk)
        draws = sim._sel_rng.random(t1 - t)
        if use_actual:
            table = sim._draw_actual(_release_counts(taskset.periods, t, t1))
            exec_ptr[:] = 0
        else:
            table = np.zeros((len(taskset), 1), np.int64)
        out = executed[t:t1] if keep_trace else executed[:t1 - t]
        stop = simulate_kernel(t, t1, L, taskset.idle_capacity, sim.policy, sim.selection, config.completion,
                               config.strict, config.shadow, config.instrument, config.count_idle_switches,
                               taskset.wcets, taskset.periods, taskset.deadlines, sim.slack, sim.ts_v,
                               sim.release, sim.residue, sim.remaining, sim.inv_budget, sim.ts_budget, sim.misc,
                               sim.ovf, draws, table, exec_ptr, use_actual, out, sim.stats,
                               sim.fstats, sim._ready, np.empty(len(taskset), np.int64))
        if stop < t1:
            sim.now = stop
            sim._released_for = stop
            raise DeadlineMissError(stop, int(sim.stats[FIRST_MISS_TASK]), sim.decision_state())
        if sink is not None:
            sink(t, out)
        t = t1
    st = sim.stats
    stats = {
        "shadow_violations": int(st[SHADOW]),
        "overdraft_violations": int(st[OVERDRAFT]),
        "overflow_violations": int(st[OVF_VIOLATIONS]),
        "overflow_checks": int(st[OVF_CHECKS]),
        "negative_budgets": int(st[NEG_BUDGET]),
        "budgets_above_bound": int(st[BUDGET_OVER]),
        "decisions": int(st[DECISIONS]),
        "inversions": int(st[INVERSIONS]),
        "releases": int(st[RELEASES]),
        "first_miss_slot": int(st[FIRST_MISS_SLOT]),
        "first_miss_task": int(st[FIRST_MISS_TASK]),
    }
    if sim.fstats[RATIO_COUNT] > 0:
        stats["mean_budget_ratio"] = float(sim.fstats[RATIO_SUM] / sim.fstats[RATIO_COUNT])
    if not keep_trace:
        executed = executed[:0]
    return ScheduleTrace(executed, L, int(st[MISSES]), int(st[SWITCHES]), stats, total)
