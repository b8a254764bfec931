"""Exact per-slot distributions by forward propagation of probability mass.

The scheduler is a Markov chain over its state; under the WCET execution
model the state space per slot is small for tiny task sets, so the whole
distribution can be pushed forward one slot at a time, merging branches that
reach the same state. Candidate admission reuses the policy kernels; state
transitions, selection probabilities and budget charging are computed here
independently of the simulator.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .analysis import StaticAnalysisResult, analyze
from .metrics import SlotDistribution
from .model import IDLE, SchedState, TaskSet
from .policies import APPROX, TS, candidates, init_inversion_budget, policy_code, selection_weights

DEFAULT_MAX_TASKS = 3
DEFAULT_MAX_HYPER_PERIOD = 200
DEFAULT_MAX_STATES = 200_000
CONVERGENCE = 1e-12


class OracleRefusal(RuntimeError):
    """The task set is too large for exhaustive enumeration."""


@dataclass
class OracleResult:
    distribution: SlotDistribution
    hyper_periods: int
    max_states: int
    miss_probability: float


def _key(residue, inv, tsb, idle_used, committed):
    # budgets of inactive tasks are re-initialized before they are ever read
    inv = tuple(v if r > 0 else 0 for v, r in zip(inv, residue))
    tsb = tuple(v if r > 0 else 0 for v, r in zip(tsb, residue))
    if committed >= 0 and residue[committed] == 0:
        committed = IDLE
    return (tuple(residue), inv, tsb, idle_used, committed)


class _Propagator:
    def __init__(self, taskset, policy, selection, analysis, completion, max_states):
        self.ts = taskset
        self.n = len(taskset)
        self.L = taskset.hyper_period
        self.policy = policy_code(policy)
        self.selection = selection
        self.analysis = analysis
        self.completion = completion
        self.max_states = max_states
        self.e = [int(x) for x in taskset.wcets]
        self.p = [int(x) for x in taskset.periods]
        self.peak = 0

    def hyper_period(self, start: dict):
        """Push a start-of-hyper-period distribution through L slots."""
        n, L = self.n, self.L
        marg = np.zeros((L, n + 1))
        layer = start
        missed = 0.0
        for t in range(L):
            nxt = defaultdict(float)
            for key, mass in layer.items():
                missed += self._slot(t, key, mass, marg, nxt)
            if len(nxt) > self.max_states:
                raise OracleRefusal(f"state space exceeds the cap of {self.max_states} states at slot {t}")
            self.peak = max(self.peak, len(nxt))
            layer = nxt
        return marg, dict(layer), missed

    def _slot(self, t, key, mass, marg, nxt):
        n = self.n
        residue, inv, tsb, idle_used, committed = (list(key[0]), list(key[1]), list(key[2]), key[3], key[4])
        release = [t - t % p for p in self.p]
        missed = 0.0
        due = [i for i in range(n) if t % self.p[i] == 0]
        for i in due:
            if residue[i] > 0:
                missed = mass
            residue[i] = self.e[i]
        if t % self.L == 0:
            idle_used = 0
        state = SchedState(t, np.array(release, np.int64), np.array(residue, np.int64),
                           np.array(residue, np.int64), np.array(inv, np.int64), np.array(tsb, np.int64),
                           idle_used, IDLE, committed)
        for i in due:
            if self.policy == TS:
                tsb[i] = int(self.analysis.ts_budget[i])
            elif self.policy == APPROX:
                inv[i] = init_inversion_budget(state, self.ts, i)
        state.inv_budget = np.array(inv, np.int64)
        state.ts_budget = np.array(tsb, np.int64)

        if self.completion and committed >= 0 and residue[committed] > 0:
            branches = [(committed, 1.0, committed)]
        else:
            cands = candidates(self.policy, state, self.ts, self.analysis, self.completion)
            weights = selection_weights(cands, state, self.ts, self.selection)
            branches = []
            for pos, (c, w) in enumerate(zip(cands, weights)):
                if w > 0:
                    commit = c if (self.completion and pos > 0 and c != IDLE) else IDLE
                    branches.append((c, float(w), commit))

        for sel, w, commit in branches:
            r = list(residue)
            v = list(inv)
            b = list(tsb)
            top = n if sel == IDLE else sel
            for h in range(top):
                if r[h] > 0:
                    if self.policy == APPROX:
                        v[h] -= 1
                    elif self.policy == TS:
                        b[h] -= 1
            if sel == IDLE:
                used = idle_used + 1
                marg[t, n] += mass * w
            else:
                r[sel] -= 1
                used = idle_used
                marg[t, sel] += mass * w
            nxt[_key(r, v, b, used, commit)] += mass * w
        return missed


def _start_state(taskset: TaskSet) -> dict:
    n = len(taskset)
    zeros = (0,) * n
    return {(zeros, zeros, zeros, 0, IDLE): 1.0}


def _distance(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys), default=0.0)


def exact_slot_distribution_result(taskset: TaskSet, policy="tspp-exact", selection="uniform",
                                   horizon_hyper_periods: int | None = None,
                                   analysis: StaticAnalysisResult | None = None, completion: bool = False,
                                   max_tasks: int = DEFAULT_MAX_TASKS,
                                   max_hyper_period: int = DEFAULT_MAX_HYPER_PERIOD,
                                   max_states: int = DEFAULT_MAX_STATES, max_iterations: int = 1000) -> OracleResult:
    """Exact per-slot marginals of the given hyper-period.

    With ``horizon_hyper_periods`` the marginals of that hyper-period (1-based)
    are reported; otherwise hyper-periods are iterated until the start state
    distribution stops changing and the stationary marginals are reported.
    """
    if len(taskset) > max_tasks:
        raise OracleRefusal(f"{len(taskset)} tasks exceed the oracle cap of {max_tasks}")
    if taskset.hyper_period > max_hyper_period:
        raise OracleRefusal(f"hyper-period {taskset.hyper_period} exceeds the oracle cap of {max_hyper_period}")
    analysis = analysis if analysis is not None else analyze(taskset)
    prop = _Propagator(taskset, policy, selection, analysis, completion, max_states)
    start = _start_state(taskset)
    limit = horizon_hyper_periods if horizon_hyper_periods is not None else max_iterations
    missed = 0.0
    for k in range(1, limit + 1):
        marg, end, missed = prop.hyper_period(start)
        done = horizon_hyper_periods is None and _distance(start, end) < CONVERGENCE
        start = end
        if done:
            break
    else:
        if horizon_hyper_periods is None:
            raise OracleRefusal(f"no convergence within {max_iterations} hyper-periods")
    # rows sum to 1 up to rounding; renormalize so they validate exactly
    marg = marg / marg.sum(axis=1, keepdims=True)
    dist = SlotDistribution(marg, taskset.ids, 0)
    return OracleResult(dist, k, prop.peak, missed)


def exact_slot_distribution(taskset: TaskSet, policy="tspp-exact", selection="uniform",
                            horizon_hyper_periods: int | None = None, **kwargs) -> SlotDistribution:
    return exact_slot_distribution_result(taskset, policy, selection, horizon_hyper_periods, **kwargs).distribution
