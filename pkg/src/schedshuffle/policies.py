"""Candidate-list construction and job selection for the four policies.

Policies: ``fp`` (plain fixed priority), ``ts`` (static-budget shuffler
baseline), ``tspp-exact`` (busy-interval test per higher-priority task) and
``tspp-approx`` (Test I-1 / I-2 for inactive tasks, run-time budget for
active ones). Selection is ``uniform`` or ``weighted`` by remaining
utilization.

Every candidate list is a prefix of the priority-ordered ready queue with the
idle job appended, so the kernels only return its length. The ``*_kernel``
functions are compiled with numba and operate on the raw state arrays; the
plain functions wrap them for a :class:`~schedshuffle.model.SchedState`.
"""

from __future__ import annotations

import math

import numpy as np
from ._jit import kernel

from .model import IDLE, SchedState, TaskSet

FP, TS, EXACT, APPROX = 0, 1, 2, 3
UNIFORM, WEIGHTED = 0, 1

POLICIES = {"fp": FP, "ts": TS, "tspp-exact": EXACT, "tspp-approx": APPROX}
SELECTIONS = {"uniform": UNIFORM, "weighted": WEIGHTED}

# rows of the overflow-bound instrumentation table
ARMED, RHO_BAR, R_STAR, EXCESS = 0, 1, 2, 3


@kernel
def _ceil0(x, p):
    """ceil(x / p) floored at 0, for 0 < p and |x| < 2**52."""
    if x <= 0:
        return 0
    # float division plus an exact one-step fix-up is much cheaper than idiv
    q = np.int64((x - 1) / p)
    r = x - 1 - q * p
    if r < 0:
        q -= 1
    elif r >= p:
        q += 1
    return q + 1


@kernel
def busy_interval_kernel(t, h, w, release, residue, e, p, limit):
    """Level-h busy interval length, or -1 once it exceeds ``limit``."""
    base = w
    for j in range(h):
        base += residue[j]
    top = h + 1
    if residue[h] > 0:
        base += residue[h]
        top = h
    if base > limit:
        return -1
    W = base
    while True:
        acc = base
        for j in range(top):
            acc += _ceil0(W - (release[j] + p[j] - t), p[j]) * e[j]
        if acc == W:
            return W
        if acc > limit:
            return -1
        W = acc


@kernel
def exact_test_kernel(t, h, w, release, residue, e, p, d):
    if residue[h] > 0:
        limit = release[h] + d[h] - t
    else:
        limit = release[h] + 2 * d[h] - t
    # the demand function is monotone, so demand(limit) <= limit already
    # proves the least fixed point fits; iterate only when that fails
    demand = w
    top = h + 1
    if residue[h] > 0:
        demand += residue[h]
        top = h
    for j in range(h):
        demand += residue[j]
    if demand > limit:
        return False
    for j in range(top):
        demand += _ceil0(limit - (release[j] + p[j] - t), p[j]) * e[j]
    if demand <= limit:
        return True
    return busy_interval_kernel(t, h, w, release, residue, e, p, limit) >= 0


@kernel
def test_i1_kernel(t, h, w, release, residue, e, p):
    oh = release[h] + p[h] - t
    lhs = w
    for j in range(h):
        lhs += residue[j] + _ceil0(oh - (release[j] + p[j] - t), p[j]) * e[j]
    return lhs <= oh


@kernel
def overflow_bound_kernel(t, h, release, residue, e, p):
    """Upper bound on the deferred hp(h) work left at h's next release.

    Returns ``(bound, r_star)``. Jobs released exactly at h's release are not
    overflow: they are part of the synchronous case covered by the slack.

    ``r_star`` is absolute, or -1 when no higher-priority job arrives before
    the release (the bound then carries the current residues unchanged).
    """
    oh = release[h] + p[h] - t
    total = 0
    r_star = -1
    for j in range(h):
        oj = release[j] + p[j] - t
        if oj < oh:
            total += e[j]
            # latest release strictly before h's next arrival
            last = oj + ((oh - oj - 1) // p[j]) * p[j]
            if last > r_star:
                r_star = last
        else:
            total += residue[j]
    if r_star < 0:
        return total, -1
    bound = total - (oh - r_star)
    if bound < 0:
        bound = 0
    return bound, t + r_star


@kernel
def init_budget_kernel(t, h, release, residue, e, p, d):
    """Run-time inversion budget of h at its release instant."""
    dh = d[h]
    interference = 0
    for j in range(h):
        oj = release[j] + p[j] - t
        interference += residue[j]
        span = dh - oj
        if span >= 0:
            n = span // p[j]
            f = dh - (oj + n * p[j])
            if f > e[j]:
                f = e[j]
            interference += n * e[j] + f
    return dh - e[h] - interference


@kernel
def task_passes_kernel(policy, t, h, w, release, residue, e, p, d, ts_v, slack,
                       inv_budget, ts_budget, ovf, instrument):
    """May a job below h run for ``w`` slots now without endangering h?"""
    if policy == EXACT:
        return exact_test_kernel(t, h, w, release, residue, e, p, d)
    if policy == APPROX:
        if residue[h] > 0:
            return inv_budget[h] >= w
        if test_i1_kernel(t, h, w, release, residue, e, p):
            return True
        bound, r_star = overflow_bound_kernel(t, h, release, residue, e, p)
        if instrument:
            ovf[ARMED, h] = 1
            ovf[RHO_BAR, h] = bound
            ovf[R_STAR, h] = r_star if r_star >= 0 else t + 1
            ovf[EXCESS, h] = 0
        return bound <= slack[h]
    if policy == TS:
        if ts_v[h] < 0:
            for j in range(h):
                if residue[j] > 0:
                    return False
        if residue[h] > 0:
            return ts_budget[h] >= w
        return True
    return False


@kernel
def count_candidates_kernel(policy, completion, t, ready, nready, release, residue, e, p, d,
                            ts_v, slack, inv_budget, ts_budget, ovf, instrument):
    """Length of the admitted prefix of ``ready ++ [idle]``.

    Each higher-priority task is tested once per call (the tests depend only
    on the inversion size, not on who inverts), unless ``completion`` sizes
    the inversion by each candidate's residue.
    """
    if policy == FP:
        return 1
    N = e.shape[0]
    validated = 0
    for i in range(1, nready + 1):
        if i < nready:
            c = ready[i]
            w = residue[c] if completion else 1
        else:
            c = N
            w = 1
        start = 0 if completion else validated
        for h in range(start, c):
            if not task_passes_kernel(policy, t, h, w, release, residue, e, p, d, ts_v, slack,
                                      inv_budget, ts_budget, ovf, instrument):
                return i
        validated = c
    return nready + 1


@kernel
def _candidate_weight(i, t, ready, nready, release, residue, d, idle_left, to_end):
    if i < nready:
        c = ready[i]
        return residue[c] / (release[c] + d[c] - t)
    return idle_left / to_end


@kernel
def select_kernel(selection, draw, k, t, ready, nready, release, residue, d, idle_left, to_end):
    """Map one uniform draw in [0, 1) to a position in the candidate prefix."""
    if k == 1:
        return 0
    if selection == WEIGHTED:
        total = 0.0
        for i in range(k):
            total += _candidate_weight(i, t, ready, nready, release, residue, d, idle_left, to_end)
        if total > 0.0:
            target = draw * total
            acc = 0.0
            last = 0
            for i in range(k):
                u = _candidate_weight(i, t, ready, nready, release, residue, d, idle_left, to_end)
                if u > 0.0:
                    acc += u
                    last = i
                    if target < acc:
                        return i
            return last
    i = int(draw * k)
    return i if i < k else k - 1


# ---------------------------------------------------------------------------
# Python-level operations on SchedState

def _arrays(state: SchedState, taskset: TaskSet):
    return state.release, state.residue, taskset.wcets, taskset.periods, taskset.deadlines


def _ready(state: SchedState):
    ready = np.flatnonzero(state.residue > 0).astype(np.int64)
    return ready, len(ready)


def _static_arrays(taskset: TaskSet, analysis):
    n = len(taskset)
    if analysis is None:
        return np.zeros(n, np.int64), np.zeros(n, np.int64)
    return np.asarray(analysis.ts_budget, np.int64), np.asarray(analysis.max_slack, np.int64)


def _as_list(k: int, ready: np.ndarray) -> list[int]:
    return [int(ready[i]) if i < len(ready) else IDLE for i in range(k)]


def policy_code(policy) -> int:
    if isinstance(policy, str):
        try:
            return POLICIES[policy]
        except KeyError:
            raise ValueError(f"unknown policy {policy!r}; expected one of {sorted(POLICIES)}") from None
    return int(policy)


def selection_code(selection) -> int:
    if isinstance(selection, str):
        try:
            return SELECTIONS[selection]
        except KeyError:
            raise ValueError(f"unknown selection {selection!r}; expected one of {sorted(SELECTIONS)}") from None
    return int(selection)


def busy_interval(state: SchedState, taskset: TaskSet, h: int, w: int = 1):
    """Length of the level-h busy interval starting with a w-slot inversion.

    Returns ``math.inf`` if the iteration runs past twice the hyper-period.
    """
    release, residue, e, p, _ = _arrays(state, taskset)
    W = busy_interval_kernel(state.now, h, w, release, residue, e, p, 2 * taskset.hyper_period)
    return math.inf if W < 0 else int(W)


def test_i1(state: SchedState, taskset: TaskSet, h: int, w: int = 1) -> bool:
    release, residue, e, p, _ = _arrays(state, taskset)
    return bool(test_i1_kernel(state.now, h, w, release, residue, e, p))


def overflow_bound(state: SchedState, taskset: TaskSet, h: int) -> int:
    release, residue, e, p, _ = _arrays(state, taskset)
    bound, _ = overflow_bound_kernel(state.now, h, release, residue, e, p)
    return int(bound)


def test_i2(state: SchedState, taskset: TaskSet, h: int, max_slack: int) -> bool:
    """True when an inversion is still allowed (overflow bound within slack)."""
    return overflow_bound(state, taskset, h) <= max_slack


def init_inversion_budget(state: SchedState, taskset: TaskSet, h: int) -> int:
    release, residue, e, p, d = _arrays(state, taskset)
    return int(init_budget_kernel(state.now, h, release, residue, e, p, d))


def count_candidates(policy, state: SchedState, taskset: TaskSet, analysis=None, completion=False) -> int:
    code = policy_code(policy)
    release, residue, e, p, d = _arrays(state, taskset)
    ts_v, slack = _static_arrays(taskset, analysis)
    ready, nready = _ready(state)
    ovf = np.zeros((4, len(taskset)), np.int64)
    return int(count_candidates_kernel(code, completion, state.now, ready, nready, release, residue, e, p, d,
                                       ts_v, slack, state.inv_budget, state.ts_budget, ovf, False))


def candidates(policy, state: SchedState, taskset: TaskSet, analysis=None, completion=False) -> list[int]:
    """Admitted candidates in priority order; ``IDLE`` marks the idle job."""
    ready, _ = _ready(state)
    return _as_list(count_candidates(policy, state, taskset, analysis, completion), ready)


def candidates_fp(state, taskset, analysis=None):
    return candidates(FP, state, taskset, analysis)


def candidates_ts(state, taskset, analysis):
    return candidates(TS, state, taskset, analysis)


def candidates_exact(state, taskset, analysis=None):
    return candidates(EXACT, state, taskset, analysis)


def candidates_approx(state, taskset, analysis):
    return candidates(APPROX, state, taskset, analysis)


def selection_weights(cands: list[int], state: SchedState, taskset: TaskSet, rule="weighted") -> np.ndarray:
    """Probability of picking each candidate."""
    k = len(cands)
    if k == 0:
        raise ValueError("empty candidate list")
    if selection_code(rule) == UNIFORM:
        return np.full(k, 1.0 / k)
    L = taskset.hyper_period
    idle_left = max(0, taskset.idle_capacity - state.idle_used)
    u = np.empty(k)
    for i, c in enumerate(cands):
        if c == IDLE:
            u[i] = idle_left / (L - state.now % L)
        else:
            u[i] = state.residue[c] / (state.release[c] + taskset.deadlines[c] - state.now)
    total = u.sum()
    if total <= 0:
        return np.full(k, 1.0 / k)
    return u / total


def select(cands: list[int], state: SchedState, taskset: TaskSet, rule, rng: np.random.Generator) -> int:
    """Pick one candidate, consuming exactly one uniform draw from ``rng``."""
    draw = rng.random()
    if not cands:
        raise ValueError("empty candidate list")
    # the kernel expects the candidates as a prefix of ready ++ [idle]
    ready = np.array([c for c in cands if c != IDLE], dtype=np.int64)
    nready = len(ready)
    L = taskset.hyper_period
    idle_left = max(0, taskset.idle_capacity - state.idle_used)
    idx = select_kernel(selection_code(rule), draw, len(cands), state.now, ready, nready,
                        state.release, state.residue, taskset.deadlines, float(idle_left),
                        float(L - state.now % L))
    return cands[idx]
