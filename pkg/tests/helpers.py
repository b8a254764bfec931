"""Shared builders and hypothesis strategies for the test modules."""

import numpy as np
from hypothesis import assume
from hypothesis import strategies as st

from schedshuffle import SchedState, TaskSet
from schedshuffle.analysis import is_schedulable

SMALL_PERIODS = (4, 5, 6, 8, 10, 12, 15, 20, 24, 30)


def make_state(now, release, residue):
    release = np.asarray(release, dtype=np.int64)
    residue = np.asarray(residue, dtype=np.int64)
    n = len(release)
    zeros = np.zeros(n, dtype=np.int64)
    return SchedState(now, release, residue, residue.copy(), zeros, zeros.copy())


@st.composite
def tasksets(draw, max_tasks=4, max_util=0.95):
    """Small RM-schedulable sets with short hyper-periods."""
    n = draw(st.integers(1, max_tasks))
    pairs = []
    for _ in range(n):
        p = draw(st.sampled_from(SMALL_PERIODS))
        e = draw(st.integers(1, max(1, p // 2)))
        pairs.append((p, e))
    ts = TaskSet.from_pairs(pairs)
    assume(ts.utilization <= max_util and is_schedulable(ts) and ts.hyper_period <= 120)
    return ts
