import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schedshuffle.metrics import (EntropyReport, SlotDistribution, TraceAccumulator, entropy_bound, entropy_report,
                                  estimate_distribution, execution_range_ratio, fmt, schedule_min_entropy,
                                  schedule_shannon_entropy, slot_min_entropies, slot_min_entropy,
                                  slot_shannon_entropies)
from schedshuffle.model import IDLE, TaskSet
from schedshuffle.oracle import exact_slot_distribution
from schedshuffle.simulator import SimConfig, run


def dist_of(rows):
    rows = np.asarray(rows, float)
    return SlotDistribution(rows, list(range(1, rows.shape[1])))


def test_deterministic_trace_gives_indicator_matrix(ex1):
    trace = run(ex1, None, SimConfig(policy="fp", hyper_periods=3))
    d = estimate_distribution(trace, ex1)
    assert set(np.unique(d.probs)) <= {0.0, 1.0}
    assert d.sample_count == 3
    assert schedule_min_entropy(d) == 0.0
    assert schedule_shannon_entropy(d) == 0.0


def test_counting_two_hyper_periods():
    ts = TaskSet.from_pairs([(4, 1), (4, 1)])
    trace = np.array([0, 1, -1, 0, 1, 0, -1, -1])
    d = estimate_distribution(trace, ts)
    assert d.prob(0, 0) == 0.5 and d.prob(0, 1) == 0.5
    assert d.prob(2, IDLE) == 1.0
    assert d.prob(3, 0) == 0.5 and d.prob(3, IDLE) == 0.5


def test_estimate_requires_whole_hyper_periods(ex1):
    with pytest.raises(ValueError):
        estimate_distribution(np.zeros(141, int), ex1)


@pytest.mark.parametrize("top, bits", [(0.5, 1.0), (1.0, 0.0), (0.867, 0.206)])
def test_slot_min_entropy_values(top, bits):
    d = dist_of([[top, 1 - top, 0.0]])
    assert slot_min_entropy(d, 0) == pytest.approx(bits, abs=5e-4)


def test_idle_is_excluded_from_min_entropy():
    d = dist_of([[0.4, 0.6], [0.0, 1.0], [1.0, 0.0]])
    h = slot_min_entropies(d)
    assert h[0] == pytest.approx(-math.log2(0.4))
    assert math.isinf(h[1])
    assert schedule_min_entropy(d) == 0.0
    assert math.isinf(schedule_min_entropy(dist_of([[0.0, 1.0]])))
    with pytest.raises(IndexError):
        slot_min_entropy(d, 3)


def test_shannon_sums_slots_with_idle():
    d = dist_of([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert schedule_shannon_entropy(d) == pytest.approx(1.0)
    d = dist_of([[0.5, 0.0, 0.5]])
    assert schedule_shannon_entropy(d) == pytest.approx(1.0)
    assert slot_shannon_entropies(d, include_idle=False)[0] == pytest.approx(0.5)


def test_two_task_shannon_slots(two_task):
    d = exact_slot_distribution(two_task, "tspp-exact", "uniform")
    h = slot_shannon_entropies(d)
    assert h[2] == pytest.approx(1.29, abs=0.01)
    assert h[8] == pytest.approx(1.29, abs=0.01)


@pytest.mark.parametrize("pairs, bits", [([(5, 1), (7, 4)], -math.log2(4 / 7)), ([(4, 4)], 0.0), ([(10, 5)], 1.0)])
def test_entropy_bound(pairs, bits):
    assert entropy_bound(TaskSet.from_pairs(pairs)) == pytest.approx(bits)


def test_entropy_bound_example_value(two_task):
    assert round(entropy_bound(two_task), 3) == 0.807


def test_range_ratio_fp_is_e_over_p():
    ts = TaskSet.from_pairs([(10, 3)])
    trace = run(ts, None, SimConfig(policy="fp", hyper_periods=4))
    assert execution_range_ratio(trace, ts).tolist() == [0.3]


def test_range_ratio_full_span():
    ts = TaskSet.from_pairs([(4, 1)])
    trace = np.array([0, -1, -1, -1, -1, -1, -1, 0])
    assert execution_range_ratio(trace, ts).tolist() == [1.0]
    never = TaskSet.from_pairs([(4, 1), (4, 1)])
    assert execution_range_ratio(np.array([0, -1, -1, -1]), never).tolist() == [0.25, 0.0]


def test_accumulator_matches_direct_computation(ex1):
    trace = run(ex1, None, SimConfig(hyper_periods=40, seed=2))
    acc = TraceAccumulator(ex1)
    for k in range(0, len(trace.executed), 280):
        acc.add(k, trace.executed[k:k + 280])
    assert np.array_equal(acc.distribution().probs, estimate_distribution(trace, ex1).probs)
    assert np.array_equal(acc.range_ratios(), execution_range_ratio(trace, ex1))
    with pytest.raises(ValueError):
        acc.add(1, trace.executed[:140])


def test_distribution_validation_and_round_trips():
    with pytest.raises(ValueError):
        dist_of([[0.5, 0.4, 0.0]])
    with pytest.raises(ValueError):
        dist_of([[1.2, -0.2, 0.0]])
    d = dist_of([[0.25, 0.75, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(SlotDistribution.from_csv(d.to_csv()).probs, d.probs)
    assert np.allclose(SlotDistribution.from_dict(d.to_dict()).probs, d.probs)


def test_report_eps_and_serialization(two_task):
    d = exact_slot_distribution(two_task, "tspp-exact", "weighted")
    rep = entropy_report(d, two_task, [1.0, 1.0], context_switches=8.0)
    assert rep.eps == pytest.approx(rep.schedule_min_entropy / 8.0)
    assert EntropyReport(rep.slot_min_entropy, 0.0, 0.0, 0.0).eps is None
    doc = rep.to_dict()
    assert doc["mean_range_ratio"] == "1"
    assert doc["schedule_min_entropy"] == fmt(rep.schedule_min_entropy)


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(math.inf) == "inf"
    assert fmt(None) == ""


rows = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda r: sum(r) > 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(rows, min_size=1, max_size=8), st.permutations(range(2)))
def test_min_entropy_properties(raw, perm):
    probs = np.array([np.array(r) / sum(r) for r in raw])
    d = dist_of(probs)
    h_min = slot_min_entropies(d)
    h_sh = slot_shannon_entropies(d, include_idle=False)
    busy = np.isfinite(h_min)
    # min-entropy never exceeds Shannon entropy on the same (real-task) domain
    # once the task columns are renormalized
    for t in np.flatnonzero(busy):
        q = probs[t, :2] / probs[t, :2].sum()
        shannon = -sum(x * math.log2(x) for x in q if x > 0)
        assert -math.log2(q.max()) <= shannon + 1e-9
    assert np.all(h_min[busy] >= 0) and np.all(h_sh >= 0)
    # relabelling tasks leaves the schedule min-entropy unchanged
    relabelled = dist_of(np.column_stack([probs[:, list(perm)], probs[:, 2]]))
    assert schedule_min_entropy(relabelled) == schedule_min_entropy(d)
