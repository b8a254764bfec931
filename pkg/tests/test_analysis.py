import json

from hypothesis import given, settings

from schedshuffle.analysis import analyze, is_schedulable, max_slack, response_time, ts_max_inversion_budget
from schedshuffle.model import TaskSet

from helpers import tasksets


def test_response_times(ex1):
    # tau3: 3 -> 7 -> 9 -> 11 -> 13 -> 13
    assert [response_time(ex1, i) for i in range(3)] == [2, 4, 13]


def test_ts_budgets(ex1):
    assert [ts_max_inversion_budget(ex1, i) for i in range(3)] == [3, -1, -1]


def test_max_slack(ex1):
    assert [max_slack(ex1, i) for i in range(3)] == [3, 1, 3]


def test_unschedulable_set():
    ts = TaskSet.from_pairs([(4, 2), (6, 3)])
    assert not is_schedulable(ts)
    assert response_time(ts, 1) is None
    assert not analyze(ts).schedulable


def test_single_task_slack():
    ts = TaskSet.from_pairs([(10, 4)])
    assert max_slack(ts, 0) == 6
    assert ts_max_inversion_budget(ts, 0) == 6


def test_analysis_json(ex1):
    doc = json.loads(analyze(ex1).to_json(ex1))
    assert [t["V"] for t in doc["tasks"]] == [3, -1, -1]
    assert [t["V_bar"] for t in doc["tasks"]] == [3, 1, 3]
    assert [t["wcrt"] for t in doc["tasks"]] == [2, 4, 13]


@settings(max_examples=60, deadline=None)
@given(tasksets())
def test_slack_dominates_ts_budget(ts):
    a = analyze(ts)
    for i in range(len(ts)):
        assert a.max_slack[i] >= max(a.ts_budget[i], 0)
        # inflating by the slack keeps the task schedulable, one more slot does not
        assert response_time(ts, i, extra=int(a.max_slack[i])) <= ts[i].deadline
        assert response_time(ts, i, extra=int(a.max_slack[i]) + 1) is None
