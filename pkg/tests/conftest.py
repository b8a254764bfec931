import sys

import pytest

from schedshuffle import TaskSet


@pytest.fixture
def ex1():
    """Three-task running example: (5,2), (7,2), (20,3)."""
    return TaskSet.from_pairs([(5, 2), (7, 2), (20, 3)], name="ex1")


@pytest.fixture
def two_task():
    return TaskSet.from_pairs([(5, 1), (7, 4)], name="two-task")


CRITERIA = ["1", "2", "3", "4", "5", "6a", "6b", "6c", "7", "8", "9"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in CRITERIA:
        if key in results:
            ok, detail = results[key]
            terminalreporter.write_line(f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}")
