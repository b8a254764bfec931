import json

import numpy as np
import pytest

from schedshuffle.analysis import is_schedulable
from schedshuffle.generator import (COMMON_HYPER_PERIOD, PERIOD_POOL, GenConfig, GenerationError, generate,
                                    generate_corpus, group_interval, load_corpus)
from schedshuffle.model import ConfigError


def test_period_pool():
    assert PERIOD_POOL[:15] == (10, 12, 15, 20, 24, 25, 30, 40, 50, 60, 75, 100, 120, 125, 150)
    assert PERIOD_POOL[-1] == 3000
    assert all(COMMON_HYPER_PERIOD % p == 0 and p >= 10 for p in PERIOD_POOL)


def test_group_intervals():
    assert group_interval(0) == pytest.approx((0.02, 0.08))
    assert group_interval(9) == pytest.approx((0.92, 0.98))
    with pytest.raises(ConfigError):
        group_interval(10)
    with pytest.raises(ConfigError):
        GenConfig(0, 0)


@pytest.mark.parametrize("group", range(10))
@pytest.mark.parametrize("n", [5, 15])
def test_generated_sets_meet_constraints(group, n):
    ts = generate(GenConfig(group, n), np.random.default_rng(group * 100 + n))
    lo, hi = group_interval(group)
    assert len(ts) == n
    assert lo <= ts.utilization <= hi
    assert is_schedulable(ts)
    assert COMMON_HYPER_PERIOD % ts.hyper_period == 0
    assert all(p in PERIOD_POOL for p in ts.periods)
    assert all(1 <= e <= min(50, p - 1) for p, e in zip(ts.periods, ts.wcets))
    assert sorted(t.priority for t in ts) == list(range(n))


def test_generation_is_deterministic():
    a = generate(GenConfig(3, 7, seed=5))
    b = generate(GenConfig(3, 7, seed=5))
    assert a.to_dict() == b.to_dict()


def test_retry_exhaustion():
    with pytest.raises(GenerationError):
        generate(GenConfig(9, 15, retries=1), np.random.default_rng(0))


def test_corpus_layout(tmp_path):
    manifest = generate_corpus(tmp_path / "c", seed=1, groups=[0, 4], task_counts=(5, 7), sets_per_subgroup=2)
    assert len(manifest["sets"]) == 8
    on_disk = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert on_disk == manifest
    loaded = list(load_corpus(tmp_path / "c"))
    assert [e["name"] for e, _ in loaded][:2] == ["g0_n05_000", "g0_n05_001"]
    # a set does not depend on which other groups were requested
    alone = generate_corpus(tmp_path / "d", seed=1, groups=[4], task_counts=(7,), sets_per_subgroup=1)
    assert (tmp_path / "d" / "g4_n07_000.json").read_text() == (tmp_path / "c" / "g4_n07_000.json").read_text()
    same = [e for e in manifest["sets"] if e["name"] == "g4_n07_000"][0]
    assert alone["sets"][0]["utilization"] == same["utilization"]


def test_load_corpus_errors(tmp_path):
    with pytest.raises(ConfigError):
        list(load_corpus(tmp_path))
