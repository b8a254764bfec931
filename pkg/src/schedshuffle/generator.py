"""Synthetic task-set generation for the evaluation corpus.

Sets are drawn by rejection sampling: a target utilization inside the
group's interval is split into per-task shares by uniform stick-breaking,
each share gets a period drawn uniformly from the pool periods on which it
yields a legal WCET, and the resulting set is kept only if
its rounded utilization stays in the interval and it passes response-time
analysis under rate-monotonic priorities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import is_schedulable
from .model import ConfigError, TaskSet

COMMON_HYPER_PERIOD = 3000
MIN_PERIOD = 10
MAX_WCET = 50
GROUPS = tuple(range(10))
TASK_COUNTS = (5, 7, 9, 11, 13, 15)
DEFAULT_RETRIES = 10_000


def period_pool(hyper_period: int = COMMON_HYPER_PERIOD, minimum: int = MIN_PERIOD) -> list[int]:
    """Divisors of ``hyper_period`` not smaller than ``minimum``."""
    return [d for d in range(minimum, hyper_period + 1) if hyper_period % d == 0]


PERIOD_POOL = tuple(period_pool())


def group_interval(group: int) -> tuple[float, float]:
    if group not in GROUPS:
        raise ConfigError(f"utilization group must be in 0..9, got {group}")
    return 0.02 + 0.1 * group, 0.08 + 0.1 * group


@dataclass(frozen=True)
class GenConfig:
    group: int
    task_count: int
    seed: int = 0
    retries: int = DEFAULT_RETRIES

    def __post_init__(self):
        group_interval(self.group)
        if self.task_count < 1:
            raise ConfigError("task_count must be >= 1")

    @property
    def interval(self) -> tuple[float, float]:
        return group_interval(self.group)


class GenerationError(RuntimeError):
    """No acceptable set was found within the retry budget."""


def feasible_periods(u: float) -> list[int]:
    """Pool periods on which share ``u`` rounds to a WCET in [1, min(50, p - 1)]."""
    out = []
    for p in PERIOD_POOL:
        e = round(u * p)
        if 1 <= e <= min(MAX_WCET, p - 1):
            out.append(p)
    return out


def _draw(config: GenConfig, rng: np.random.Generator):
    lo, hi = config.interval
    target = rng.uniform(lo, hi)
    cuts = np.sort(rng.random(config.task_count - 1))
    shares = np.diff(np.concatenate(([0.0], cuts, [1.0]))) * target
    pairs = []
    for u in shares:
        # drawing from the whole pool makes small groups with many tasks
        # practically unreachable; fall back to it only if nothing fits
        pool = feasible_periods(u) or PERIOD_POOL
        p = int(pool[rng.integers(len(pool))])
        e = int(min(max(round(u * p), 1), min(MAX_WCET, p - 1)))
        pairs.append((p, e))
    return pairs


def generate(config: GenConfig, rng: np.random.Generator | None = None) -> TaskSet:
    """Draw one schedulable set for the group, retrying up to ``config.retries`` times."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    lo, hi = config.interval
    for _ in range(config.retries):
        pairs = _draw(config, rng)
        u = sum(e / p for p, e in pairs)
        if not lo <= u <= hi:
            continue
        ts = TaskSet.from_pairs(pairs)
        if is_schedulable(ts):
            return ts
    raise GenerationError(
        f"no schedulable set for group {config.group} with {config.task_count} tasks "
        f"after {config.retries} attempts"
    )


def set_seed_sequence(seed: int, group: int, subgroup: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(group, subgroup, index))


def set_name(group: int, task_count: int, index: int) -> str:
    return f"g{group}_n{task_count:02d}_{index:03d}"


def generate_corpus(out_dir, seed: int = 0, groups=GROUPS, task_counts=TASK_COUNTS,
                    sets_per_subgroup: int = 1, retries: int = DEFAULT_RETRIES) -> dict:
    """Write one JSON file per set plus ``manifest.json``; returns the manifest.

    Every set has its own seed stream, so a set does not depend on which other
    groups or subgroups were requested.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for group in groups:
        for subgroup, n in enumerate(task_counts):
            for k in range(sets_per_subgroup):
                rng = np.random.default_rng(set_seed_sequence(seed, group, n, k))
                ts = generate(GenConfig(group, n, seed, retries), rng)
                name = set_name(group, n, k)
                ts.name = name
                ts.save(out / f"{name}.json")
                entries.append({
                    "name": name,
                    "file": f"{name}.json",
                    "group": group,
                    "subgroup": subgroup,
                    "task_count": n,
                    "index": k,
                    "utilization": round(ts.utilization, 9),
                })
    manifest = {"schema": 1, "seed": seed, "sets": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_corpus(corpus_dir):
    """Yield ``(entry, TaskSet)`` pairs in manifest order."""
    root = Path(corpus_dir)
    path = root / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read corpus manifest {path}: {exc}") from exc
    for entry in manifest.get("sets", []):
        yield entry, TaskSet.load(root / entry["file"])
