"""Randomized fixed-priority scheduling with schedulability-preserving priority inversions.

Modules: ``model`` (task sets and state), ``analysis`` (offline bounds),
``policies`` (candidate tests and job selection), ``simulator``,
``oracle`` (exact distributions), ``metrics``, ``generator`` and ``cli``.
"""

from .analysis import StaticAnalysisResult, analyze
from .metrics import EntropyReport, SlotDistribution, entropy_report, estimate_distribution
from .model import IDLE, ConfigError, SchedState, TaskSet, TaskSpec
from .oracle import OracleRefusal, exact_slot_distribution
from .simulator import DeadlineMissError, ScheduleTrace, SimConfig, Simulator, run

__all__ = [
    "IDLE",
    "ConfigError",
    "DeadlineMissError",
    "EntropyReport",
    "OracleRefusal",
    "SchedState",
    "ScheduleTrace",
    "SimConfig",
    "Simulator",
    "SlotDistribution",
    "StaticAnalysisResult",
    "TaskSet",
    "TaskSpec",
    "analyze",
    "entropy_report",
    "estimate_distribution",
    "exact_slot_distribution",
    "run",
]
