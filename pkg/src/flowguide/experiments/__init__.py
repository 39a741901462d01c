"""Experiment procedures. Each returns an :class:`ExperimentResult`."""
from .common import ExperimentResult
from .compare import run_schedule_comparison, run_sweep
from .divergence import run_divergence
from .greedy import GreedyConfig, run_greedy_search
from .grouping import run_ratio_grouping
from .spike import run_ratio_spike

__all__ = [
    "ExperimentResult",
    "GreedyConfig",
    "run_divergence",
    "run_greedy_search",
    "run_ratio_grouping",
    "run_ratio_spike",
    "run_schedule_comparison",
    "run_sweep",
]
