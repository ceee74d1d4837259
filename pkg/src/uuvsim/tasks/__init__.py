"""Benchmark control tasks over the batched simulation engine."""

from .core import (
    DOCKING,
    LEVEL_DISTURBED,
    LEVEL_DISTURBED_DR,
    LEVEL_STANDARD,
    LEVELS,
    METRIC_DEFINITIONS,
    STATION_KEEPING,
    TASK_KINDS,
    TRACKING,
    DockSpec,
    DockingEnv,
    RewardWeights,
    StationKeepingEnv,
    TaskConfig,
    TaskError,
    TrackingEnv,
    VecTaskEnv,
    make_env,
    reward_station_keeping,
    reward_tracking,
    step_docking,
)
from .trajectories import HELIX, LISSAJOUS, TrajectoryError, TrajectorySpec, reference_point

__all__ = [
    "DOCKING", "LEVELS", "LEVEL_DISTURBED", "LEVEL_DISTURBED_DR", "LEVEL_STANDARD",
    "METRIC_DEFINITIONS", "STATION_KEEPING", "TASK_KINDS", "TRACKING", "HELIX", "LISSAJOUS",
    "DockSpec", "DockingEnv", "RewardWeights", "StationKeepingEnv", "TaskConfig",
    "TaskError", "TrackingEnv", "TrajectoryError", "TrajectorySpec", "VecTaskEnv",
    "make_env", "reference_point", "reward_station_keeping", "reward_tracking",
    "step_docking",
]
