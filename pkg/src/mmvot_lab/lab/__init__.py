"""Toy dual-branch model, synthetic tasks, and the four training paradigms."""

from .data import TaskDataset, TaskSpec, default_specs, gen_task
from .model import NumericFailure, ToyModel
from .training import (
    CheckpointChain,
    ReplayBuffer,
    TrainConfig,
    evaluate_task,
    train_parallel_mixed,
    train_separate,
    train_serial_naive,
    train_serial_replay,
)

__all__ = [
    "CheckpointChain",
    "NumericFailure",
    "ReplayBuffer",
    "TaskDataset",
    "TaskSpec",
    "ToyModel",
    "TrainConfig",
    "default_specs",
    "evaluate_task",
    "gen_task",
    "train_parallel_mixed",
    "train_separate",
    "train_serial_naive",
    "train_serial_replay",
]
