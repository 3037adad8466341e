"""Separate, parallel-mixed, serial-naive and serial-replay training.

Every paradigm is built from the same primitive, ``train_stage``: start from
given parameters, run a fixed number of momentum-SGD steps on uniformly
mixed batches of some task pools. The batch stream of stage ``i`` is keyed by
``(seed, "stage", i)``, so with a single task all four paradigms run the very
same computation and end with bit-identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from ..dataset_io import TaskTag
from ..metrics import MetricSet, evaluate_boxes
from ..rng import Xoshiro256, derive_seed
from .data import TaskDataset
from .model import MAX_BRANCH_DEPTH, NumericFailure, ToyModel, sgd_step


@dataclass(frozen=True)
class TrainConfig:
    steps_per_stage: int = 2000
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    branch_depth: int = 3

    def __post_init__(self) -> None:
        if self.steps_per_stage < 1 or self.batch_size < 1:
            raise ValueError("steps_per_stage and batch_size must be positive")
        if not (self.lr > 0 and 0 <= self.momentum < 1):
            raise ValueError("lr must be positive and momentum in [0, 1)")
        if not 1 <= self.branch_depth <= MAX_BRANCH_DEPTH:
            raise ValueError(f"branch_depth must be in 1..{MAX_BRANCH_DEPTH}")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    tasks: tuple[TaskTag, ...]
    theta: np.ndarray
    final_loss: float = math.nan

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def label(self) -> str:
        return "+".join(t.value for t in self.tasks)


@dataclass(frozen=True)
class CheckpointChain:
    branch_depth: int
    checkpoints: tuple[Checkpoint, ...]

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def model(self, index: int = -1) -> ToyModel:
        return ToyModel(self.branch_depth, self.checkpoints[index].theta)

    def __len__(self) -> int:
        return len(self.checkpoints)


@dataclass
class ReplayBuffer:
    """Retained subsets of previously seen tasks."""

    replay_fraction: float = 1.0
    seed: int = 0
    pools: dict[TaskTag, TaskDataset] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 < self.replay_fraction <= 1.0):
            raise ValueError("replay_fraction must be in (0, 1]")

    def retain(self, dataset: TaskDataset) -> None:
        n = len(dataset)
        keep = max(1, math.ceil(self.replay_fraction * n))
        if keep >= n:
            self.pools[dataset.task] = dataset
            return
        perm = Xoshiro256.stream(self.seed, "replay", dataset.task.value).permutation(n)
        self.pools[dataset.task] = dataset.subset(np.sort(perm[:keep]))

    def datasets(self) -> list[TaskDataset]:
        return list(self.pools.values())


@dataclass(frozen=True, eq=False)
class Batch:
    r: np.ndarray
    m: np.ndarray
    target: np.ndarray
    task_index: np.ndarray


def mix_batch_sampler(datasets: Sequence[TaskDataset], batch_size: int, seed: int) -> Iterator[Batch]:
    """Endless batches drawn uniformly from the pooled samples of ``datasets``.

    The pool is reshuffled every epoch and batches run across epoch
    boundaries, so each task's share of a batch is proportional to its
    pool size.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    r = np.concatenate([d.r for d in datasets])
    m = np.concatenate([d.m for d in datasets])
    target = np.concatenate([d.target_params for d in datasets])
    owner = np.concatenate([np.full(len(d), i) for i, d in enumerate(datasets)])
    rng = Xoshiro256(seed)
    n = len(r)
    order = rng.permutation(n)
    pos = 0
    while True:
        idx = np.empty(batch_size, dtype=np.int64)
        filled = 0
        while filled < batch_size:
            if pos == n:
                order, pos = rng.permutation(n), 0
            take = min(batch_size - filled, n - pos)
            idx[filled : filled + take] = order[pos : pos + take]
            filled += take
            pos += take
        yield Batch(r[idx], m[idx], target[idx], owner[idx])


def initial_model(cfg: TrainConfig) -> ToyModel:
    return ToyModel.initialized(cfg.branch_depth, Xoshiro256.stream(cfg.seed, "init"))


@dataclass
class StageTrace:
    losses: list[float] = field(default_factory=list)


def train_stage(
    model: ToyModel,
    datasets: Sequence[TaskDataset],
    steps: int,
    cfg: TrainConfig,
    stage: int,
    trace: StageTrace | None = None,
) -> ToyModel:
    """Run ``steps`` momentum-SGD steps from ``model``; returns a new model."""
    sampler = mix_batch_sampler(datasets, cfg.batch_size, derive_seed(cfg.seed, "stage", stage, "batches"))
    theta = model.theta.copy()
    velocity = np.zeros_like(theta)
    work = model.with_theta(theta)
    for _ in range(steps):
        batch = next(sampler)
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught just below
            value, grad = work.loss_and_grad(batch.r, batch.m, batch.target)
        if not math.isfinite(value):
            raise NumericFailure("numeric failure: non-finite loss")
        theta, velocity = sgd_step(theta, grad, cfg.lr, cfg.momentum, velocity)
        work.theta = theta
        if trace is not None:
            trace.losses.append(value)
    return work.with_theta(theta)


def train_separate(dataset: TaskDataset, cfg: TrainConfig, trace: StageTrace | None = None) -> ToyModel:
    """A model trained on one task only."""
    return train_stage(initial_model(cfg), [dataset], cfg.steps_per_stage, cfg, stage=0, trace=trace)


def train_parallel_mixed(datasets: Sequence[TaskDataset], cfg: TrainConfig, trace: StageTrace | None = None) -> ToyModel:
    """One stage on the disordered mixture of all tasks.

    Runs ``steps_per_stage * n`` steps, the same budget as a full serial chain.
    """
    steps = cfg.steps_per_stage * len(datasets)
    return train_stage(initial_model(cfg), list(datasets), steps, cfg, stage=0, trace=trace)


def _check_order(order: Sequence[TaskTag], datasets: Mapping[TaskTag, TaskDataset]) -> None:
    if not order:
        raise ValueError("task order must be non-empty")
    if len(set(order)) != len(order):
        raise ValueError(f"task order has repeats: {'+'.join(t.value for t in order)}")
    missing = [t.value for t in order if t not in datasets]
    if missing:
        raise ValueError(f"no training data for task(s) {', '.join(missing)}")


def train_serial_replay(
    order: Sequence[TaskTag],
    datasets: Mapping[TaskTag, TaskDataset],
    cfg: TrainConfig,
    replay_fraction: float = 1.0,
) -> CheckpointChain:
    """Stage i starts from checkpoint i-1 and trains on task i plus replayed earlier tasks."""
    _check_order(order, datasets)
    buffer = ReplayBuffer(replay_fraction, cfg.seed)
    model = initial_model(cfg)
    checkpoints = []
    for i, task in enumerate(order):
        trace = StageTrace()
        pools = buffer.datasets() + [datasets[task]]
        model = train_stage(model, pools, cfg.steps_per_stage, cfg, stage=i, trace=trace)
        checkpoints.append(Checkpoint(tuple(order[: i + 1]), model.theta, trace.losses[-1]))
        buffer.retain(datasets[task])
    return CheckpointChain(cfg.branch_depth, tuple(checkpoints))


def train_serial_naive(
    order: Sequence[TaskTag],
    datasets: Mapping[TaskTag, TaskDataset],
    cfg: TrainConfig,
) -> CheckpointChain:
    """Stage i starts from checkpoint i-1 and sees task i only (no replay)."""
    _check_order(order, datasets)
    model = initial_model(cfg)
    checkpoints = []
    for i, task in enumerate(order):
        trace = StageTrace()
        model = train_stage(model, [datasets[task]], cfg.steps_per_stage, cfg, stage=i, trace=trace)
        checkpoints.append(Checkpoint(tuple(order[: i + 1]), model.theta, trace.losses[-1]))
    return CheckpointChain(cfg.branch_depth, tuple(checkpoints))


def evaluate_task(model: ToyModel, eval_set: TaskDataset) -> MetricSet:
    """Score predicted boxes against the eval set's ground truth."""
    return evaluate_boxes(model.predict_boxes(eval_set.r, eval_set.m), eval_set.targets)
