"""Synthetic multi-modal tasks.

Each sample has a shared feature vector ``r ~ N(0, I)`` and a modality
feature vector ``m ~ N(mu_k, I)``. Its raw box parameters are

    target = shared_map(r) + task_map(mu_k) @ (m - mu_k)

where ``task_map(mu) = A0 @ expm(ROTATION_RATE * sum_j mu_j G_j)`` with fixed
skew-symmetric generators ``G_j``. The rotation keeps every task's target
distribution identical, while tasks whose centroids are far apart disagree
more on how modality features move the box. That disagreement is what
makes a shared model degrade unevenly across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from ..dataset_io import TaskTag
from ..rng import Xoshiro256, derive_seed
from .model import FEATURE_DIM, N_BOX_PARAMS, squash

WORLD_SEED = 0x5EED_0F_3A7A
SHARED_GAIN = 0.35
BASE_GAIN = 0.45
ROTATION_RATE = 0.15  # radians per unit of centroid distance

DEFAULT_CENTROIDS = {TaskTag.D: 0.0, TaskTag.E: 1.0, TaskTag.T: 3.0}  # along e1


@dataclass(frozen=True)
class TaskSpec:
    task: TaskTag
    modality_mean: tuple[float, ...]
    n_train: int = 1000
    n_eval: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.modality_mean) != FEATURE_DIM:
            raise ValueError(f"modality_mean must have {FEATURE_DIM} entries")
        if self.n_train < 1 or self.n_eval < 1:
            raise ValueError("n_train and n_eval must be positive")


@dataclass(frozen=True, eq=False)
class TaskDataset:
    task: TaskTag
    r: np.ndarray
    m: np.ndarray
    target_params: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.r) == len(self.m) == len(self.target_params)):
            raise ValueError("inputs and targets must have the same length")

    def __len__(self) -> int:
        return len(self.r)

    @property
    def targets(self) -> np.ndarray:
        """Ground-truth boxes (x, y, w, h) inside the 100x100 frame."""
        return squash(self.target_params)

    def subset(self, indices: np.ndarray) -> TaskDataset:
        return TaskDataset(self.task, self.r[indices], self.m[indices], self.target_params[indices])


def centroid(offset: float) -> tuple[float, ...]:
    return (float(offset),) + (0.0,) * (FEATURE_DIM - 1)


def default_specs(seed: int = 0, n_train: int = 1000, n_eval: int = 2000) -> dict[TaskTag, TaskSpec]:
    """The default T/D/E tasks with collinear centroids at 3, 0 and 1 along e1."""
    return {
        tag: TaskSpec(tag, centroid(DEFAULT_CENTROIDS[tag]), n_train, n_eval, derive_seed(seed, "task", tag.value))
        for tag in (TaskTag.T, TaskTag.D, TaskTag.E)
    }


def reseed(specs: Mapping[TaskTag, TaskSpec], seed: int) -> dict[TaskTag, TaskSpec]:
    """Copies of ``specs`` whose data seeds derive from the run seed ``seed``."""
    return {tag: replace(spec, seed=derive_seed(seed, "task", tag.value)) for tag, spec in specs.items()}


@lru_cache(maxsize=1)
def world() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed maps shared by every task: ``(shared, base, per_axis)``."""
    rng = Xoshiro256.stream(WORLD_SEED, "world")
    shared = rng.normals((FEATURE_DIM, N_BOX_PARAMS)) * (SHARED_GAIN / np.sqrt(FEATURE_DIM))
    base = rng.normals((N_BOX_PARAMS, FEATURE_DIM)) * (BASE_GAIN / np.sqrt(FEATURE_DIM))
    raw = rng.normals((FEATURE_DIM, FEATURE_DIM, FEATURE_DIM))
    generators = (raw - raw.transpose(0, 2, 1)) / 2.0
    # unit spectral norm, so ROTATION_RATE is the largest rotation angle per unit distance
    generators /= np.abs(np.linalg.eigvals(generators)).max(axis=1)[:, None, None]
    return shared, base, generators


def task_map(modality_mean: tuple[float, ...] | np.ndarray) -> np.ndarray:
    _, base, generators = world()
    mu = np.asarray(modality_mean, dtype=np.float64)
    return base @ expm(ROTATION_RATE * np.tensordot(mu, generators, axes=1))


def target_params(r: np.ndarray, m: np.ndarray, modality_mean: tuple[float, ...] | np.ndarray) -> np.ndarray:
    shared, _, _ = world()
    mu = np.asarray(modality_mean, dtype=np.float64)
    return np.tanh(r @ shared * 2.0) / 2.0 + (m - mu) @ task_map(mu).T


def gen_task(spec: TaskSpec, split: str = "train") -> TaskDataset:
    """Deterministic samples for one split ("train" or "eval") of a task."""
    if split not in ("train", "eval"):
        raise ValueError(f"unknown split {split!r}")
    n = spec.n_train if split == "train" else spec.n_eval
    rng = Xoshiro256.stream(spec.seed, "samples", split)
    r = rng.normals((n, FEATURE_DIM))
    mu = np.asarray(spec.modality_mean, dtype=np.float64)
    m = mu + rng.normals((n, FEATURE_DIM))
    return TaskDataset(spec.task, r, m, target_params(r, m, mu))
