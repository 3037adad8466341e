"""Experiment orchestration over the toy lab, plus CSV / plot-data reports.

Every experiment takes task *templates* (``TaskSpec`` mappings whose data
seeds are re-derived from the run seed, see ``reseed``) and a ``TrainConfig``,
and is a pure function of those. Independent runs can be spread over worker
processes with ``jobs > 1``; results never depend on ``jobs``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np
from scipy.stats import spearmanr

from .dataset_io import TASK_ORDER, DataError, TaskTag, atomic_write_text, format_float
from .lab.data import TaskDataset, TaskSpec, default_specs, gen_task, reseed
from .lab.model import MAX_BRANCH_DEPTH, ToyModel
from .lab.training import (
    CheckpointChain,
    StageTrace,
    TrainConfig,
    evaluate_task,
    train_parallel_mixed,
    train_separate,
    train_serial_naive,
    train_serial_replay,
)
from .metrics import MetricSet

METRICS = ("pr", "npr", "sr")
PARADIGMS = ("separate", "parallel", "serial-naive", "serial-replay")

T = TypeVar("T")
R = TypeVar("R")


def _pmap(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def order_key(order: Sequence[TaskTag]) -> str:
    return "+".join(t.value for t in order)


def parse_order(text: str) -> tuple[TaskTag, ...]:
    """``"T,D,E"`` or ``"T+D+E"`` -> (T, D, E); repeats are rejected."""
    tokens = [tok.strip() for tok in text.replace("+", ",").split(",")]
    order = tuple(TaskTag.parse(tok) for tok in tokens)
    if len(set(order)) != len(order):
        raise DataError(f"task order {text!r} repeats a task")
    return order


# -- degradation ------------------------------------------------------------


def _scalar(result: MetricSet | Mapping[str, float], metric: str) -> float:
    return float(result[metric] if isinstance(result, Mapping) else getattr(result, metric))


@dataclass(frozen=True)
class DegradationEntry:
    task: TaskTag
    metric: str
    separate: float
    unified: float
    delta: float  # (unified - separate) in points


@dataclass(frozen=True)
class DegradationReport:
    entries: tuple[DegradationEntry, ...]

    @property
    def tasks(self) -> tuple[TaskTag, ...]:
        return tuple(dict.fromkeys(e.task for e in self.entries))

    def delta(self, task: TaskTag, metric: str) -> float:
        for e in self.entries:
            if e.task == task and e.metric == metric:
                return e.delta
        raise KeyError((task, metric))

    @property
    def task_means(self) -> dict[TaskTag, float]:
        out = {}
        for t in self.tasks:
            deltas = [e.delta for e in self.entries if e.task == t]
            out[t] = math.fsum(deltas) / len(deltas)
        return out

    @property
    def mean(self) -> float:
        return math.fsum(e.delta for e in self.entries) / len(self.entries)


def degradation(
    separate: Mapping[TaskTag, MetricSet | Mapping[str, float]],
    unified: Mapping[TaskTag, MetricSet | Mapping[str, float]],
    metrics: Sequence[str] = METRICS,
) -> DegradationReport:
    """Per-task, per-metric change of a unified model vs separate models, in points.

    ``metrics`` names the scores compared, e.g. ``("lt_precision",
    "lt_recall", "f_score")`` for long-term results.
    """
    if set(separate) != set(unified):
        missing = sorted(t.value for t in set(separate) ^ set(unified))
        raise DataError(f"task keys differ between separate and unified results: {', '.join(missing)}")
    if not separate:
        raise DataError("no tasks to compare")
    if not metrics:
        raise DataError("no metrics to compare")
    entries = []
    for task in sorted(separate, key=TASK_ORDER.index):
        for metric in metrics:
            s, u = _scalar(separate[task], metric), _scalar(unified[task], metric)
            entries.append(DegradationEntry(task, metric, s, u, (u - s) * 100.0))
    return DegradationReport(tuple(entries))


# -- run records ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StageRecord:
    tasks: tuple[TaskTag, ...]
    theta: np.ndarray
    final_loss: float
    metrics: dict[TaskTag, dict[str, float]]

    @property
    def label(self) -> str:
        return order_key(self.tasks)

    def to_json(self) -> dict:
        return {
            "tasks": self.label,
            "final_loss": self.final_loss,
            "metrics": {t.value: dict(m) for t, m in self.metrics.items()},
            "theta": [float(v) for v in self.theta],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> StageRecord:
        return cls(
            parse_order(doc["tasks"]),
            np.array(doc["theta"], dtype=np.float64),
            float(doc["final_loss"]),
            {TaskTag.parse(t): {k: float(v) for k, v in m.items()} for t, m in doc["metrics"].items()},
        )


@dataclass(frozen=True, eq=False)
class RunRecord:
    """One training run: its configuration and a snapshot plus scores per stage."""

    key: str
    paradigm: str
    config: dict
    stages: tuple[StageRecord, ...]

    def to_json(self) -> dict:
        return {
            "key": self.key,
            "paradigm": self.paradigm,
            "config": self.config,
            "stages": [s.to_json() for s in self.stages],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_json(), indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> RunRecord:
        return cls(doc["key"], doc["paradigm"], doc["config"], tuple(StageRecord.from_json(s) for s in doc["stages"]))

    @classmethod
    def from_text(cls, text: str) -> RunRecord:
        return cls.from_json(json.loads(text))

    @property
    def final(self) -> StageRecord:
        return self.stages[-1]

    def model(self, index: int = -1) -> ToyModel:
        return ToyModel(int(self.config["train"]["branch_depth"]), self.stages[index].theta)


def build_datasets(specs: Mapping[TaskTag, TaskSpec]) -> tuple[dict[TaskTag, TaskDataset], dict[TaskTag, TaskDataset]]:
    train = {t: gen_task(s, "train") for t, s in specs.items()}
    evals = {t: gen_task(s, "eval") for t, s in specs.items()}
    return train, evals


def _scores(model: ToyModel, evals: Mapping[TaskTag, TaskDataset], tasks: Iterable[TaskTag]) -> dict[TaskTag, dict[str, float]]:
    out = {}
    for t in tasks:
        m = evaluate_task(model, evals[t])
        out[t] = {k: float(getattr(m, k)) for k in METRICS}
    return out


def config_doc(cfg: TrainConfig, templates: Mapping[TaskTag, TaskSpec], replay_fraction: float = 1.0) -> dict:
    """The JSON-able configuration embedded in every run record."""
    return {
        "train": {
            "steps_per_stage": cfg.steps_per_stage,
            "batch_size": cfg.batch_size,
            "lr": cfg.lr,
            "momentum": cfg.momentum,
            "seed": cfg.seed,
            "branch_depth": cfg.branch_depth,
        },
        "tasks": [
            {"task": t.value, "modality_mean": list(s.modality_mean), "n_train": s.n_train, "n_eval": s.n_eval}
            for t, s in templates.items()
        ],
        "replay_fraction": replay_fraction,
    }


def _chain_stages(chain: CheckpointChain, evals, eval_tasks) -> tuple[StageRecord, ...]:
    return tuple(
        StageRecord(cp.tasks, cp.theta, cp.final_loss, _scores(chain.model(i), evals, eval_tasks))
        for i, cp in enumerate(chain.checkpoints)
    )


def run_training(
    paradigm: str,
    order: Sequence[TaskTag],
    cfg: TrainConfig,
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    replay_fraction: float = 1.0,
    eval_tasks: Sequence[TaskTag] | None = None,
) -> RunRecord:
    """Train one paradigm and score every stage on ``eval_tasks`` (default: ``order``).

    ``separate`` trains an independent model per task in ``order`` (one stage
    each); ``parallel`` is a single stage over the mixture of ``order``'s tasks.
    """
    if paradigm not in PARADIGMS:
        raise DataError(f"unknown paradigm {paradigm!r} (expected one of {', '.join(PARADIGMS)})")
    order = tuple(order)
    if not order or len(set(order)) != len(order):
        raise DataError("task order must be non-empty without repeats")
    templates = dict(templates) if templates is not None else default_specs()
    missing = [t.value for t in order if t not in templates]
    if missing:
        raise DataError(f"no task definition for {', '.join(missing)}")
    eval_tasks = tuple(eval_tasks) if eval_tasks is not None else order
    train, evals = build_datasets(reseed({t: templates[t] for t in dict.fromkeys(order + eval_tasks)}, cfg.seed))

    if paradigm == "separate":
        stages = []
        for t in order:
            model, final_loss = _separate_with_loss(train[t], cfg)
            stages.append(StageRecord((t,), model.theta, final_loss, _scores(model, evals, eval_tasks)))
        stages = tuple(stages)
    elif paradigm == "parallel":
        model, final_loss = _parallel_with_loss([train[t] for t in order], cfg)
        stages = (StageRecord(order, model.theta, final_loss, _scores(model, evals, eval_tasks)),)
    elif paradigm == "serial-naive":
        stages = _chain_stages(train_serial_naive(order, train, cfg), evals, eval_tasks)
    else:
        stages = _chain_stages(train_serial_replay(order, train, cfg, replay_fraction), evals, eval_tasks)
    return RunRecord(order_key(order), paradigm, config_doc(cfg, templates, replay_fraction), stages)


def _separate_with_loss(dataset: TaskDataset, cfg: TrainConfig) -> tuple[ToyModel, float]:
    trace = StageTrace()
    model = train_separate(dataset, cfg, trace)
    return model, trace.losses[-1]


def _parallel_with_loss(datasets: list[TaskDataset], cfg: TrainConfig) -> tuple[ToyModel, float]:
    trace = StageTrace()
    model = train_parallel_mixed(datasets, cfg, trace)
    return model, trace.losses[-1]


# -- permutations -----------------------------------------------------------


@dataclass(frozen=True)
class PermutationPlan:
    """Every non-empty task chain without repetition: 3 + 6 + 6 = 15 for T, D, E."""

    variants: tuple[tuple[TaskTag, ...], ...]

    @classmethod
    def over(cls, tasks: Sequence[TaskTag] = TASK_ORDER) -> PermutationPlan:
        tasks = tuple(tasks)
        return cls(tuple(p for k in range(1, len(tasks) + 1) for p in itertools.permutations(tasks, k)))

    @property
    def keys(self) -> list[str]:
        return [order_key(v) for v in self.variants]

    def __len__(self) -> int:
        return len(self.variants)


def _full_chain(args: tuple) -> RunRecord:
    order, cfg, templates, replay_fraction, tasks = args
    return run_training("serial-replay", order, cfg, templates, replay_fraction, eval_tasks=tasks)


def run_permutations(
    cfg: TrainConfig,
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    replay_fraction: float = 1.0,
    jobs: int = 1,
) -> dict[str, RunRecord]:
    """Serial-replay chains for all 15 variants, keyed like ``"T+D"``.

    Stage ``i`` of a chain depends only on the first ``i + 1`` tasks, so only
    the full-length orders are trained; shorter variants are their prefixes.
    Every stage is scored on every task.
    """
    templates = dict(templates) if templates is not None else default_specs()
    tasks = tuple(t for t in TASK_ORDER if t in templates)
    if len(tasks) != 3:
        raise DataError("the permutation study needs exactly the three tasks T, D, E")
    plan = PermutationPlan.over(tasks)
    full = [v for v in plan.variants if len(v) == len(tasks)]
    chains = dict(zip(full, _pmap(_full_chain, [(v, cfg, templates, replay_fraction, tasks) for v in full], jobs)))
    records = {}
    for variant in plan.variants:
        source = next(chains[f] for f in full if f[: len(variant)] == variant)
        records[order_key(variant)] = RunRecord(order_key(variant), source.paradigm, source.config, source.stages[: len(variant)])
    return records


# -- paired separate / unified runs ------------------------------------------


@dataclass(frozen=True)
class PairedRun:
    """Separate models, their cross-task scores, and a parallel-mixed model for one seed."""

    seed: int
    branch_depth: int
    cross: dict[tuple[TaskTag, TaskTag], dict[str, float]]  # (train task, eval task) -> scores
    unified: dict[TaskTag, dict[str, float]]

    @property
    def separate(self) -> dict[TaskTag, dict[str, float]]:
        return {b: self.cross[(a, b)] for (a, b) in self.cross if a == b}

    @property
    def degradation(self) -> DegradationReport:
        return degradation(self.separate, self.unified)


def paired_run(cfg: TrainConfig, templates: Mapping[TaskTag, TaskSpec] | None = None, with_unified: bool = True) -> PairedRun:
    templates = dict(templates) if templates is not None else default_specs()
    tasks = tuple(t for t in TASK_ORDER if t in templates)
    train, evals = build_datasets(reseed(templates, cfg.seed))
    cross = {}
    for a in tasks:
        model = train_separate(train[a], cfg)
        for b, scores in _scores(model, evals, tasks).items():
            cross[(a, b)] = scores
    unified = {}
    if with_unified:
        unified = _scores(train_parallel_mixed([train[t] for t in tasks], cfg), evals, tasks)
    return PairedRun(cfg.seed, cfg.branch_depth, cross, unified)


def _paired_job(args: tuple) -> PairedRun:
    cfg, templates, with_unified = args
    return paired_run(cfg, templates, with_unified)


# -- capacity sweep ---------------------------------------------------------


@dataclass(frozen=True)
class CapacityRow:
    depth: int
    mean_degradation: float  # seed-averaged mean over tasks and metrics, points
    per_seed: tuple[float, ...]
    task_means: dict[TaskTag, float]


@dataclass(frozen=True)
class CapacitySweepResult:
    rows: tuple[CapacityRow, ...]  # depths strictly descending
    seeds: tuple[int, ...]

    @property
    def depths(self) -> list[int]:
        return [r.depth for r in self.rows]

    @property
    def means(self) -> list[float]:
        return [r.mean_degradation for r in self.rows]

    def depth_trend(self) -> float:
        """Spearman rank correlation between depth and signed mean degradation.

        Degradations are negative, so a value near +1 means shallower branches
        lose more when tasks are unified.
        """
        if len(self.rows) < 2:
            raise ValueError("need at least two depths for a trend")
        return float(spearmanr(self.depths, self.means).statistic)


def capacity_sweep(
    depths: Iterable[int],
    cfg: TrainConfig,
    seeds: Iterable[int] = range(10),
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    jobs: int = 1,
) -> CapacitySweepResult:
    """Parallel-mixed vs separate degradation per branch depth, averaged over seeds."""
    depths = sorted(set(depths), reverse=True)
    seeds = tuple(seeds)
    if not depths or any(not 1 <= d <= MAX_BRANCH_DEPTH for d in depths):
        raise DataError(f"depths must be a non-empty subset of 1..{MAX_BRANCH_DEPTH}")
    if not seeds:
        raise DataError("need at least one seed")
    templates = dict(templates) if templates is not None else default_specs()
    units = [(replace(cfg, seed=s, branch_depth=d), templates, True) for d in depths for s in seeds]
    runs = _pmap(_paired_job, units, jobs)
    rows = []
    for i, d in enumerate(depths):
        reports = [r.degradation for r in runs[i * len(seeds) : (i + 1) * len(seeds)]]
        per_seed = tuple(rep.mean for rep in reports)
        tasks = reports[0].tasks
        task_means = {t: math.fsum(rep.task_means[t] for rep in reports) / len(reports) for t in tasks}
        rows.append(CapacityRow(d, math.fsum(per_seed) / len(per_seed), per_seed, task_means))
    return CapacitySweepResult(tuple(rows), seeds)


# -- cross validation and modality distances -------------------------------


@dataclass(frozen=True)
class CrossValMatrix:
    tasks: tuple[TaskTag, ...]
    values: dict[tuple[TaskTag, TaskTag], dict[str, float]]  # (train task, eval task) -> scores

    def value(self, train: TaskTag, evaluate: TaskTag, metric: str = "sr") -> float:
        return self.values[(train, evaluate)][metric]

    def matrix(self, metric: str = "sr") -> np.ndarray:
        return np.array([[self.value(a, b, metric) for b in self.tasks] for a in self.tasks])

    def drop(self, train: TaskTag, evaluate: TaskTag, metric: str = "sr") -> float:
        """How much worse ``train``'s model is on ``evaluate`` than that task's own model."""
        return self.value(evaluate, evaluate, metric) - self.value(train, evaluate, metric)


def cross_validate(cfg: TrainConfig, templates: Mapping[TaskTag, TaskSpec] | None = None) -> CrossValMatrix:
    """Evaluate each task's separate model on every task's eval set."""
    run = paired_run(cfg, templates, with_unified=False)
    tasks = tuple(dict.fromkeys(a for a, _ in run.cross))
    return CrossValMatrix(tasks, run.cross)


@dataclass(frozen=True)
class ModalityDistanceReport:
    c1: float  # D <-> E
    c2: float  # T <-> E
    c3: float  # T <-> D

    def between(self, a: TaskTag, b: TaskTag) -> float:
        if a == b:
            return 0.0
        pair = frozenset((a, b))
        return {
            frozenset((TaskTag.D, TaskTag.E)): self.c1,
            frozenset((TaskTag.T, TaskTag.E)): self.c2,
            frozenset((TaskTag.T, TaskTag.D)): self.c3,
        }[pair]


def modality_distances(specs: Mapping[TaskTag, TaskSpec] | Sequence[TaskSpec]) -> ModalityDistanceReport:
    """Euclidean distances between the tasks' modality centroids."""
    by_task = dict(specs) if isinstance(specs, Mapping) else {s.task: s for s in specs}
    missing = [t.value for t in TASK_ORDER if t not in by_task]
    if missing or len(by_task) != 3:
        raise DataError(f"need exactly the tasks T, D, E (missing: {', '.join(missing) or 'none'})")
    mu = {t: np.asarray(s.modality_mean, dtype=np.float64) for t, s in by_task.items()}
    if len({v.shape for v in mu.values()}) != 1:
        raise DataError("modality centroids have different dimensions")

    def dist(a: TaskTag, b: TaskTag) -> float:
        return math.sqrt(math.fsum(float(x) ** 2 for x in mu[a] - mu[b]))

    return ModalityDistanceReport(dist(TaskTag.D, TaskTag.E), dist(TaskTag.T, TaskTag.E), dist(TaskTag.T, TaskTag.D))


def drops_follow_distances(xv: CrossValMatrix, distances: ModalityDistanceReport, metric: str = "sr") -> bool:
    """For every eval task, farther training tasks must lose strictly more.

    Pairs of training tasks at equal distance impose no constraint.
    """
    for b in xv.tasks:
        others = [a for a in xv.tasks if a != b]
        for a1, a2 in itertools.combinations(others, 2):
            d1, d2 = distances.between(a1, b), distances.between(a2, b)
            if d1 == d2:
                continue
            near, far = (a1, a2) if d1 < d2 else (a2, a1)
            if not xv.drop(far, b, metric) > xv.drop(near, b, metric):
                return False
    return True


def _crossval_job(args: tuple) -> CrossValMatrix:
    cfg, templates = args
    return cross_validate(cfg, templates)


def crossval_study(
    cfg: TrainConfig,
    seeds: Iterable[int] = range(10),
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    jobs: int = 1,
) -> list[CrossValMatrix]:
    """``cross_validate`` for each seed, in seed order."""
    return _pmap(_crossval_job, [(replace(cfg, seed=s), templates) for s in seeds], jobs)


# -- forgetting -------------------------------------------------------------


def previous_task_sr(
    cfg: TrainConfig,
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    order: Sequence[TaskTag] = TASK_ORDER,
    replay_fraction: float = 1.0,
) -> dict[str, float]:
    """Mean SR on all but the last task of ``order`` after training on every task.

    Compares the final serial-replay and serial-naive checkpoints with a
    parallel-mixed model trained on the same tasks.
    """
    order = tuple(order)
    if len(order) < 2:
        raise DataError("forgetting needs at least two tasks")
    templates = dict(templates) if templates is not None else default_specs()
    train, evals = build_datasets(reseed({t: templates[t] for t in order}, cfg.seed))
    models = {
        "serial-replay": train_serial_replay(order, train, cfg, replay_fraction).model(),
        "parallel": train_parallel_mixed([train[t] for t in order], cfg),
        "serial-naive": train_serial_naive(order, train, cfg).model(),
    }
    previous = order[:-1]
    return {
        name: math.fsum(evaluate_task(model, evals[t]).sr for t in previous) / len(previous)
        for name, model in models.items()
    }


def _forgetting_job(args: tuple) -> dict[str, float]:
    cfg, templates, order, fraction = args
    return previous_task_sr(cfg, templates, order, fraction)


def forgetting_study(
    cfg: TrainConfig,
    seeds: Iterable[int] = range(10),
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    order: Sequence[TaskTag] = TASK_ORDER,
    replay_fraction: float = 1.0,
    jobs: int = 1,
) -> list[dict[str, float]]:
    """``previous_task_sr`` for each seed, in seed order."""
    return _pmap(_forgetting_job, [(replace(cfg, seed=s), templates, tuple(order), replay_fraction) for s in seeds], jobs)


def paired_study(
    cfg: TrainConfig,
    seeds: Iterable[int] = range(10),
    templates: Mapping[TaskTag, TaskSpec] | None = None,
    jobs: int = 1,
) -> list[PairedRun]:
    """``paired_run`` for each seed, in seed order."""
    return _pmap(_paired_job, [(replace(cfg, seed=s), templates, True) for s in seeds], jobs)


# -- reports ----------------------------------------------------------------

REPORT_COLUMNS = ("run", "paradigm", "seed", "branch_depth", "stage", "stage_tasks", "eval_task", "pr", "npr", "sr", "final_loss")


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def table_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match header")
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def plot_data_text(xs: Sequence[float], ys: Sequence[float]) -> str:
    """Two whitespace-separated numeric columns, one point per line."""
    return "".join(f"{_cell(x)} {_cell(float(y))}\n" for x, y in zip(xs, ys, strict=True))


def write_table(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    atomic_write_text(path, table_text(header, rows))
    return Path(path)


def write_plot_data(path: str | os.PathLike, xs: Sequence[float], ys: Sequence[float]) -> Path:
    atomic_write_text(path, plot_data_text(xs, ys))
    return Path(path)


def report_rows(records: Sequence[RunRecord]) -> list[list[Any]]:
    rows = []
    for rec in records:
        train = rec.config["train"]
        for i, stage in enumerate(rec.stages):
            for task, scores in stage.metrics.items():
                rows.append(
                    [rec.key, rec.paradigm, train["seed"], train["branch_depth"], i, stage.label, task.value]
                    + [scores[m] for m in METRICS]
                    + [stage.final_loss]
                )
    return rows


def emit_report(records: Sequence[RunRecord], path: str | os.PathLike) -> list[Path]:
    """Write a summary CSV at ``path`` and one plot-data file per eval task.

    CSV columns are ``REPORT_COLUMNS``: one row per (run, stage, eval task), in
    record order. ``<stem>.sr_<task>.dat`` holds ``run_index final_sr`` pairs,
    i.e. the bar heights of a per-variant SR chart.
    """
    records = list(records)
    if not records:
        raise DataError("no run records to report")
    path = Path(path)
    written = [write_table(path, REPORT_COLUMNS, report_rows(records))]
    tasks = list(dict.fromkeys(t for rec in records for t in rec.final.metrics))
    for task in tasks:
        xs = [i for i, rec in enumerate(records) if task in rec.final.metrics]
        ys = [records[i].final.metrics[task]["sr"] for i in xs]
        written.append(write_plot_data(path.with_name(f"{path.stem}.sr_{task.value}.dat"), xs, ys))
    return written


def read_table(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_report(path: str | os.PathLike) -> list[dict[str, Any]]:
    """Parse a summary CSV back, restoring numeric columns."""
    out = []
    for row in read_table(path):
        parsed: dict[str, Any] = dict(row)
        for key in ("seed", "branch_depth", "stage"):
            parsed[key] = int(row[key])
        for key in METRICS + ("final_loss",):
            parsed[key] = float(row[key])
        out.append(parsed)
    return out


def degradation_rows(report: DegradationReport) -> tuple[tuple[str, ...], list[list[Any]]]:
    header = ("task", "metric", "separate", "unified", "delta_points")
    return header, [[e.task.value, e.metric, e.separate, e.unified, e.delta] for e in report.entries]


def capacity_rows(result: CapacitySweepResult) -> tuple[tuple[str, ...], list[list[Any]]]:
    tasks = list(result.rows[0].task_means)
    header = ("depth", "mean_degradation", *(f"degradation_{t.value}" for t in tasks), "n_seeds")
    rows = [[r.depth, r.mean_degradation, *(r.task_means[t] for t in tasks), len(r.per_seed)] for r in result.rows]
    return header, rows


def crossval_rows(xv: CrossValMatrix) -> tuple[tuple[str, ...], list[list[Any]]]:
    header = ("train_task", "eval_task", *METRICS, "sr_drop")
    rows = [
        [a.value, b.value, *(xv.value(a, b, m) for m in METRICS), xv.drop(a, b)]
        for a in xv.tasks
        for b in xv.tasks
    ]
    return header, rows


def distance_rows(report: ModalityDistanceReport) -> tuple[tuple[str, ...], list[list[Any]]]:
    return ("c1_DE", "c2_TE", "c3_TD"), [[report.c1, report.c2, report.c3]]
