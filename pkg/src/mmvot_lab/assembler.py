"""Hard-sequence benchmark assembly.

Sequences are ranked by how badly a set of reference trackers does on them
(mean IoU averaged over trackers, lower = harder) and the hardest
``per_task_quota`` of each task are kept. Tracker scores are input data;
nothing here runs a tracker.

Score CSV columns: ``sequence_id,task,source,tracker,mean_iou``, one row per
(sequence, tracker) pair.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset_io import (
    TASK_ORDER,
    BenchmarkManifest,
    DataError,
    SequenceManifest,
    TaskTag,
    write_manifest,
)

SCORE_HEADER = ("sequence_id", "task", "source", "tracker", "mean_iou")


@dataclass(frozen=True)
class SequenceScore:
    sequence_id: str
    task: TaskTag
    per_tracker_mean_iou: Mapping[str, float]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.sequence_id:
            raise DataError("sequence id must be non-empty")
        scores = dict(self.per_tracker_mean_iou)
        for tracker, value in scores.items():
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise DataError(f"{self.sequence_id}: mean IoU of {tracker!r} must be in [0, 1], got {value!r}")
        object.__setattr__(self, "per_tracker_mean_iou", scores)


@dataclass(frozen=True)
class AssemblyConfig:
    """Selection quotas.

    ``source_quotas`` splits a task's quota across its source benchmarks,
    e.g. ``{"DepthTrack": 50, "RGBD1K": 50}``. A task is split when any of
    its sequences come from a listed source, and the listed sources it uses
    must then add up to ``per_task_quota``.
    """

    per_task_quota: int = 100
    source_quotas: Mapping[str, int] | None = None
    name: str = "unified-benchmark"

    def __post_init__(self) -> None:
        if isinstance(self.per_task_quota, bool) or self.per_task_quota < 1:
            raise DataError(f"per-task quota must be a positive integer, got {self.per_task_quota!r}")
        if self.source_quotas is not None:
            quotas = dict(self.source_quotas)
            if not quotas:
                raise DataError("source_quotas must not be empty when given")
            for source, quota in quotas.items():
                if isinstance(quota, bool) or quota < 1:
                    raise DataError(f"quota for source {source!r} must be a positive integer")
            object.__setattr__(self, "source_quotas", quotas)


def difficulty(score: SequenceScore) -> float:
    """Mean over trackers of the sequence's mean IoU (lower = harder)."""
    values = list(score.per_tracker_mean_iou.values())
    if not values:
        raise DataError(f"{score.sequence_id}: no tracker scores")
    return math.fsum(values) / len(values)


def _exact_difficulty(score: SequenceScore) -> Fraction:
    # Ranking uses the exact rational mean so ordering never hinges on rounding.
    values = score.per_tracker_mean_iou.values()
    if not values:
        raise DataError(f"{score.sequence_id}: no tracker scores")
    return sum((Fraction(v) for v in values), Fraction(0)) / len(values)


def _hardest(pool: Sequence[SequenceScore], quota: int, what: str) -> list[SequenceScore]:
    if len(pool) < quota:
        raise DataError(f"{what}: need {quota} sequences, only {len(pool)} available")
    return sorted(pool, key=lambda s: (_exact_difficulty(s), s.sequence_id))[:quota]


def rank_and_select(
    scores: Iterable[SequenceScore],
    cfg: AssemblyConfig,
    catalog: Mapping[str, SequenceManifest] | None = None,
) -> BenchmarkManifest:
    """Keep the hardest ``cfg.per_task_quota`` sequences of every task present.

    Ties are broken by sequence id. The result is ordered by task (T, D, E),
    then difficulty, then id. ``catalog`` supplies frame counts and annotation
    paths; without it ``frame_count`` is left unknown and the annotation path
    defaults to ``<task>/<id>.txt``.
    """
    scores = list(scores)
    seen: set[str] = set()
    for s in scores:
        if s.sequence_id in seen:
            raise DataError(f"duplicate sequence id {s.sequence_id!r} in scores")
        seen.add(s.sequence_id)
    if not scores:
        raise DataError("no sequence scores given")

    by_task: dict[TaskTag, list[SequenceScore]] = defaultdict(list)
    for s in scores:
        by_task[s.task].append(s)

    selected: list[SequenceScore] = []
    for task in TASK_ORDER:
        pool = by_task.get(task)
        if not pool:
            continue
        quotas = cfg.source_quotas or {}
        used = sorted({s.source for s in pool} & set(quotas))
        if not used:
            selected += _hardest(pool, cfg.per_task_quota, f"task {task}")
            continue
        total = sum(quotas[src] for src in used)
        if total != cfg.per_task_quota:
            raise DataError(
                f"task {task}: source quotas ({', '.join(f'{s}={quotas[s]}' for s in used)}) "
                f"sum to {total}, expected {cfg.per_task_quota}"
            )
        for src in used:
            selected += _hardest([s for s in pool if s.source == src], quotas[src], f"task {task}, source {src}")

    rank = {t: i for i, t in enumerate(TASK_ORDER)}
    selected.sort(key=lambda s: (rank[s.task], _exact_difficulty(s), s.sequence_id))
    sequences = []
    for s in selected:
        entry = catalog.get(s.sequence_id) if catalog is not None else None
        if entry is not None:
            if entry.task != s.task:
                raise DataError(f"{s.sequence_id}: catalog says task {entry.task}, scores say {s.task}")
            sequences.append(SequenceManifest(s.sequence_id, s.task, entry.frame_count, entry.annotation_path, s.source or entry.source))
        else:
            sequences.append(SequenceManifest(s.sequence_id, s.task, None, f"{s.task.value}/{s.sequence_id}.txt", s.source))
    return BenchmarkManifest(cfg.name, tuple(sequences))


def emit_manifest(manifest: BenchmarkManifest, path: str | os.PathLike) -> None:
    """Write ``manifest`` as JSON (atomically); rejects empty or duplicate-id manifests."""
    ids = [s.id for s in manifest.sequences]
    if len(set(ids)) != len(ids):
        raise DataError("manifest has duplicate sequence ids")
    write_manifest(path, manifest)


# -- score tables -----------------------------------------------------------


@dataclass
class _Pending:
    task: TaskTag
    source: str
    trackers: dict[str, float] = field(default_factory=dict)


def parse_scores_text(text: str, where: str = "<scores>") -> list[SequenceScore]:
    """Parse a score CSV; sequences come back in first-appearance order."""
    if "\r" in text:
        raise DataError(f"{where}: carriage returns are not allowed (LF line endings only)")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SCORE_HEADER:
        raise DataError(f"{where}: header must be {','.join(SCORE_HEADER)}")
    pending: dict[str, _Pending] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        loc = f"{where}:{lineno}"
        if len(row) != len(SCORE_HEADER):
            raise DataError(f"{loc}: expected {len(SCORE_HEADER)} fields, got {len(row)}")
        seq_id, task_text, source, tracker, value_text = row
        if not seq_id or not tracker:
            raise DataError(f"{loc}: empty sequence id or tracker name")
        task = TaskTag.parse(task_text)
        try:
            value = float(value_text)
        except ValueError:
            raise DataError(f"{loc}: mean_iou {value_text!r} is not a number") from None
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            raise DataError(f"{loc}: mean_iou must be in [0, 1], got {value_text}")
        entry = pending.setdefault(seq_id, _Pending(task, source))
        if (entry.task, entry.source) != (task, source):
            raise DataError(f"{loc}: {seq_id!r} listed with conflicting task/source")
        if tracker in entry.trackers:
            raise DataError(f"{loc}: duplicate score for ({seq_id!r}, {tracker!r})")
        entry.trackers[tracker] = value
    return [SequenceScore(seq_id, e.task, e.trackers, e.source) for seq_id, e in pending.items()]


def load_scores(path: str | os.PathLike) -> list[SequenceScore]:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_scores_text(text, str(path))


def format_scores(scores: Iterable[SequenceScore]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCORE_HEADER)
    for s in scores:
        for tracker, value in s.per_tracker_mean_iou.items():
            writer.writerow([s.sequence_id, s.task.value, s.source, tracker, repr(float(value))])
    return buf.getvalue()
