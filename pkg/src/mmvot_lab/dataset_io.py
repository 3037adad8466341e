"""Annotation, result, and manifest files.

Annotation lines are ``frame_idx,x,y,w,h,visible`` and result lines are
``frame_idx,x,y,w,h[,confidence]``: UTF-8, LF line endings, no header, frame
indices contiguous from 0, ``nan`` in all four box fields for a missing box.
Numbers use a plain decimal grammar (no locale, no ``inf``, no underscores).
"""

from __future__ import annotations

import enum
import json
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .metrics import BBox, FrameAnnotation, FramePrediction


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class TaskTag(str, enum.Enum):
    """The auxiliary (X) modality paired with RGB."""

    T = "T"  # thermal infrared
    D = "D"  # depth
    E = "E"  # event

    @classmethod
    def parse(cls, token: str) -> TaskTag:
        try:
            return cls(token)
        except ValueError:
            raise DataError(f"unknown task tag {token!r} (expected one of T, D, E)") from None

    def __str__(self) -> str:
        return self.value


TASK_ORDER = (TaskTag.T, TaskTag.D, TaskTag.E)

_NUMBER = r"-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_FIELD = rf"(?:{_NUMBER}|nan)"
_ANNOTATION_RE = re.compile(rf"(\d+),({_FIELD}),({_FIELD}),({_FIELD}),({_FIELD}),([01])")
_RESULT_RE = re.compile(rf"(\d+),({_FIELD}),({_FIELD}),({_FIELD}),({_FIELD})(?:,({_NUMBER}))?")


def format_float(value: float) -> str:
    """Shortest string that parses back to exactly ``value``."""
    return repr(float(value))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lines(text: str, path: str) -> list[str]:
    if "\r" in text:
        raise DataError(f"{path}: carriage returns are not allowed (LF line endings only)")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError(f"{path}: no frames")
    return lines


def _box(fields: Sequence[str], where: str) -> BBox | None:
    if all(f == "nan" for f in fields):
        return None
    if any(f == "nan" for f in fields):
        raise DataError(f"{where}: box must be all numbers or all nan")
    try:
        return BBox(*(float(f) for f in fields))
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from None


def _check_index(idx: str, expected: int, where: str) -> None:
    if int(idx) != expected:
        raise DataError(f"{where}: frame index {idx} out of sequence (expected {expected})")


def parse_annotation_line(line: str, where: str = "line") -> tuple[int, FrameAnnotation]:
    match = _ANNOTATION_RE.fullmatch(line)
    if match is None:
        raise DataError(f"{where}: malformed annotation {line!r}")
    idx, *coords, vis = match.groups()
    box = _box(coords, where)
    visible = vis == "1"
    if visible != (box is not None):
        raise DataError(f"{where}: visible flag {vis} inconsistent with box")
    return int(idx), FrameAnnotation(box, visible)


def parse_result_line(line: str, where: str = "line") -> tuple[int, FramePrediction]:
    match = _RESULT_RE.fullmatch(line)
    if match is None:
        raise DataError(f"{where}: malformed result {line!r}")
    idx, *coords, conf_text = match.groups()
    box = _box(coords, where)
    if conf_text is None:
        conf = 1.0 if box is not None else 0.0
    else:
        conf = float(conf_text)
    try:
        return int(idx), FramePrediction(box, conf)
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from None


def parse_annotations_text(text: str, path: str = "<annotations>", frame_count: int | None = None) -> list[FrameAnnotation]:
    frames = []
    for lineno, line in enumerate(_lines(text, path), start=1):
        where = f"{path}:{lineno}"
        idx, frame = parse_annotation_line(line, where)
        _check_index(str(idx), lineno - 1, where)
        frames.append(frame)
    if frame_count is not None and len(frames) != frame_count:
        raise DataError(f"{path}: {len(frames)} frames, manifest says {frame_count}")
    return frames


def parse_results_text(text: str, path: str = "<results>", frame_count: int | None = None) -> list[FramePrediction]:
    frames = []
    for lineno, line in enumerate(_lines(text, path), start=1):
        where = f"{path}:{lineno}"
        idx, frame = parse_result_line(line, where)
        _check_index(str(idx), lineno - 1, where)
        frames.append(frame)
    if frame_count is not None and len(frames) != frame_count:
        raise DataError(f"{path}: {len(frames)} frames, manifest says {frame_count}")
    return frames


def parse_annotations(path: str | os.PathLike, frame_count: int | None = None) -> list[FrameAnnotation]:
    path = Path(path)
    return parse_annotations_text(_read(path), str(path), frame_count)


def parse_results(path: str | os.PathLike, frame_count: int | None = None) -> list[FramePrediction]:
    path = Path(path)
    return parse_results_text(_read(path), str(path), frame_count)


def _read(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None


def _box_fields(box: BBox | None) -> str:
    if box is None:
        return "nan,nan,nan,nan"
    return ",".join(format_float(v) for v in box.as_tuple())


def format_annotations(frames: Iterable[FrameAnnotation]) -> str:
    return "".join(f"{i},{_box_fields(f.bbox)},{int(f.visible)}\n" for i, f in enumerate(frames))


def format_results(frames: Iterable[FramePrediction]) -> str:
    return "".join(f"{i},{_box_fields(f.bbox)},{format_float(f.confidence)}\n" for i, f in enumerate(frames))


def write_annotations(path: str | os.PathLike, frames: Iterable[FrameAnnotation]) -> None:
    atomic_write_text(path, format_annotations(frames))


def write_results(path: str | os.PathLike, frames: Iterable[FramePrediction]) -> None:
    atomic_write_text(path, format_results(frames))


# -- manifests --------------------------------------------------------------


@dataclass(frozen=True)
class SequenceManifest:
    id: str
    task: TaskTag
    frame_count: int | None
    annotation_path: str
    source: str

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("sequence id must be non-empty")
        if self.frame_count is not None and (isinstance(self.frame_count, bool) or self.frame_count < 1):
            raise DataError(f"{self.id}: frame_count must be a positive integer")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "task": self.task.value,
            "frame_count": self.frame_count,
            "annotation_path": self.annotation_path,
            "source": self.source,
        }


@dataclass(frozen=True)
class TrackerResult:
    tracker_name: str
    sequence_id: str
    frames: list[FramePrediction]


@dataclass(frozen=True)
class BenchmarkManifest:
    name: str
    sequences: tuple[SequenceManifest, ...]

    @property
    def per_task_counts(self) -> dict[TaskTag, int]:
        counts = Counter(s.task for s in self.sequences)
        return {t: counts[t] for t in TASK_ORDER if counts[t]}

    def by_task(self, task: TaskTag) -> list[SequenceManifest]:
        return [s for s in self.sequences if s.task == task]


_SEQUENCE_KEYS = ("id", "task", "frame_count", "annotation_path", "source")


def manifest_to_text(manifest: BenchmarkManifest) -> str:
    if not manifest.sequences:
        raise DataError("refusing to write an empty manifest")
    doc = {"benchmark": manifest.name, "sequences": [s.to_json() for s in manifest.sequences]}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def manifest_from_text(text: str, where: str = "<manifest>") -> BenchmarkManifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{where}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or set(doc) != {"benchmark", "sequences"}:
        raise DataError(f"{where}: expected exactly the keys 'benchmark' and 'sequences'")
    if not isinstance(doc["benchmark"], str) or not isinstance(doc["sequences"], list):
        raise DataError(f"{where}: 'benchmark' must be a string and 'sequences' a list")
    sequences = []
    for i, entry in enumerate(doc["sequences"]):
        if not isinstance(entry, dict) or set(entry) != set(_SEQUENCE_KEYS):
            raise DataError(f"{where}: sequence #{i} must have exactly the keys {_SEQUENCE_KEYS}")
        fc = entry["frame_count"]
        if fc is not None and (not isinstance(fc, int) or isinstance(fc, bool)):
            raise DataError(f"{where}: sequence #{i} frame_count must be an integer or null")
        for key in ("id", "annotation_path", "source", "task"):
            if not isinstance(entry[key], str):
                raise DataError(f"{where}: sequence #{i} field {key!r} must be a string")
        sequences.append(
            SequenceManifest(entry["id"], TaskTag.parse(entry["task"]), fc, entry["annotation_path"], entry["source"])
        )
    return BenchmarkManifest(doc["benchmark"], tuple(sequences))


def load_manifest(path: str | os.PathLike) -> BenchmarkManifest:
    path = Path(path)
    return manifest_from_text(_read(path), str(path))


def write_manifest(path: str | os.PathLike, manifest: BenchmarkManifest) -> None:
    atomic_write_text(path, manifest_to_text(manifest))


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    severity: str = "error"  # or "warning"
    sequence_id: str | None = None


def validate_benchmark(
    manifest: BenchmarkManifest,
    annotations: Mapping[str, Sequence[FrameAnnotation]] | None = None,
    base_dir: str | os.PathLike | None = None,
) -> list[Violation]:
    """Check id uniqueness, frame counts against annotations, and task balance.

    With ``annotations=None`` and a ``base_dir``, annotation files are read
    from disk; with neither, frame counts are not checked. An empty result
    means the benchmark is valid.
    """
    violations: list[Violation] = []
    counts = Counter(s.id for s in manifest.sequences)
    for seq_id, n in sorted(counts.items()):
        if n > 1:
            violations.append(Violation("duplicate_id", f"sequence id {seq_id!r} appears {n} times", sequence_id=seq_id))

    if annotations is None and base_dir is not None:
        annotations = {}
        for seq in manifest.sequences:
            try:
                annotations[seq.id] = parse_annotations(Path(base_dir) / seq.annotation_path)
            except DataError as exc:
                violations.append(Violation("bad_annotations", str(exc), sequence_id=seq.id))
    if annotations is not None:
        for seq in manifest.sequences:
            frames = annotations.get(seq.id)
            if frames is None:
                if not any(v.sequence_id == seq.id for v in violations):
                    violations.append(Violation("missing_annotations", f"no annotations for {seq.id!r}", sequence_id=seq.id))
            elif seq.frame_count is None:
                violations.append(Violation("unknown_frame_count", f"{seq.id!r} has no frame_count", sequence_id=seq.id))
            elif len(frames) != seq.frame_count:
                violations.append(
                    Violation(
                        "frame_count_mismatch",
                        f"{seq.id!r}: manifest says {seq.frame_count} frames, annotations have {len(frames)}",
                        sequence_id=seq.id,
                    )
                )

    per_task = manifest.per_task_counts
    if len(set(per_task.values())) > 1:
        summary = ", ".join(f"{t.value}={n}" for t, n in per_task.items())
        violations.append(Violation("task_imbalance", f"unbalanced task counts: {summary}", severity="warning"))
    return violations
