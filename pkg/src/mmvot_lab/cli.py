"""Command-line entry point: ``mmvot-lab {eval,assemble,train,experiment}``.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
Outputs default to ``$MMVOT_LAB_OUT`` (or the working directory) and are
always written atomically.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import analysis
from .assembler import AssemblyConfig, emit_manifest, load_scores, rank_and_select
from .dataset_io import (
    TASK_ORDER,
    DataError,
    SequenceManifest,
    TaskTag,
    atomic_write_text,
    load_manifest,
    parse_annotations,
    parse_results,
)
from .lab.data import TaskSpec, default_specs
from .lab.model import FEATURE_DIM, MAX_BRANCH_DEPTH, NumericFailure
from .lab.training import TrainConfig
from .metrics import EvaluationError, MetricSet, aggregate, evaluate_sequence, time_savings

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "MMVOT_LAB_OUT"


class ConfigError(DataError):
    """Invalid run configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, ".")) / name


# -- run configuration -------------------------------------------------------

_TRAIN_KEYS = ("steps_per_stage", "batch_size", "lr", "momentum", "seed", "branch_depth")
_TASK_KEYS = ("task", "modality_mean", "n_train", "n_eval")
_EXPERIMENT_KEYS = ("depths", "seeds", "orders", "replay_fraction")


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run or experiment needs, loadable from JSON.

    ``{"train": {...TrainConfig fields}, "tasks": [{"task", "modality_mean",
    "n_train", "n_eval"}, ...], "experiment": {"depths", "seeds", "orders",
    "replay_fraction"}}``; every section and key is optional, unknown keys are
    rejected. Task data seeds are derived from ``train.seed``.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    tasks: dict[TaskTag, TaskSpec] = field(default_factory=default_specs)
    depths: tuple[int, ...] = tuple(range(MAX_BRANCH_DEPTH, 0, -1))
    seeds: tuple[int, ...] = tuple(range(10))
    orders: tuple[tuple[TaskTag, ...], ...] | None = None
    replay_fraction: float = 1.0

    @classmethod
    def from_json(cls, doc: Any, where: str = "config") -> RunConfig:
        _keys(doc, ("train", "tasks", "experiment"), where)
        train = TrainConfig()
        if "train" in doc:
            section = doc["train"]
            _keys(section, _TRAIN_KEYS, f"{where}.train")
            values = {}
            for key in _TRAIN_KEYS:
                if key in section:
                    kind = float if key in ("lr", "momentum") else int
                    values[key] = _typed(section[key], kind, f"{where}.train.{key}")
            train = _build(TrainConfig, values, f"{where}.train")
        tasks = default_specs()
        if "tasks" in doc:
            if not isinstance(doc["tasks"], list) or not doc["tasks"]:
                raise ConfigError(f"{where}.tasks must be a non-empty list")
            tasks = {}
            for i, entry in enumerate(doc["tasks"]):
                loc = f"{where}.tasks[{i}]"
                _keys(entry, _TASK_KEYS, loc)
                if "task" not in entry or "modality_mean" not in entry:
                    raise ConfigError(f"{loc} needs 'task' and 'modality_mean'")
                tag = TaskTag.parse(_typed(entry["task"], str, f"{loc}.task"))
                if tag in tasks:
                    raise ConfigError(f"{loc}: task {tag} defined twice")
                mean = entry["modality_mean"]
                if not isinstance(mean, list) or len(mean) != FEATURE_DIM:
                    raise ConfigError(f"{loc}.modality_mean must be a list of {FEATURE_DIM} numbers")
                mean = tuple(_typed(v, float, f"{loc}.modality_mean") for v in mean)
                sizes = {k: _typed(entry[k], int, f"{loc}.{k}") for k in ("n_train", "n_eval") if k in entry}
                tasks[tag] = _build(TaskSpec, {"task": tag, "modality_mean": mean, **sizes}, loc)
        out = cls(train, tasks)
        if "experiment" in doc:
            section = doc["experiment"]
            _keys(section, _EXPERIMENT_KEYS, f"{where}.experiment")
            if "depths" in section:
                out = replace(out, depths=_int_list(section["depths"], f"{where}.experiment.depths"))
            if "seeds" in section:
                out = replace(out, seeds=_int_list(section["seeds"], f"{where}.experiment.seeds"))
            if "orders" in section and section["orders"] is not None:
                orders = section["orders"]
                if not isinstance(orders, list) or not orders:
                    raise ConfigError(f"{where}.experiment.orders must be a non-empty list of order strings")
                out = replace(out, orders=tuple(analysis.parse_order(_typed(o, str, f"{where}.experiment.orders")) for o in orders))
            if "replay_fraction" in section:
                fraction = _typed(section["replay_fraction"], float, f"{where}.experiment.replay_fraction")
                if not 0.0 < fraction <= 1.0:
                    raise ConfigError(f"{where}.experiment.replay_fraction must be in (0, 1]")
                out = replace(out, replay_fraction=fraction)
        if any(not 1 <= d <= MAX_BRANCH_DEPTH for d in out.depths):
            raise ConfigError(f"{where}.experiment.depths must lie in 1..{MAX_BRANCH_DEPTH}")
        return out

    @classmethod
    def load(cls, path: str | os.PathLike | None) -> RunConfig:
        if path is None:
            return cls()
        try:
            text = Path(path).read_text(encoding="utf-8")
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(doc, str(path))


def _keys(doc: Any, allowed: Sequence[str], where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")


def _typed(value: Any, kind: type, where: str) -> Any:
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        if not math.isfinite(value):
            raise ConfigError(f"{where} must be finite")
        return float(value)
    if isinstance(value, kind) and not isinstance(value, bool):
        return value
    raise ConfigError(f"{where} must be of type {kind.__name__}, got {value!r}")


def _int_list(value: Any, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a non-empty list of integers")
    return tuple(_typed(v, int, where) for v in value)


def _build(cls: type, values: Mapping[str, Any], where: str) -> Any:
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _int_csv(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


# -- eval ---------------------------------------------------------------------

EVAL_COLUMNS = ("scope", "name", "task", "n_frames", "pr", "npr", "sr", "f_score", "lt_precision", "lt_recall", "lt_threshold")


def _metric_row(scope: str, name: str, task: str, m: MetricSet) -> list[Any]:
    lt = [m.f_score, m.lt_precision, m.lt_recall, m.lt_threshold]
    return [scope, name, task, m.n_frames, m.pr, m.npr, m.sr] + ["" if v is None else float(v) for v in lt]


def evaluate_manifest(
    manifest_path: str | os.PathLike,
    results_dir: str | os.PathLike,
    protocol: str = "shortterm",
    tasks: Sequence[TaskTag] | None = None,
    weights: str = "frames",
) -> list[list[Any]]:
    """Per-sequence, per-task, and overall ("all") rows for one evaluation pass."""
    manifest = load_manifest(manifest_path)
    base = Path(manifest_path).parent
    sequences: list[SequenceManifest] = [s for s in manifest.sequences if tasks is None or s.task in tasks]
    if not sequences:
        raise DataError("no sequences to evaluate")
    rows, per_task = [], {}
    for seq in sequences:
        gts = parse_annotations(base / seq.annotation_path, seq.frame_count)
        result_path = Path(results_dir) / f"{seq.id}.txt"
        if not result_path.is_file():
            raise DataError(f"missing result file for sequence {seq.id!r}: {result_path}")
        preds = parse_results(result_path, len(gts))
        try:
            report = evaluate_sequence(preds, gts, protocol)  # type: ignore[arg-type]
        except EvaluationError as exc:
            raise DataError(f"sequence {seq.id!r}: {exc}") from None
        rows.append(_metric_row("sequence", seq.id, seq.task.value, report))
        per_task.setdefault(seq.task, []).append(report)
    everything = []
    for task in TASK_ORDER:
        if task in per_task:
            rows.append(_metric_row("task", task.value, task.value, aggregate(per_task[task], weights)))  # type: ignore[arg-type]
            everything += per_task[task]
    rows.append(_metric_row("all", "all", "all", aggregate(everything, weights)))  # type: ignore[arg-type]
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    tasks = analysis.parse_order(args.tasks) if args.tasks else None
    start = time.perf_counter()
    rows = evaluate_manifest(args.manifest, args.results_dir, args.protocol, tasks, args.weights)
    unified_s = time.perf_counter() - start
    out = args.out or _default_out("eval.csv")
    analysis.write_table(out, EVAL_COLUMNS, rows)
    n_seq = sum(1 for r in rows if r[0] == "sequence")
    print(f"evaluated {n_seq} sequences ({rows[-1][3]} frames) in {unified_s:.3f} s -> {out}")
    if args.compare_separate:
        present = [TaskTag(r[1]) for r in rows if r[0] == "task"]
        separate_s = []
        for task in present:
            start = time.perf_counter()
            evaluate_manifest(args.manifest, args.results_dir, args.protocol, [task], args.weights)
            separate_s.append(time.perf_counter() - start)
        if min(separate_s + [unified_s]) > 0:
            savings = time_savings([s / 60 for s in separate_s], unified_s / 60)
            per_task = ", ".join(f"{t}={s:.3f} s" for t, s in zip(present, separate_s))
            print(f"per-task passes: {per_task}; unified vs per-task time: {savings:+.2f}%")
    return EXIT_OK


# -- assemble -----------------------------------------------------------------


def _source_quota(text: str) -> tuple[str, int]:
    source, sep, count = text.rpartition("=")
    if not sep or not source:
        raise argparse.ArgumentTypeError(f"expected SOURCE=COUNT, got {text!r}")
    return source, _positive_int(count)


def cmd_assemble(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    cfg = AssemblyConfig(args.per_task, dict(args.source_quota) if args.source_quota else None, args.name)
    catalog = None
    if args.catalog:
        catalog = {s.id: s for s in load_manifest(args.catalog).sequences}
    manifest = rank_and_select(scores, cfg, catalog)
    out = args.out or _default_out("manifest.json")
    emit_manifest(manifest, out)
    counts = ", ".join(f"{t}={n}" for t, n in manifest.per_task_counts.items())
    print(f"selected {len(manifest.sequences)} sequences ({counts}) -> {out}")
    return EXIT_OK


# -- train --------------------------------------------------------------------


def _train_config(run: RunConfig, args: argparse.Namespace) -> TrainConfig:
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "branch_depth", "steps_per_stage")
        if getattr(args, key, None) is not None
    }
    if not overrides:
        return run.train
    try:
        return replace(run.train, **overrides)
    except ValueError as exc:
        raise ConfigError(f"flags: {exc}") from None


def cmd_train(args: argparse.Namespace) -> int:
    run = RunConfig.load(args.config)
    cfg = _train_config(run, args)
    order = analysis.parse_order(args.order)
    fraction = args.replay_fraction if args.replay_fraction is not None else run.replay_fraction
    start = time.perf_counter()
    record = analysis.run_training(args.paradigm, order, cfg, run.tasks, fraction)
    elapsed = time.perf_counter() - start
    doc = record.to_json()
    if args.timing:
        doc["wall_time_s"] = elapsed
    out = args.out or _default_out(f"run-{args.paradigm}-{record.key}-s{cfg.seed}.json")
    atomic_write_text(out, json.dumps(doc, indent=1, allow_nan=False) + "\n")
    final = ", ".join(f"{t}: SR {m['sr']:.4f}" for t, m in record.final.metrics.items())
    print(f"{args.paradigm} {record.key} seed {cfg.seed}: {final} ({elapsed:.2f} s) -> {out}")
    return EXIT_OK


# -- experiment ---------------------------------------------------------------


def _write(path: Path, header_rows: tuple) -> Path:
    header, rows = header_rows
    return analysis.write_table(path, header, rows)


def cmd_experiment(args: argparse.Namespace) -> int:
    run = RunConfig.load(args.config)
    if args.seeds is not None:
        run = replace(run, seeds=args.seeds)
    if args.depths is not None:
        run = replace(run, depths=args.depths)
    cfg = _train_config(run, args)
    out_dir = Path(args.out_dir) if args.out_dir else Path(os.environ.get(OUT_ENV, "."))
    start = time.perf_counter()

    if args.which == "distances":
        report = analysis.modality_distances(run.tasks)
        path = _write(out_dir / "distances.csv", analysis.distance_rows(report))
        print(f"C1={report.c1!r} C2={report.c2!r} C3={report.c3!r} -> {path}")

    elif args.which == "permute":
        records = analysis.run_permutations(cfg, run.tasks, run.replay_fraction, args.jobs)
        if run.orders is not None:
            wanted = [analysis.order_key(o) for o in run.orders]
            unknown = [k for k in wanted if k not in records]
            if unknown:
                raise ConfigError(f"orders not in the permutation plan: {', '.join(unknown)}")
            records = {k: records[k] for k in wanted}
        for key, rec in records.items():
            atomic_write_text(out_dir / f"run-{key}.json", rec.to_text())
        analysis.emit_report(list(records.values()), out_dir / "summary.csv")
        print(f"{len(records)} variants -> {out_dir}")

    elif args.which == "capacity":
        if any(not 1 <= d <= MAX_BRANCH_DEPTH for d in run.depths):
            raise ConfigError(f"depths must lie in 1..{MAX_BRANCH_DEPTH}")
        result = analysis.capacity_sweep(run.depths, cfg, run.seeds, run.tasks, args.jobs)
        path = _write(out_dir / "capacity.csv", analysis.capacity_rows(result))
        analysis.write_plot_data(out_dir / "capacity.dat", result.depths, result.means)
        for row in result.rows:
            print(f"depth {row.depth}: mean degradation {row.mean_degradation:+.3f} points")
        if len(result.rows) > 1:
            print(f"Spearman(depth, degradation) = {result.depth_trend():.3f}")
        print(f"-> {path}")

    else:  # xval
        distances = analysis.modality_distances(run.tasks)
        matrices = analysis.crossval_study(cfg, run.seeds, run.tasks, args.jobs)
        header, _ = analysis.crossval_rows(matrices[0])
        rows = [[seed, *row] for seed, xv in zip(run.seeds, matrices) for row in analysis.crossval_rows(xv)[1]]
        path = analysis.write_table(out_dir / "xval.csv", ("seed", *header), rows)
        agree = sum(analysis.drops_follow_distances(xv, distances) for xv in matrices)
        print(f"drop ordering follows centroid distances on {agree}/{len(matrices)} seeds -> {path}")

    print(f"wall time {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmvot-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="score tracker results against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results-dir", required=True, help="directory holding <sequence_id>.txt result files")
    p.add_argument("--protocol", choices=("shortterm", "longterm"), default="shortterm")
    p.add_argument("--weights", choices=("frames", "uniform"), default="frames", help="per-task/overall pooling")
    p.add_argument("--tasks", help="only evaluate these tasks, e.g. T,D")
    p.add_argument("--compare-separate", action="store_true", help="also time one pass per task and report the savings")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("assemble", help="select the hardest sequences per task into a manifest")
    p.add_argument("--scores", required=True, help="CSV: sequence_id,task,source,tracker,mean_iou")
    p.add_argument("--per-task", type=_positive_int, default=100)
    p.add_argument("--source-quota", type=_source_quota, action="append", metavar="SOURCE=COUNT")
    p.add_argument("--catalog", help="manifest supplying frame counts and annotation paths")
    p.add_argument("--name", default="unified-benchmark")
    p.add_argument("--out")
    p.set_defaults(func=cmd_assemble)

    def training_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="RunConfig JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--branch-depth", dest="branch_depth", type=int)
        p.add_argument("--steps", dest="steps_per_stage", type=_positive_int, help="steps per stage")

    p = sub.add_parser("train", help="train one paradigm and write a run record")
    training_flags(p)
    p.add_argument("--paradigm", choices=analysis.PARADIGMS, default="serial-replay")
    p.add_argument("--order", default="T,D,E")
    p.add_argument("--replay-fraction", type=float)
    p.add_argument("--timing", action="store_true", help="embed wall time in the run record")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run an analysis and write its reports")
    training_flags(p)
    p.add_argument("--which", choices=("permute", "capacity", "xval", "distances"), required=True)
    p.add_argument("--seeds", type=_int_csv, help="override experiment seeds, e.g. 0,1,2")
    p.add_argument("--depths", type=_int_csv, help="override capacity depths, e.g. 6,3,1")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
