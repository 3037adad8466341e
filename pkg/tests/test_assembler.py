from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmvot_lab.assembler import (
    AssemblyConfig,
    SequenceScore,
    difficulty,
    emit_manifest,
    format_scores,
    load_scores,
    parse_scores_text,
    rank_and_select,
)
from mmvot_lab.dataset_io import DataError, SequenceManifest, TaskTag, load_manifest, validate_benchmark
from mmvot_lab.rng import Xoshiro256
from oracles import exact_mean

T, D, E = TaskTag.T, TaskTag.D, TaskTag.E


def score(seq_id, task, *values, source="src"):
    return SequenceScore(seq_id, task, {f"trk{i}": v for i, v in enumerate(values)}, source)


@pytest.mark.parametrize("values, expected", [((0.2,), 0.2), ((0.2, 0.4), 0.3), ((0.1, 0.2, 0.3), 0.2)])
def test_difficulty_examples(values, expected):
    assert difficulty(score("s", T, *values)) == pytest.approx(expected, abs=1e-15)


def test_difficulty_requires_trackers():
    with pytest.raises(DataError):
        difficulty(SequenceScore("s", T, {}))
    with pytest.raises(DataError):
        SequenceScore("s", T, {"a": 1.2})


def ids(manifest):
    return [s.id for s in manifest.sequences]


def test_rank_examples():
    scores = [score("a", T, 0.5), score("b", T, 0.2), score("c", T, 0.1), score("d", T, 0.4)]
    assert ids(rank_and_select(scores, AssemblyConfig(2))) == ["c", "b"]
    tie = [score("b", T, 0.3), score("a", T, 0.3)]
    assert ids(rank_and_select(tie, AssemblyConfig(1))) == ["a"]


def test_insufficient_sequences_names_task_and_source():
    scores = [score("a", T, 0.5), score("b", D, 0.5)]
    with pytest.raises(DataError, match="task T"):
        rank_and_select(scores, AssemblyConfig(2))
    scores = [score("a", D, 0.5, source="DepthTrack"), score("b", D, 0.5, source="RGBD1K")]
    with pytest.raises(DataError, match="source RGBD1K"):
        rank_and_select(scores, AssemblyConfig(3, {"DepthTrack": 1, "RGBD1K": 2}))


def test_duplicate_ids_rejected():
    with pytest.raises(DataError, match="duplicate"):
        rank_and_select([score("a", T, 0.1), score("a", D, 0.2)], AssemblyConfig(1))


def test_source_quotas_split_a_task():
    rng = Xoshiro256(5)
    scores = [score(f"dt{i}", D, rng.random(), source="DepthTrack") for i in range(8)]
    scores += [score(f"rk{i}", D, rng.random() / 10, source="RGBD1K") for i in range(8)]
    scores += [score(f"t{i}", T, rng.random(), source="LasHeR") for i in range(6)]
    m = rank_and_select(scores, AssemblyConfig(4, {"DepthTrack": 2, "RGBD1K": 2}))
    sources = [s.source for s in m.sequences if s.task == D]
    assert sources.count("DepthTrack") == 2 and sources.count("RGBD1K") == 2
    assert m.per_task_counts == {T: 4, D: 4}
    with pytest.raises(DataError, match="sum to 3"):
        rank_and_select(scores, AssemblyConfig(4, {"DepthTrack": 2, "RGBD1K": 1}))


def test_config_validation():
    with pytest.raises(DataError):
        AssemblyConfig(0)
    with pytest.raises(DataError):
        AssemblyConfig(2, {"x": 0})


def exhaustive_select(pool, quota):
    """The unique subset whose every member ranks before every non-member."""
    key = {s.sequence_id: (exact_mean(s.per_tracker_mean_iou.values()), s.sequence_id) for s in pool}
    found = []
    for subset in itertools.combinations(pool, quota):
        chosen = {s.sequence_id for s in subset}
        rest = [key[s.sequence_id] for s in pool if s.sequence_id not in chosen]
        if not rest or max(key[c] for c in chosen) < min(rest):
            found.append(chosen)
    assert len(found) == 1
    return found[0]


@pytest.mark.parametrize("seed", range(3))
def test_twenty_sequences_match_exhaustive_search(seed):
    rng = Xoshiro256(seed)
    # coarse grid so ties occur
    pool = [score(f"s{i:02d}", T, *(rng.below(5) / 4 for _ in range(3))) for i in range(20)]
    got = rank_and_select(pool, AssemblyConfig(5))
    assert set(ids(got)) == exhaustive_select(pool, 5)
    keys = [(exact_mean(s.per_tracker_mean_iou.values()), s.sequence_id) for s in pool if s.sequence_id in set(ids(got))]
    assert ids(got) == [k[1] for k in sorted(keys)]


score_tables = st.lists(
    st.tuples(st.sampled_from([T, D, E]), st.lists(st.integers(0, 8).map(lambda v: v / 8), min_size=1, max_size=3)),
    min_size=3,
    max_size=24,
)


@given(score_tables, st.integers(0, 20), st.integers(1, 3))
@settings(max_examples=60)
def test_selection_invariant_under_common_scaling(table, k, quota):
    scores = [score(f"s{i}", task, *vals) for i, (task, vals) in enumerate(table)]
    counts = {t: sum(1 for s in scores if s.task == t) for t in TaskTag}
    if any(0 < n < quota for n in counts.values()):
        return
    c = 2.0**-k  # power-of-two factors keep the scaled table exact
    scaled = [SequenceScore(s.sequence_id, s.task, {t: v * c for t, v in s.per_tracker_mean_iou.items()}, s.source) for s in scores]
    cfg = AssemblyConfig(quota)
    a, b = rank_and_select(scores, cfg), rank_and_select(scaled, cfg)
    assert set(ids(a)) == set(ids(b))
    assert all(n == quota for n in a.per_task_counts.values())
    assert ids(rank_and_select(scores, cfg)) == ids(a)


def test_score_csv_round_trip_and_errors(tmp_path):
    scores = [score("a", T, 0.25, 0.5, source="LasHeR"), score("b", E, 0.125, source="VisEvent")]
    text = format_scores(scores)
    assert text.startswith("sequence_id,task,source,tracker,mean_iou\n")
    assert parse_scores_text(text) == scores
    (tmp_path / "s.csv").write_text(text)
    assert load_scores(tmp_path / "s.csv") == scores
    bad = [
        "seq,task\n",
        text + "a,T,LasHeR,trk0,0.3\n",  # duplicate (sequence, tracker)
        text + "a,D,LasHeR,trk9,0.3\n",  # conflicting task
        text + "c,T,x,trk0,1.5\n",
        text + "c,T,x,trk0,abc\n",
        text + "c,Q,x,trk0,0.1\n",
    ]
    for t in bad:
        with pytest.raises(DataError):
            parse_scores_text(t)


def test_emit_round_trip_and_300_entry_manifest(tmp_path):
    rng = Xoshiro256(42)
    scores = [score(f"{t.value}{i:03d}", t, rng.random(), rng.random()) for t in TaskTag for i in range(130)]
    catalog = {s.sequence_id: SequenceManifest(s.sequence_id, s.task, 50 + i, f"ann/{s.sequence_id}.txt", "src") for i, s in enumerate(scores)}
    m = rank_and_select(scores, AssemblyConfig(100), catalog)
    assert len(m.sequences) == 300 and m.per_task_counts == {T: 100, D: 100, E: 100}
    assert all(s.frame_count == catalog[s.id].frame_count for s in m.sequences)
    emit_manifest(m, tmp_path / "m.json")
    again = load_manifest(tmp_path / "m.json")
    assert again == m
    assert validate_benchmark(again) == []
    first = (tmp_path / "m.json").read_bytes()
    emit_manifest(rank_and_select(scores, AssemblyConfig(100), catalog), tmp_path / "m.json")
    assert (tmp_path / "m.json").read_bytes() == first
    with pytest.raises(DataError):
        emit_manifest(type(m)("empty", ()), tmp_path / "e.json")


def test_output_order_is_task_then_difficulty():
    scores = [score("e1", E, 0.1), score("t1", T, 0.9), score("d1", D, 0.5), score("t2", T, 0.2)]
    m = rank_and_select(scores, AssemblyConfig(1))
    assert ids(m) == ["t2", "d1", "e1"]
