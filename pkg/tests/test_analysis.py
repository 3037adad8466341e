from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmvot_lab.analysis import (
    REPORT_COLUMNS,
    CrossValMatrix,
    ModalityDistanceReport,
    PermutationPlan,
    RunRecord,
    capacity_rows,
    capacity_sweep,
    cross_validate,
    degradation,
    drops_follow_distances,
    emit_report,
    modality_distances,
    parse_order,
    read_report,
    read_table,
    run_permutations,
    run_training,
)
from mmvot_lab.dataset_io import DataError, TaskTag
from mmvot_lab.lab.data import TaskSpec, centroid, default_specs
from mmvot_lab.lab.training import TrainConfig

T, D, E = TaskTag.T, TaskTag.D, TaskTag.E
TINY = TrainConfig(steps_per_stage=40)


def scores(pr, npr, sr):
    return {"pr": pr, "npr": npr, "sr": sr}


SHORT = ("pr", "npr", "sr")
LONG = ("lt_precision", "lt_recall", "f_score")


@pytest.mark.parametrize(
    "task, metrics, before, after, deltas, mean",
    [
        (T, SHORT, (0.645, 0.614, 0.519), (0.609, 0.576, 0.494), (-3.6, -3.8, -2.5), -3.30),  # LasHeR, ViPT*
        (D, LONG, (0.587, 0.611, 0.598), (0.562, 0.584, 0.573), (-2.5, -2.7, -2.5), -2.57),  # DepthTrack, ViPT*
    ],
)
def test_degradation_reference_rows(task, metrics, before, after, deltas, mean):
    rep = degradation({task: dict(zip(metrics, before))}, {task: dict(zip(metrics, after))}, metrics)
    assert [rep.delta(task, m) for m in metrics] == pytest.approx(deltas, abs=1e-9)
    assert rep.task_means[task] == pytest.approx(mean, abs=5e-3)


def test_degradation_metric_subset():
    rep = degradation({E: {"pr": 0.754, "sr": 0.591}}, {E: {"pr": 0.743, "sr": 0.579}}, ("pr", "sr"))
    assert [e.metric for e in rep.entries] == ["pr", "sr"]
    assert rep.task_means[E] == pytest.approx(-1.15, abs=1e-9)
    with pytest.raises(DataError):
        degradation({E: {"pr": 0.5}}, {E: {"pr": 0.5}}, ())


def test_degradation_identity_and_key_mismatch():
    a = {T: scores(0.5, 0.4, 0.3), D: scores(0.2, 0.2, 0.2)}
    rep = degradation(a, a)
    assert all(e.delta == 0.0 for e in rep.entries) and rep.mean == 0.0
    with pytest.raises(DataError, match="differ"):
        degradation(a, {T: a[T]})


unit = st.floats(0, 1)
triples = st.tuples(unit, unit, unit).map(lambda t: scores(*t))


@given(st.dictionaries(st.sampled_from([T, D, E]), st.tuples(triples, triples), min_size=1))
def test_degradation_matches_subtraction_and_is_antisymmetric(pairs):
    a = {t: p[0] for t, p in pairs.items()}
    b = {t: p[1] for t, p in pairs.items()}
    ab, ba = degradation(a, b), degradation(b, a)
    for e in ab.entries:
        assert e.delta == (b[e.task][e.metric] - a[e.task][e.metric]) * 100
        assert e.delta == -ba.delta(e.task, e.metric)
    assert ab.mean == -ba.mean


def test_permutation_plan_is_all_nonempty_chains():
    plan = PermutationPlan.over()
    assert len(plan) == 15 == 3 + 6 + 6
    expected = {p for k in (1, 2, 3) for p in itertools.permutations((T, D, E), k)}
    assert set(plan.variants) == expected and len(set(plan.variants)) == 15
    assert plan.keys[:3] == ["T", "D", "E"]


def test_parse_order():
    assert parse_order("T,D,E") == (T, D, E) == parse_order("T+D+E")
    with pytest.raises(DataError):
        parse_order("T,Q")
    with pytest.raises(DataError):
        parse_order("T,T")


@pytest.fixture(scope="module")
def permutations():
    return run_permutations(TINY)


def test_permutations_structure(permutations):
    assert list(permutations) == PermutationPlan.over().keys
    for key, rec in permutations.items():
        order = parse_order(key)
        assert [s.tasks for s in rec.stages] == [order[: i + 1] for i in range(len(order))]
        assert all(set(s.metrics) == {T, D, E} for s in rec.stages)
    td, dt = permutations["T+D"], permutations["D+T"]
    assert not np.array_equal(td.final.theta, dt.final.theta)
    assert {s.label for s in td.stages} == {"T", "T+D"} and {s.label for s in dt.stages} == {"D", "D+T"}


def test_prefix_variants_equal_direct_runs(permutations):
    direct = run_training("serial-replay", (E, D), TINY, eval_tasks=(T, D, E))
    assert direct.to_text() == permutations["E+D"].to_text()
    single = run_training("separate", (D,), TINY, eval_tasks=(T, D, E))
    assert np.array_equal(single.final.theta, permutations["D"].final.theta)
    assert single.final.metrics == permutations["D"].final.metrics


def test_permutations_independent_of_jobs(permutations):
    again = run_permutations(TINY, jobs=3)
    assert [r.to_text() for r in again.values()] == [r.to_text() for r in permutations.values()]


def test_run_record_round_trip(permutations):
    rec = permutations["T+D+E"]
    back = RunRecord.from_text(rec.to_text())
    assert back.to_text() == rec.to_text()
    assert np.array_equal(back.model().theta, rec.final.theta)


def test_capacity_single_depth_and_order():
    res = capacity_sweep([3], TINY, seeds=[0, 1])
    assert res.depths == [3] and len(res.rows[0].per_seed) == 2
    res = capacity_sweep([1, 3, 2], TINY, seeds=[0])
    assert res.depths == [3, 2, 1]
    header, rows = capacity_rows(res)
    assert header[0] == "depth" and [r[0] for r in rows] == [3, 2, 1]
    with pytest.raises(DataError):
        capacity_sweep([0, 3], TINY)
    with pytest.raises(DataError):
        capacity_sweep([3], TINY, seeds=[])


def test_depth_trend_is_spearman():
    from mmvot_lab.analysis import CapacityRow, CapacitySweepResult

    means = [-1.0, -2.0, -1.5, -4.0, -5.0, -6.0]  # depths 6..1
    res = CapacitySweepResult(tuple(CapacityRow(6 - i, m, (m,), {}) for i, m in enumerate(means)), (0,))
    # ranks of depth: 6..1 -> 6..1; ranks of means: 6,4,5,3,2,1; d^2 = 0,1,1,0,0,0
    assert res.depth_trend() == pytest.approx(1 - 6 * 2 / (6 * 35))


def test_cross_validation_diagonal_is_separate_baseline():
    xv = cross_validate(TINY)
    for task in (T, D, E):
        sep = run_training("separate", (task,), TINY, eval_tasks=(task,))
        assert xv.value(task, task, "sr") == sep.final.metrics[task]["sr"]
        assert xv.drop(task, task) == 0.0
    assert xv.matrix().shape == (3, 3)


def test_diagonal_dominates_column_means(paired_default):
    for run in paired_default.value:
        xv = CrossValMatrix((T, D, E), run.cross)
        m = xv.matrix("sr")
        assert np.all(np.diag(m) >= m.mean(axis=0))


def test_modality_distances():
    rep = modality_distances(default_specs())
    assert (rep.c1, rep.c2, rep.c3) == (1.0, 2.0, 3.0)
    assert rep.c3 + rep.c2 > rep.c3 + rep.c1 > rep.c2 + rep.c1  # 5 > 4 > 3
    same = [TaskSpec(t, centroid(0.5)) for t in (T, D, E)]
    assert modality_distances(same) == ModalityDistanceReport(0.0, 0.0, 0.0)
    with pytest.raises(DataError):
        modality_distances([TaskSpec(T, centroid(0))])


@given(st.lists(st.lists(st.floats(-10, 10), min_size=8, max_size=8), min_size=3, max_size=3))
def test_distances_nonnegative_and_triangle(means):
    specs = [TaskSpec(t, tuple(m)) for t, m in zip((T, D, E), means)]
    r = modality_distances(specs)
    assert min(r.c1, r.c2, r.c3) >= 0
    tol = 1e-9
    assert r.c3 <= r.c1 + r.c2 + tol and r.c2 <= r.c1 + r.c3 + tol and r.c1 <= r.c2 + r.c3 + tol


def test_drops_follow_distances_logic():
    dist = ModalityDistanceReport(1.0, 2.0, 3.0)
    # column b: own model 1.0; nearer training task loses less
    good = {(a, b): {"sr": 1.0} for a in (T, D, E) for b in (T, D, E)}
    good.update({(E, T): {"sr": 0.8}, (D, T): {"sr": 0.6}, (E, D): {"sr": 0.9}, (T, D): {"sr": 0.5},
                 (D, E): {"sr": 0.9}, (T, E): {"sr": 0.7}})
    assert drops_follow_distances(CrossValMatrix((T, D, E), good), dist)
    bad = dict(good)
    bad[(D, T)] = {"sr": 0.85}
    assert not drops_follow_distances(CrossValMatrix((T, D, E), bad), dist)


def test_emit_report_deterministic_and_parse_back(tmp_path, permutations):
    records = list(permutations.values())
    paths = emit_report(records, tmp_path / "a" / "summary.csv")
    emit_report(records, tmp_path / "b" / "summary.csv")
    for p in paths:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    rows = read_report(paths[0])
    assert tuple(read_table(paths[0])[0]) == REPORT_COLUMNS
    expected = [(r.key, i, t.value, s.metrics[t]["sr"], s.final_loss) for r in records for i, s in enumerate(r.stages) for t in s.metrics]
    assert [(r["run"], r["stage"], r["eval_task"], r["sr"], r["final_loss"]) for r in rows] == expected
    dat = (tmp_path / "a" / "summary.sr_T.dat").read_text().splitlines()
    assert len(dat) == 15 and all(len(line.split()) == 2 for line in dat)
    with pytest.raises(DataError):
        emit_report([], tmp_path / "c.csv")


def test_run_training_paradigms():
    par = run_training("parallel", (T, D), TINY)
    assert len(par.stages) == 1 and par.final.label == "T+D"
    sep = run_training("separate", (T, D), TINY)
    assert [s.label for s in sep.stages] == ["T", "D"]
    with pytest.raises(DataError):
        run_training("bogus", (T,), TINY)
