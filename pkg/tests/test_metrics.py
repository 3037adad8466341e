from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmvot_lab.metrics import (
    BBox,
    Curve,
    EvaluationError,
    FrameAnnotation,
    FramePrediction,
    aggregate,
    auc,
    center_error,
    evaluate_boxes,
    evaluate_sequence,
    iou,
    iou_array,
    longterm_pr_re_f,
    norm_center_error,
    precision_curve,
    success_curve,
    time_savings,
)
from oracles import brute_longterm, brute_shortterm, random_sequence


def box(*v):
    return BBox(*map(float, v))


def test_bbox_invariants():
    with pytest.raises(ValueError):
        BBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        BBox(0, 0, 1, -1)
    with pytest.raises(ValueError):
        BBox(math.nan, 0, 1, 1)
    with pytest.raises(ValueError):
        BBox(0, math.inf, 1, 1)


def test_frame_type_invariants():
    with pytest.raises(ValueError):
        FrameAnnotation(None, True)
    with pytest.raises(ValueError):
        FrameAnnotation(box(0, 0, 1, 1), False)
    with pytest.raises(ValueError):
        FramePrediction(box(0, 0, 1, 1), 1.5)
    with pytest.raises(ValueError):
        FramePrediction(None, 0.5)
    assert FramePrediction(None, 0.0).bbox is None


def test_curve_invariants():
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 0.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 1.0]), np.array([0.5]))
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 1.0]), np.array([0.5, 1.5]))


@pytest.mark.parametrize(
    "a, b, expected",
    [((0, 0, 10, 10), (0, 0, 10, 10), 1.0), ((0, 0, 10, 10), (20, 20, 5, 5), 0.0), ((0, 0, 2, 2), (1, 0, 2, 2), 1 / 3)],
)
def test_iou_examples(a, b, expected):
    assert iou(box(*a), box(*b)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "p, g, expected",
    [((0, 0, 10, 10), (0, 0, 10, 10), 0.0), ((0, 0, 10, 10), (3, 4, 10, 10), 5.0), ((0, 0, 4, 4), (0, 2, 4, 4), 2.0)],
)
def test_center_error_examples(p, g, expected):
    assert center_error(box(*p), box(*g)) == expected


@pytest.mark.parametrize(
    "p, g, expected",
    [((0, 0, 10, 10), (0, 0, 10, 10), 0.0), ((3, 4, 10, 10), (0, 0, 10, 10), 0.5), ((0, 5, 10, 10), (0, 0, 10, 20), 0.0)],
)
def test_norm_center_error_examples(p, g, expected):
    assert norm_center_error(box(*p), box(*g)) == pytest.approx(expected, abs=1e-15)


int_boxes = st.builds(
    BBox,
    st.integers(-500, 500).map(float),
    st.integers(-500, 500).map(float),
    st.integers(1, 300).map(float),
    st.integers(1, 300).map(float),
)
real_boxes = st.builds(
    BBox,
    st.floats(-1e3, 1e3),
    st.floats(-1e3, 1e3),
    st.floats(1e-2, 1e3),
    st.floats(1e-2, 1e3),
)


@given(real_boxes, real_boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, a) == 1.0
    pair = np.array([a.as_tuple()]), np.array([b.as_tuple()])
    assert iou_array(*pair)[0] == iou(a, b)


@given(int_boxes, int_boxes, st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_translation_invariance(a, b, dx, dy):
    def shift(z):
        return BBox(z.x + dx, z.y + dy, z.w, z.h)

    assert iou(shift(a), shift(b)) == iou(a, b)
    assert center_error(shift(a), shift(b)) == center_error(a, b)
    assert norm_center_error(shift(a), shift(b)) == norm_center_error(a, b)


@given(int_boxes, int_boxes, st.integers(-6, 6))
def test_norm_center_error_scale_invariance(a, b, k):
    s = 2.0**k  # exact scaling keeps the comparison free of rounding

    def scale(z):
        return BBox(z.x * s, z.y * s, z.w * s, z.h * s)

    assert norm_center_error(scale(a), scale(b)) == norm_center_error(a, b)


def test_precision_curve_examples():
    assert precision_curve([5, 25]).at(20) == 0.5
    assert precision_curve([10, 30, 15]).at(20) == pytest.approx(2 / 3)
    curve = precision_curve([5])
    assert np.all(np.diff(curve.values) >= 0) and curve.values[-1] == 1.0
    with pytest.raises(EvaluationError, match="no evaluable frames"):
        precision_curve([])


def test_success_curve_examples():
    c = success_curve([1.0])
    assert np.all(c.values[:-1] == 1.0) and c.values[-1] == 0.0
    c = success_curve([0.5])
    assert np.all(c.values[:50] == 1.0) and np.all(c.values[50:] == 0.0)
    assert auc(c) == pytest.approx(50 / 101)
    assert auc(success_curve([0.0])) == 0.0
    with pytest.raises(EvaluationError, match="no evaluable frames"):
        success_curve([])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_curve_monotonicity(errors, ious):
    assert np.all(np.diff(precision_curve(errors).values) >= 0)
    assert np.all(np.diff(success_curve(ious).values) <= 0)
    assert 0.0 <= auc(success_curve(ious)) <= 1.0


@given(st.lists(st.booleans(), min_size=1, max_size=101))
def test_auc_complement(bits):
    values = np.array(bits, dtype=float)
    t = np.arange(values.size, dtype=float)
    assert auc(Curve(t, 1.0 - values)) == pytest.approx(1.0 - auc(Curve(t, values)), abs=1e-12)


def test_auc_examples():
    t = np.array([0.0, 1.0])
    assert auc(Curve(t, np.ones(2))) == 1.0
    assert auc(Curve(t, np.zeros(2))) == 0.0
    assert auc(Curve(t, np.array([1.0, 0.0]))) == 0.5


def _visible(*boxes):
    return [FrameAnnotation(b, True) for b in boxes]


def test_longterm_equal_precision_recall():
    g = box(0, 0, 10, 10)
    # prediction boxes chosen to have IoU 0.5 and 0.7 with g
    p1, p2 = box(0, 0, 10, 5), box(0, 0, 10, 7)
    pr, re, f, _ = longterm_pr_re_f([FramePrediction(p1, 1.0), FramePrediction(p2, 1.0)], _visible(g, g))
    assert (pr, re, f) == pytest.approx((0.6, 0.6, 0.6))


def test_longterm_invisible_only_is_undefined():
    with pytest.raises(EvaluationError, match="recall undefined"):
        longterm_pr_re_f([FramePrediction(box(0, 0, 1, 1), 1.0)], [FrameAnnotation(None, False)])


def test_longterm_three_frame_sweep():
    g = box(0, 0, 10, 10)
    preds = [
        FramePrediction(box(0, 0, 10, 8), 0.9),  # IoU 0.8
        FramePrediction(box(0, 0, 10, 2), 0.5),  # IoU 0.2
        FramePrediction(box(50, 50, 10, 10), 0.1),  # IoU 0
    ]
    got = longterm_pr_re_f(preds, _visible(g, g, g))
    assert got == pytest.approx(brute_longterm(preds, _visible(g, g, g)), abs=1e-15)
    # tau = 0.9 (Pr 0.8, Re 0.8/3) and tau = 0.5 (Pr 0.5, Re 1/3) both give F = 0.4;
    # the tie goes to the lower threshold
    assert got == pytest.approx((0.5, 1 / 3, 0.4, 0.5))


@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)), min_size=1, max_size=20))
def test_longterm_full_confidence_property(pairs):
    g = box(0, 0, 10, 10)
    preds = [FramePrediction(box(0, 0, 10 * a, 10 * b), 1.0) for a, b in pairs]
    pr, re, f, _ = longterm_pr_re_f(preds, _visible(*[g] * len(pairs)))
    mean_iou = np.mean([a * b for a, b in pairs])
    assert pr == pytest.approx(re, abs=1e-12)
    assert f == pytest.approx(mean_iou, abs=1e-12)


def test_perfect_and_missed_predictions():
    gts = _visible(*[box(10 * i, 5, 20, 30) for i in range(5)])
    perfect = evaluate_sequence([FramePrediction(g.bbox) for g in gts], gts)
    assert (perfect.pr, perfect.npr, perfect.sr) == (1.0, 1.0, pytest.approx(100 / 101))
    missed = evaluate_sequence([FramePrediction(box(500, 500, 20, 30)) for _ in gts], gts)
    assert missed.pr == 0.0 and missed.sr == 0.0


def test_invisible_frames_excluded_from_shortterm():
    g = box(0, 0, 10, 10)
    gts = [FrameAnnotation(g, True), FrameAnnotation(None, False)]
    preds = [FramePrediction(g), FramePrediction(box(90, 90, 5, 5))]
    m = evaluate_sequence(preds, gts)
    assert m.n_frames == 1 and m.pr == 1.0
    with pytest.raises(EvaluationError, match="no evaluable frames"):
        evaluate_sequence(preds[1:], gts[1:])


@pytest.mark.parametrize("seed", range(5))
def test_ten_frame_sequence_matches_brute_force(seed):
    preds, gts = random_sequence(seed, 10)
    m = evaluate_sequence(preds, gts, "longterm")
    ref = brute_shortterm(preds, gts)
    assert (m.pr, m.npr, m.sr) == pytest.approx((ref["pr"], ref["npr"], ref["sr"]), abs=1e-12)
    assert m.f_score == pytest.approx(brute_longterm(preds, gts)[2], abs=1e-12)


def test_evaluate_boxes_agrees_with_sequence_path():
    preds, gts = random_sequence(9, 40, p_invisible=0.0, p_missing=0.0)
    a = evaluate_boxes(np.array([p.bbox.as_tuple() for p in preds]), np.array([g.bbox.as_tuple() for g in gts]))
    b = evaluate_sequence(preds, gts)
    assert a.scalars() == b.scalars()


def test_aggregate_singleton_and_duplicates():
    preds, gts = random_sequence(1, 30)
    m = evaluate_sequence(preds, gts, "longterm")
    for mode in ("frames", "uniform"):
        assert aggregate([m], mode).scalars() == pytest.approx(m.scalars())
        assert aggregate([m, m], mode).scalars() == pytest.approx(m.scalars())
    with pytest.raises(EvaluationError):
        aggregate([])


def test_aggregate_frames_matches_repooled_frames():
    seqs = [random_sequence(s, n) for s, n in ((2, 7), (3, 25), (4, 60))]
    reports = [evaluate_sequence(p, g, "longterm") for p, g in seqs]
    pooled_preds = [x for p, _ in seqs for x in p]
    pooled_gts = [x for _, g in seqs for x in g]
    agg = aggregate(reports, "frames")
    ref = brute_shortterm(pooled_preds, pooled_gts)
    assert (agg.pr, agg.npr, agg.sr) == pytest.approx((ref["pr"], ref["npr"], ref["sr"]), abs=1e-12)
    assert agg.f_score == pytest.approx(brute_longterm(pooled_preds, pooled_gts)[2], abs=1e-12)
    uni = aggregate(reports, "uniform")
    assert uni.sr == pytest.approx(np.mean([r.sr for r in reports]), abs=1e-15)


@pytest.mark.parametrize(
    "separate, unified, expected",
    [([65, 24, 38], 93, -26.77), ([76, 28, 44], 108, -27.03), ([10, 10], 20, 0.0)],
)
def test_time_savings(separate, unified, expected):
    assert time_savings(separate, unified) == pytest.approx(expected, abs=0.01)


def test_time_savings_rejects_nonpositive():
    with pytest.raises(ValueError):
        time_savings([10, 0], 5)
    with pytest.raises(ValueError):
        time_savings([10], -1)
    with pytest.raises(ValueError):
        time_savings([], 1)
