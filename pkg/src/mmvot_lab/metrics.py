"""Short-term (PR / NPR / SR) and long-term (Pr / Re / F-score) tracking metrics.

Conventions:

* PR is the fraction of frames whose center error is at most 20 px.
* NPR uses the center offset divided by the ground-truth width/height,
  read at a threshold of 0.20.
* SR is the area under the success curve, i.e. the mean over the 101 IoU
  thresholds 0.00, 0.01, ..., 1.00 of the fraction of frames with IoU
  strictly above the threshold.
* Frames whose ground truth is invisible are dropped from short-term
  statistics. In the long-term protocol they count against precision
  whenever the tracker reports a box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

PR_THRESHOLD_PX = 20.0
NPR_THRESHOLD = 0.20
PR_THRESHOLDS = np.arange(51, dtype=np.float64)  # 0..50 px
NPR_THRESHOLDS = np.arange(51, dtype=np.float64) / 100.0  # 0.00..0.50
SR_THRESHOLDS = np.arange(101, dtype=np.float64) / 100.0  # 0.00..1.00

Protocol = Literal["shortterm", "longterm"]


class EvaluationError(ValueError):
    """Raised for inputs that cannot be scored (empty, misaligned, non-finite)."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite box coordinate in {values}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class FrameAnnotation:
    bbox: BBox | None
    visible: bool

    def __post_init__(self) -> None:
        if self.visible != (self.bbox is not None):
            raise ValueError("a frame is visible exactly when it has a box")


@dataclass(frozen=True)
class FramePrediction:
    bbox: BBox | None
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.bbox is None and self.confidence != 0.0:
            raise ValueError("a missing prediction must have confidence 0")


@dataclass(frozen=True, eq=False)
class Curve:
    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.thresholds, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("thresholds and values must be 1-D and the same length")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly ascending")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("curve values must lie in [0, 1]")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "values", v)

    def at(self, threshold: float) -> float:
        idx = int(np.searchsorted(self.thresholds, threshold))
        if idx >= self.thresholds.size or self.thresholds[idx] != threshold:
            raise KeyError(f"threshold {threshold} is not on the curve")
        return float(self.values[idx])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Curve):
            return NotImplemented
        return np.array_equal(self.thresholds, other.thresholds) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class LongTermFrames:
    """Per-frame long-term inputs kept so that sequence reports can be re-pooled."""

    ious: np.ndarray
    confidences: np.ndarray
    visible: np.ndarray


@dataclass(frozen=True)
class MetricSet:
    pr: float
    npr: float
    sr: float
    pr_curve: Curve
    npr_curve: Curve
    sr_curve: Curve
    n_frames: int
    f_score: float | None = None
    lt_precision: float | None = None
    lt_recall: float | None = None
    lt_threshold: float | None = None
    longterm_frames: LongTermFrames | None = field(default=None, repr=False, compare=False)

    def scalars(self) -> dict[str, float]:
        out = {"pr": self.pr, "npr": self.npr, "sr": self.sr}
        if self.f_score is not None:
            out.update(lt_pr=self.lt_precision, lt_re=self.lt_recall, f_score=self.f_score)
        return out


# -- geometry ---------------------------------------------------------------


def iou(a: BBox, b: BBox) -> float:
    # Areas come from the same rounded edges as the intersection, so identical
    # boxes give exactly 1 and the ratio never exceeds 1.
    ax2, ay2, bx2, by2 = a.x + a.w, a.y + a.h, b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - a.x) * (ay2 - a.y) + (bx2 - b.x) * (by2 - b.y) - inter
    return min(1.0, inter / union)


def center_error(p: BBox, g: BBox) -> float:
    (px, py), (gx, gy) = p.center, g.center
    return math.hypot(px - gx, py - gy)


def norm_center_error(p: BBox, g: BBox) -> float:
    (px, py), (gx, gy) = p.center, g.center
    return math.hypot((px - gx) / g.w, (py - gy) / g.h)


def iou_array(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Row-wise IoU of two (N, 4) arrays of (x, y, w, h)."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    px2, py2 = pred[:, 0] + pred[:, 2], pred[:, 1] + pred[:, 3]
    gx2, gy2 = gt[:, 0] + gt[:, 2], gt[:, 1] + gt[:, 3]
    iw = np.minimum(px2, gx2) - np.maximum(pred[:, 0], gt[:, 0])
    ih = np.minimum(py2, gy2) - np.maximum(pred[:, 1], gt[:, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = (px2 - pred[:, 0]) * (py2 - pred[:, 1]) + (gx2 - gt[:, 0]) * (gy2 - gt[:, 1]) - inter
    return np.minimum(1.0, inter / union)


def center_error_array(pred: np.ndarray, gt: np.ndarray, normalized: bool = False) -> np.ndarray:
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    dx = (pred[:, 0] + pred[:, 2] / 2.0) - (gt[:, 0] + gt[:, 2] / 2.0)
    dy = (pred[:, 1] + pred[:, 3] / 2.0) - (gt[:, 1] + gt[:, 3] / 2.0)
    if normalized:
        dx, dy = dx / gt[:, 2], dy / gt[:, 3]
    return np.hypot(dx, dy)


# -- curves -----------------------------------------------------------------


def precision_curve(errors: Sequence[float] | np.ndarray, thresholds: Sequence[float] | np.ndarray = PR_THRESHOLDS) -> Curve:
    """Fraction of frames with error <= threshold, for each threshold."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise EvaluationError("no evaluable frames")
    if np.any(np.isnan(errors)):
        raise EvaluationError("NaN center error")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    ordered = np.sort(errors)
    counts = np.searchsorted(ordered, thresholds, side="right")
    return Curve(thresholds, counts / errors.size)


def success_curve(ious: Sequence[float] | np.ndarray) -> Curve:
    """Fraction of frames with IoU strictly above each of 0.00..1.00."""
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        raise EvaluationError("no evaluable frames")
    if np.any(~np.isfinite(ious)) or np.any((ious < 0) | (ious > 1)):
        raise EvaluationError("IoU values must lie in [0, 1]")
    ordered = np.sort(ious)
    above = ious.size - np.searchsorted(ordered, SR_THRESHOLDS, side="right")
    return Curve(SR_THRESHOLDS, above / ious.size)


def auc(curve: Curve) -> float:
    """Mean curve value (area under a curve sampled on a uniform grid)."""
    return float(np.mean(curve.values))


# -- long-term --------------------------------------------------------------


def _longterm_from_arrays(ious: np.ndarray, conf: np.ndarray, visible: np.ndarray) -> tuple[float, float, float, float]:
    n_visible = int(visible.sum())
    if n_visible == 0:
        raise EvaluationError("recall undefined: no visible ground-truth frames")
    thresholds = np.union1d(conf, [0.0, 1.0])

    # suffix sums over frames sorted by ascending confidence
    order = np.argsort(conf, kind="stable")
    conf_sorted = conf[order]
    iou_sorted = ious[order]
    vis_iou_sorted = np.where(visible[order], iou_sorted, 0.0)
    suffix_iou = np.concatenate([np.cumsum(iou_sorted[::-1])[::-1], [0.0]])
    suffix_vis = np.concatenate([np.cumsum(vis_iou_sorted[::-1])[::-1], [0.0]])

    start = np.searchsorted(conf_sorted, thresholds, side="left")
    counts = conf.size - start
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(counts > 0, suffix_iou[start] / np.maximum(counts, 1), 0.0)
    recall = suffix_vis[start] / n_visible
    denom = precision + recall
    f = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    best = int(np.argmax(f))
    return float(precision[best]), float(recall[best]), float(f[best]), float(thresholds[best])


def _frame_arrays(preds: Sequence[FramePrediction], gts: Sequence[FrameAnnotation]) -> tuple[np.ndarray, ...]:
    if len(preds) != len(gts):
        raise EvaluationError(f"prediction/annotation length mismatch: {len(preds)} vs {len(gts)}")
    n = len(gts)
    pred_boxes = np.ones((n, 4))
    gt_boxes = np.ones((n, 4))
    has_pred = np.zeros(n, dtype=bool)
    visible = np.zeros(n, dtype=bool)
    conf = np.zeros(n)
    for i, (p, g) in enumerate(zip(preds, gts)):
        conf[i] = p.confidence
        if p.bbox is not None:
            pred_boxes[i] = p.bbox.as_tuple()
            has_pred[i] = True
        if g.visible:
            gt_boxes[i] = g.bbox.as_tuple()  # type: ignore[union-attr]
            visible[i] = True
    return pred_boxes, gt_boxes, has_pred, visible, conf


def longterm_pr_re_f(
    preds: Sequence[FramePrediction], gts: Sequence[FrameAnnotation]
) -> tuple[float, float, float, float]:
    """Maximum F-score over confidence thresholds.

    Returns ``(precision, recall, f_score, threshold)`` at the best threshold;
    ties go to the lowest threshold.
    """
    pred_boxes, gt_boxes, has_pred, visible, conf = _frame_arrays(preds, gts)
    ious = np.where(has_pred & visible, iou_array(pred_boxes, gt_boxes), 0.0)
    return _longterm_from_arrays(ious, conf, visible)


# -- sequence evaluation ----------------------------------------------------


def _shortterm(pred_boxes: np.ndarray, gt_boxes: np.ndarray, has_pred: np.ndarray) -> dict:
    if gt_boxes.shape[0] == 0:
        raise EvaluationError("no evaluable frames")
    ious = np.where(has_pred, iou_array(pred_boxes, gt_boxes), 0.0)
    err = np.where(has_pred, center_error_array(pred_boxes, gt_boxes), np.inf)
    nerr = np.where(has_pred, center_error_array(pred_boxes, gt_boxes, normalized=True), np.inf)
    pr_curve = precision_curve(err, PR_THRESHOLDS)
    npr_curve = precision_curve(nerr, NPR_THRESHOLDS)
    sr_curve = success_curve(ious)
    return dict(
        pr=pr_curve.at(PR_THRESHOLD_PX),
        npr=npr_curve.at(NPR_THRESHOLD),
        sr=auc(sr_curve),
        pr_curve=pr_curve,
        npr_curve=npr_curve,
        sr_curve=sr_curve,
        n_frames=int(gt_boxes.shape[0]),
    )


def evaluate_sequence(
    preds: Sequence[FramePrediction],
    gts: Sequence[FrameAnnotation],
    protocol: Protocol = "shortterm",
) -> MetricSet:
    """Score one sequence. The long-term protocol adds Pr/Re/F to the short-term set."""
    if protocol not in ("shortterm", "longterm"):
        raise ValueError(f"unknown protocol {protocol!r}")
    pred_boxes, gt_boxes, has_pred, visible, conf = _frame_arrays(preds, gts)
    if protocol == "longterm" and not visible.any():
        raise EvaluationError("recall undefined: no visible ground-truth frames")
    fields = _shortterm(pred_boxes[visible], gt_boxes[visible], has_pred[visible])
    if protocol == "longterm":
        ious = np.where(has_pred & visible, iou_array(pred_boxes, gt_boxes), 0.0)
        frames = LongTermFrames(ious, conf, visible)
        pr, re, f, tau = _longterm_from_arrays(ious, conf, visible)
        fields.update(f_score=f, lt_precision=pr, lt_recall=re, lt_threshold=tau, longterm_frames=frames)
    return MetricSet(**fields)


def evaluate_boxes(pred_boxes: np.ndarray, gt_boxes: np.ndarray) -> MetricSet:
    """Short-term scoring of aligned (N, 4) box arrays, all frames visible."""
    pred_boxes = np.asarray(pred_boxes, float)
    gt_boxes = np.asarray(gt_boxes, float)
    if pred_boxes.shape != gt_boxes.shape:
        raise EvaluationError("prediction/annotation length mismatch")
    if not (np.all(np.isfinite(pred_boxes)) and np.all(np.isfinite(gt_boxes))):
        raise EvaluationError("non-finite box coordinate")
    return MetricSet(**_shortterm(pred_boxes, gt_boxes, np.ones(len(gt_boxes), dtype=bool)))


def aggregate(reports: Sequence[MetricSet], weights: Literal["frames", "uniform"] = "frames") -> MetricSet:
    """Combine per-sequence reports.

    ``frames`` pools every frame of every sequence (curves are frame-weighted
    means, long-term scores are recomputed on the pooled frames); ``uniform``
    averages the per-sequence curves and scalars.
    """
    if not reports:
        raise EvaluationError("nothing to aggregate")
    if weights not in ("frames", "uniform"):
        raise ValueError(f"unknown weighting {weights!r}")
    n = np.array([r.n_frames for r in reports], dtype=np.float64)
    w = n / n.sum() if weights == "frames" else np.full(len(reports), 1.0 / len(reports))

    def pooled(attr: str) -> Curve:
        curves = [getattr(r, attr) for r in reports]
        values = np.clip(np.sum([wi * c.values for wi, c in zip(w, curves)], axis=0), 0.0, 1.0)
        return Curve(curves[0].thresholds, values)

    pr_curve, npr_curve, sr_curve = pooled("pr_curve"), pooled("npr_curve"), pooled("sr_curve")
    out = dict(
        pr_curve=pr_curve,
        npr_curve=npr_curve,
        sr_curve=sr_curve,
        n_frames=int(n.sum()),
    )
    if weights == "frames":
        out.update(pr=pr_curve.at(PR_THRESHOLD_PX), npr=npr_curve.at(NPR_THRESHOLD), sr=auc(sr_curve))
    else:
        out.update(
            pr=float(np.mean([r.pr for r in reports])),
            npr=float(np.mean([r.npr for r in reports])),
            sr=float(np.mean([r.sr for r in reports])),
        )
    if all(r.f_score is not None for r in reports):
        if weights == "frames" and all(r.longterm_frames is not None for r in reports):
            frames = LongTermFrames(
                np.concatenate([r.longterm_frames.ious for r in reports]),  # type: ignore[union-attr]
                np.concatenate([r.longterm_frames.confidences for r in reports]),  # type: ignore[union-attr]
                np.concatenate([r.longterm_frames.visible for r in reports]),  # type: ignore[union-attr]
            )
            pr, re, f, tau = _longterm_from_arrays(frames.ious, frames.confidences, frames.visible)
            out.update(f_score=f, lt_precision=pr, lt_recall=re, lt_threshold=tau, longterm_frames=frames)
        else:
            out.update(
                f_score=float(np.mean([r.f_score for r in reports])),
                lt_precision=float(np.mean([r.lt_precision for r in reports])),
                lt_recall=float(np.mean([r.lt_recall for r in reports])),
            )
    return MetricSet(**out)


def time_savings(separate_minutes: Sequence[float], unified_minutes: float) -> float:
    """Signed relative change (%) of one unified pass against the separate passes."""
    values = [*separate_minutes, unified_minutes]
    if not separate_minutes or any(not (math.isfinite(v) and v > 0) for v in values):
        raise ValueError("evaluation times must be positive and finite")
    total = math.fsum(separate_minutes)
    return (unified_minutes - total) / total * 100.0
