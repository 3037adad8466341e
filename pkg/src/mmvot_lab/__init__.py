"""Evaluation, benchmark assembly, and toy continual-unification experiments
for multi-modal (RGB + thermal/depth/event) single-object tracking."""

from .dataset_io import DataError, TaskTag
from .metrics import BBox, EvaluationError, MetricSet, evaluate_sequence, time_savings

__all__ = ["BBox", "DataError", "EvaluationError", "MetricSet", "TaskTag", "evaluate_sequence", "time_savings"]
__version__ = "0.1.0"
