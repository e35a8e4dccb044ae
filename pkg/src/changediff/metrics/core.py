"""Pixel-level scoring: confusion matrices, per-class F1/IOU, xView2 composite."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .. import kernels
from ..errors import DimensionError

AGGREGATE_MODES = ("harmonic", "arithmetic")


def confusion_matrix(pred, gt, num_classes, use_numba=None):
    """Rows are ground truth, columns are predictions."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.size == 0:
        return np.zeros((num_classes, num_classes), dtype=np.int64)
    for name, m in (("prediction", pred), ("ground truth", gt)):
        if m.min() < 0 or m.max() >= num_classes:
            raise ValueError(f"{name} labels outside [0, {num_classes})")
    return kernels.confusion_counts(gt, pred, num_classes, use_numba=use_numba)


def _tp_fp_fn(confusion, class_index):
    confusion = np.asarray(confusion)
    if not 0 <= class_index < confusion.shape[0]:
        raise IndexError(f"class index {class_index} outside [0, {confusion.shape[0]})")
    tp = int(confusion[class_index, class_index])
    fp = int(confusion[:, class_index].sum()) - tp
    fn = int(confusion[class_index, :].sum()) - tp
    return tp, fp, fn


def class_f1(confusion, class_index):
    tp, fp, fn = _tp_fp_fn(confusion, class_index)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def iou(confusion, class_index):
    tp, fp, fn = _tp_fp_fn(confusion, class_index)
    denom = tp + fp + fn
    return tp / denom if denom else 0.0


def iou_macro(confusion):
    """Mean IOU over classes that occur in the ground truth."""
    confusion = np.asarray(confusion)
    present = [c for c in range(confusion.shape[0]) if confusion[c].sum() > 0]
    if not present:
        return 0.0
    return float(np.mean([iou(confusion, c) for c in present]))


def f1_loc(pred_loc, gt_loc):
    """Dice/F1 of the building class; two empty masks score 1."""
    x = np.asarray(pred_loc)
    y = np.asarray(gt_loc)
    if x.shape != y.shape:
        raise DimensionError(f"localization masks differ in shape: {x.shape} vs {y.shape}")
    if not (np.isin(x, (0, 1)).all() and np.isin(y, (0, 1)).all()):
        raise ValueError("localization masks must be binary")
    x = x.astype(bool)
    y = y.astype(bool)
    return _f1_from_counts(int(np.count_nonzero(x & y)), int(np.count_nonzero(x)), int(np.count_nonzero(y)))


def _f1_from_counts(inter, nx, ny):
    if nx + ny == 0:
        return 1.0
    return 2 * inter / (nx + ny)


def loc_f1_from_confusion(confusion):
    """Building-vs-background F1 where every class > 0 counts as building."""
    c = np.asarray(confusion)
    inter = int(c[1:, 1:].sum())
    return _f1_from_counts(inter, int(c[:, 1:].sum()), int(c[1:, :].sum()))


def aggregate_f1(class_f1s: Sequence[float], mode: str = "harmonic") -> float:
    vals = [float(v) for v in class_f1s]
    if not vals:
        raise ValueError("cannot aggregate an empty F1 list")
    if mode == "harmonic":
        if any(v == 0 for v in vals):
            return 0.0
        return len(vals) / sum(1.0 / v for v in vals)
    if mode == "arithmetic":
        return sum(vals) / len(vals)
    raise ValueError(f"unknown aggregate mode {mode!r}")


def xview2_score(f1_loc_value, f1_class_value):
    for name, v in (("f1_loc", f1_loc_value), ("f1_class", f1_class_value)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return 0.3 * f1_loc_value + 0.7 * f1_class_value


@dataclass
class EvalReport:
    confusion: np.ndarray
    class_f1: List[float]
    f1_loc: float
    f1_class: float
    score: float
    iou_per_class: List[float]
    iou_macro: float
    aggregate_mode: str = "harmonic"
    aggregated_classes: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def num_classes(self):
        return self.confusion.shape[0]

    @classmethod
    def from_confusion(cls, confusion, mode=None, aggregated_classes=None):
        """Derive every field from an accumulated confusion matrix.

        Damage configurations (more than two classes) aggregate classes 1..C-1
        harmonically; binary ones aggregate both classes, arithmetic by default.
        """
        confusion = np.asarray(confusion, dtype=np.int64)
        c = confusion.shape[0]
        if aggregated_classes is None:
            aggregated_classes = tuple(range(1, c)) if c > 2 else (0, 1)
        if mode is None:
            mode = "harmonic" if c > 2 else "arithmetic"
        f1s = [class_f1(confusion, k) for k in range(c)]
        f1c = aggregate_f1([f1s[k] for k in aggregated_classes], mode)
        floc = loc_f1_from_confusion(confusion)
        return cls(
            confusion=confusion,
            class_f1=f1s,
            f1_loc=floc,
            f1_class=f1c,
            score=xview2_score(floc, f1c),
            iou_per_class=[iou(confusion, k) for k in range(c)],
            iou_macro=iou_macro(confusion),
            aggregate_mode=mode,
            aggregated_classes=tuple(aggregated_classes),
        )


def evaluate_masks(pairs: Iterable[Tuple[np.ndarray, np.ndarray]], num_classes, mode=None, use_numba=None):
    """Accumulate one confusion matrix over ``(pred, gt)`` tiles and report on it."""
    total = None
    for pred, gt in pairs:
        cm = confusion_matrix(pred, gt, num_classes, use_numba=use_numba)
        total = cm if total is None else total + cm
    if total is None:
        raise ValueError("cannot evaluate an empty dataset")
    return EvalReport.from_confusion(total, mode=mode)
