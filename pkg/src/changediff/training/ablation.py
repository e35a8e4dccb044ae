"""One training run per value along a single design axis."""
from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass
from typing import List, Sequence

from ..config import LossConfig, ModelConfig, TrainConfig
from ..model import build_model
from .loop import evaluate_model, split_dataset, train

AXES = ("transformer_depth", "transformer_levels", "loss_variant", "conv_after_merge")


@dataclass
class AblationRow:
    value: object
    iou: float
    f1: float
    score: float


def configs_for(axis, value, model_config: ModelConfig, loss_config: LossConfig):
    if axis == "transformer_depth":
        return dataclasses.replace(model_config, transformer_depth=int(value)), loss_config
    if axis == "transformer_levels":
        return dataclasses.replace(model_config, transformer_levels=tuple(int(v) for v in value)), loss_config
    if axis == "loss_variant":
        return model_config, dataclasses.replace(loss_config, variant=str(value))
    if axis == "conv_after_merge":
        return dataclasses.replace(model_config, conv_after_merge=bool(value)), loss_config
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")


def ablation_run(model_config: ModelConfig, loss_config: LossConfig, train_config: TrainConfig,
                 axis: str, values: Sequence, dataset, device=None) -> List[AblationRow]:
    """Train and evaluate one model per value under identical seeds and budgets."""
    if axis not in AXES:
        raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")
    if not values:
        raise ValueError("ablation grid is empty")
    train_set, val_set = split_dataset(dataset, train_config.val_fraction, train_config.seed)
    if not val_set:
        raise ValueError("ablation needs a validation set")
    rows = []
    for v in values:
        mc, lc = configs_for(axis, v, model_config, loss_config)
        model = build_model(mc, seed=train_config.seed).to(device or "cpu")
        train(model, (train_set, val_set), train_config, lc)
        report, _ = evaluate_model(model, val_set, train_config.batch_size)
        rows.append(AblationRow(v, report.iou_macro, report.f1_class, report.score))
    return rows


def _fmt_value(v):
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v) if v else "none"
    return str(v)


def ablation_to_csv(axis, rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "iou", "f1"])
    for r in rows:
        w.writerow([_fmt_value(r.value), f"{r.iou:.6f}", f"{r.f1:.6f}"])
    return buf.getvalue()
