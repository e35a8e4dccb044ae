"""Cross-domain fine-tuning with class merging and re-derived class weights."""
from __future__ import annotations

from typing import Dict, Optional

import numpy as np
import torch

from ..config import FineTuneConfig, LossConfig, TrainConfig
from ..data.stats import class_pixel_distribution, derive_class_weights
from ..errors import ConfigError
from ..model import Checkpoint
from .loop import TrainHistory, train


def merge_classes(mask, class_merge_map: Dict[int, int]):
    mask = np.asarray(mask)
    if mask.size == 0:
        return mask.copy()
    present = np.unique(mask)
    missing = [int(v) for v in present if int(v) not in class_merge_map]
    if missing:
        raise KeyError(f"labels {missing} have no entry in the merge map")
    lut = np.zeros(int(present.max()) + 1, dtype=mask.dtype)
    for k, v in class_merge_map.items():
        if k < lut.size:
            lut[k] = v
    return lut[mask]


def merge_records(records, class_merge_map):
    k = max(class_merge_map.values()) + 1
    return [r.replace(label_mask=merge_classes(r.label_mask, class_merge_map), num_classes=k) for r in records]


def reshape_head(checkpoint: Checkpoint, class_merge_map: Dict[int, int]) -> Checkpoint:
    """Collapse the classifier rows: each new class takes the mean of its source rows."""
    old = checkpoint.model_config.num_classes
    if sorted(class_merge_map) != list(range(old)):
        raise ConfigError(f"merge map must cover classes 0..{old - 1}")
    new = max(class_merge_map.values()) + 1
    state = dict(checkpoint.state)
    for name in ("decoder.head.weight", "decoder.head.bias"):
        w = state[name]
        rows = []
        for j in range(new):
            src = [i for i in range(old) if class_merge_map[i] == j]
            rows.append(w[src].mean(dim=0))
        state[name] = torch.stack(rows).contiguous()
    cfg = checkpoint.model_config.__class__.from_dict({**checkpoint.model_config.to_dict(), "num_classes": new})
    return Checkpoint(state, cfg, checkpoint.loss_config, checkpoint.train_config, dict(checkpoint.extra))


def target_loss_config(records, num_classes, base: Optional[LossConfig] = None, weights=None) -> LossConfig:
    base = base or LossConfig()
    if weights is None:
        weights = derive_class_weights(class_pixel_distribution(records, num_classes))
    variant = base.variant if (base.variant != "focal_dice_ordinal" or num_classes == 5) else "focal_dice"
    return LossConfig(tuple(weights), base.alpha, base.gamma, variant, base.ordinal_weight)


def prepare_target(checkpoint: Checkpoint, target_records, config: FineTuneConfig):
    """Head reshape and label merging shared by fine-tuning and zero-shot evaluation."""
    mmap = config.class_merge_map
    if mmap is not None and max(mmap.values()) + 1 < checkpoint.model_config.num_classes:
        checkpoint = reshape_head(checkpoint, mmap)
    k = checkpoint.model_config.num_classes
    records = list(target_records)
    if mmap is not None and any(r.num_classes > k for r in records):
        records = merge_records(records, mmap)
    if any(r.num_classes != k for r in records):
        raise ConfigError(f"target records do not match the checkpoint's {k} classes")
    return checkpoint, records


def fine_tune(checkpoint: Checkpoint, target_dataset, config: FineTuneConfig,
              loss_config: Optional[LossConfig] = None, device=None):
    """All layers trainable at a fixed low learning rate on the target domain.

    ``target_dataset`` is a record list or a ``(train, val)`` pair.
    """
    if isinstance(target_dataset, tuple) and len(target_dataset) == 2:
        ckpt, tr = prepare_target(checkpoint, target_dataset[0], config)
        _, va = prepare_target(checkpoint, target_dataset[1], config)
        dataset = (tr, va)
        stats_records = tr
    else:
        ckpt, dataset = prepare_target(checkpoint, target_dataset, config)
        stats_records = dataset
    if config.epochs == 0:
        return ckpt, TrainHistory()
    lc = target_loss_config(stats_records, ckpt.model_config.num_classes, loss_config, config.class_weights)
    tc = TrainConfig(
        learning_rate=config.learning_rate,
        scheduler_milestones=(),
        batch_size=config.batch_size,
        epochs=config.epochs,
        val_fraction=config.val_fraction,
        seed=config.seed,
        augment=config.augment,
    )
    model = ckpt.build_model().to(device or "cpu")
    return train(model, dataset, tc, lc)
