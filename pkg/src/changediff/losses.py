"""Class-weighted focal + dice objective and the two ablation losses.

Inputs are probability or logit tensors shaped ``(C, H, W)`` or ``(B, C, H, W)``
and integer targets shaped ``(H, W)`` or ``(B, H, W)``. Numpy arrays are
accepted and converted. Every function returns a scalar tensor so that it can
be backpropagated.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import LossConfig
from .errors import DimensionError

PROB_CLAMP = 1e-7
DICE_SMOOTH = 1.0


def _batched(probs, target):
    probs = torch.as_tensor(probs)
    target = torch.as_tensor(target)
    if probs.ndim == 3:
        probs = probs.unsqueeze(0)
    if target.ndim == 2:
        target = target.unsqueeze(0)
    if probs.ndim != 4 or target.shape != (probs.shape[0],) + tuple(probs.shape[2:]):
        raise DimensionError(f"probabilities {tuple(probs.shape)} and target {tuple(target.shape)} disagree")
    return probs, target.long()


def _check_class(class_index, num_classes):
    if not 0 <= class_index < num_classes:
        raise IndexError(f"class index {class_index} outside [0, {num_classes})")


def focal_loss(probabilities, target, class_index, gamma=2.0):
    """One-vs-rest focal loss for one class, averaged over pixels.

    ``p`` is the probability of the correct binary outcome (class vs not-class).
    """
    probs, target = _batched(probabilities, target)
    _check_class(class_index, probs.shape[1])
    pc = probs[:, class_index]
    p = torch.where(target == class_index, pc, 1.0 - pc)
    p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return (-((1.0 - p) ** gamma) * torch.log(p)).mean()


def dice_loss(probabilities, target, class_index, smooth=DICE_SMOOTH):
    probs, target = _batched(probabilities, target)
    _check_class(class_index, probs.shape[1])
    p = probs[:, class_index]
    t = (target == class_index).to(p.dtype)
    return 1.0 - (2.0 * (p * t).sum() + smooth) / (p.sum() + t.sum() + smooth)


def _softmax(logits):
    logits = torch.as_tensor(logits)
    if logits.ndim == 3:
        logits = logits.unsqueeze(0)
    if torch.isnan(logits).any():
        raise ValueError("NaN in logits")
    return F.softmax(logits, dim=1)


def ordinal_loss(logits, target):
    """MSE between expected and true damage level over building pixels.

    Levels 1..4 are rescaled to [0, 1] via ``(level - 1) / 3``; the expectation
    uses the softmax restricted to the damage classes.
    """
    probs, target = _batched(_softmax(logits), target)
    if probs.shape[1] != 5:
        raise ValueError("ordinal loss needs the 5-class damage configuration")
    building = target >= 1
    if not building.any():
        return probs.sum() * 0.0
    levels = torch.arange(4, dtype=probs.dtype, device=probs.device) / 3.0
    dmg = probs[:, 1:]
    dmg = dmg / dmg.sum(dim=1, keepdim=True).clamp_min(PROB_CLAMP)
    expected = (dmg * levels.view(1, 4, 1, 1)).sum(dim=1)
    true_level = (target.to(probs.dtype) - 1.0) / 3.0
    return ((expected - true_level)[building] ** 2).mean()


def buildings_only_ce(logits, target):
    """Cross-entropy averaged over pixels with a building label only."""
    logits = torch.as_tensor(logits)
    if logits.ndim == 3:
        logits = logits.unsqueeze(0)
    _, target = _batched(logits, target)
    building = target >= 1
    if not building.any():
        return logits.sum() * 0.0
    ce = F.cross_entropy(logits, target, reduction="none")
    return ce[building].mean()


def combined_loss(logits, target, config: LossConfig):
    """``sum_i w_i * (focal_i + alpha * dice_i)``, plus the ordinal term if selected."""
    if config.variant == "buildings_only_ce":
        return buildings_only_ce(logits, target)
    probs, target = _batched(_softmax(logits), target)
    if probs.shape[1] != len(config.class_weights):
        raise DimensionError(f"{len(config.class_weights)} class weights for {probs.shape[1]} classes")
    if target.numel() and (target.min() < 0 or target.max() >= probs.shape[1]):
        raise ValueError("target labels out of range")
    total = probs.sum() * 0.0
    for i, w in enumerate(config.class_weights):
        if w == 0:
            continue
        term = focal_loss(probs, target, i, config.gamma)
        if config.alpha:
            term = term + config.alpha * dice_loss(probs, target, i)
        total = total + w * term
    if config.variant == "focal_dice_ordinal":
        total = total + config.ordinal_weight * ordinal_loss(logits, target)
    return total
