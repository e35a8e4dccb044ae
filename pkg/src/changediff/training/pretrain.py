"""Building-segmentation UNet used to initialise the change network's encoder."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import TrainConfig
from ..errors import DivergenceError
from ..model.layers import DoubleConv, UpConv
from ..model.network import UNetEncoder, normalize_image
from .loop import iter_batches, set_determinism


class SegmentationUNet(nn.Module):
    """Single-image UNet producing one building logit per pixel."""

    def __init__(self, channels):
        super().__init__()
        self.encoder = UNetEncoder(channels)
        L = len(channels)
        self.up = nn.ModuleList(UpConv(channels[k + 1], channels[k]) for k in range(L - 1))
        self.fuse = nn.ModuleList(DoubleConv(2 * channels[k], channels[k]) for k in range(L - 1))
        self.head = nn.Conv2d(channels[0], 1, 1)

    def forward(self, x):
        feats = self.encoder(x)
        y = feats[-1]
        for k in range(len(feats) - 2, -1, -1):
            y = self.fuse[k](torch.cat([self.up[k](y), feats[k]], dim=1))
        return self.head(y)


def segmentation_loss(logits, target):
    bce = F.binary_cross_entropy_with_logits(logits, target)
    p = torch.sigmoid(logits)
    dice = 1 - (2 * (p * target).sum() + 1) / (p.sum() + target.sum() + 1)
    return bce + dice


def pretrain_segmentation_backbone(records, channels, train_config: TrainConfig, post_mix_ratio=0.2,
                                   return_model=False):
    """Train a binary building UNet; returns its encoder ``state_dict``.

    Each sample shows the pre-disaster image, except with probability
    ``post_mix_ratio`` where the post-disaster image is shown instead.
    """
    if not records:
        raise ValueError("empty pretraining set")
    if not 0 <= post_mix_ratio <= 1:
        raise ValueError("post_mix_ratio must lie in [0, 1]")
    set_determinism(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    model = SegmentationUNet(tuple(channels))
    opt = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    used_post = 0
    for epoch in range(train_config.epochs):
        for g in opt.param_groups:
            g["lr"] = train_config.lr_at(epoch)
        order = rng.permutation(len(records))
        for idx in iter_batches(order, train_config.batch_size):
            batch = [records[i] for i in idx]
            take_post = rng.random(len(batch)) < post_mix_ratio
            used_post += int(take_post.sum())
            imgs = np.stack([r.post_image if p else r.pre_image for r, p in zip(batch, take_post)])
            x = normalize_image(imgs)
            y = torch.from_numpy(np.stack([(r.label_mask > 0) for r in batch])).float().unsqueeze(1)
            loss = segmentation_loss(model(x), y)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite pretraining loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
    model.post_samples_used = used_post
    state = {k: v.detach().clone() for k, v in model.encoder.state_dict().items()}
    return (state, model) if return_model else state
