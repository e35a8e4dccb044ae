"""Siamese UNet encoder + per-level transformer difference + hierarchical decoder."""
from __future__ import annotations

from typing import List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from ..errors import DimensionError
from .layers import DecoderLayer, DoubleConv, EncoderLayer, UpConv


def normalize_image(image):
    """Map 8-bit RGB to [-1, 1] per channel: ``(v / 255 - 0.5) / 0.5``.

    Accepts ``(H, W, 3)`` / ``(B, H, W, 3)`` uint8 arrays or tensors and returns a
    float32 tensor in channels-first layout.
    """
    # copy: decoded images may be read-only buffers
    t = image if torch.is_tensor(image) else torch.from_numpy(np.array(image))
    if t.ndim == 3:
        t = t.unsqueeze(0)
    t = t.permute(0, 3, 1, 2).to(torch.float32)
    return (t / 255.0 - 0.5) / 0.5


class UNetEncoder(nn.Module):
    """Plain UNet contracting path: one double-conv block per level, max-pool between."""

    def __init__(self, channels, in_channels=3):
        super().__init__()
        blocks = []
        prev = in_channels
        for c in channels:
            blocks.append(DoubleConv(prev, c))
            prev = c
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x) -> List[torch.Tensor]:
        feats = []
        for k, block in enumerate(self.blocks):
            if k > 0:
                x = F.max_pool2d(x, 2)
            x = block(x)
            feats.append(x)
        return feats


class TransformerDifference(nn.Module):
    """Feature-domain difference for one pyramid level.

    Both feature maps are tokenized with shared weights, passed through the same
    transformer encoder, and differenced as ``|enc(pre) - enc(post)|``. A
    cross-attention decoder whose queries are the tokens of the raw spatial
    difference maps the result back to a feature map, which is added to the
    plain absolute difference.
    """

    def __init__(self, channels, dim, depth, heads, mlp_ratio, patch, grid):
        super().__init__()
        self.patch = patch
        self.tokenize = nn.Conv2d(channels, dim, patch, stride=patch)
        self.pos = nn.Parameter(torch.zeros(1, dim, grid, grid))
        nn.init.trunc_normal_(self.pos, std=0.02)
        self.encoder = nn.ModuleList(EncoderLayer(dim, heads, mlp_ratio) for _ in range(depth))
        self.encoder_norm = nn.LayerNorm(dim)
        self.decoder = nn.ModuleList(DecoderLayer(dim, heads, mlp_ratio) for _ in range(depth))
        self.decoder_norm = nn.LayerNorm(dim)
        self.untokenize = nn.ConvTranspose2d(dim, channels, patch, stride=patch)

    def _tokens(self, f):
        t = self.tokenize(f)
        pos = self.pos
        if pos.shape[-2:] != t.shape[-2:]:
            pos = F.interpolate(pos, size=t.shape[-2:], mode="bilinear", align_corners=False)
        t = t + pos
        return t.flatten(2).transpose(1, 2), t.shape[-2:]

    def encode(self, f):
        x, _ = self._tokens(f)
        for layer in self.encoder:
            x = layer(x)
        return self.encoder_norm(x)

    def difference_tokens(self, f_pre, f_post):
        return torch.abs(self.encode(f_pre) - self.encode(f_post))

    def forward(self, f_pre, f_post, return_tokens=False):
        if f_pre.shape[-1] % self.patch or f_pre.shape[-2] % self.patch:
            raise DimensionError(
                f"feature map {tuple(f_pre.shape[-2:])} not divisible by token patch {self.patch}"
            )
        plain = torch.abs(f_pre - f_post)
        diff = self.difference_tokens(f_pre, f_post)
        q, grid = self._tokens(plain)
        for layer in self.decoder:
            q = layer(q, diff)
        q = self.decoder_norm(q)
        b, n, d = q.shape
        out = plain + self.untokenize(q.transpose(1, 2).reshape(b, d, *grid))
        if return_tokens:
            return out, diff
        return out


class HierarchicalDecoder(nn.Module):
    """Coarse-to-fine: upsample, concatenate with the next finer difference map, fuse."""

    def __init__(self, channels, num_classes, conv_after_merge=False):
        super().__init__()
        L = len(channels)
        self.up = nn.ModuleList(UpConv(channels[k + 1], channels[k]) for k in range(L - 1))
        self.fuse = nn.ModuleList(DoubleConv(2 * channels[k], channels[k]) for k in range(L - 1))
        if conv_after_merge:
            self.post_merge = nn.ModuleList(DoubleConv(channels[k], channels[k]) for k in range(L - 1))
        else:
            self.post_merge = None
        self.head = nn.Conv2d(channels[0], num_classes, 1)

    def forward(self, diffs):
        x = diffs[-1]
        for k in range(len(diffs) - 2, -1, -1):
            x = self.up[k](x)
            x = self.fuse[k](torch.cat([x, diffs[k]], dim=1))
            if self.post_merge is not None:
                x = self.post_merge[k](x)
        return self.head(x)


class ChangeNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = UNetEncoder(config.channels)
        self.encoder_post = None if config.shared_encoder else UNetEncoder(config.channels)
        blocks = {}
        if config.transformer_depth > 0:
            for k in config.active_transformer_levels:
                p = config.patch_size(k)
                blocks[str(k)] = TransformerDifference(
                    channels=config.channels[k],
                    dim=config.level_token_dim(k),
                    depth=config.transformer_depth,
                    heads=config.attention_heads,
                    mlp_ratio=config.mlp_ratio,
                    patch=p,
                    grid=config.image_size // 2**k // p,
                )
        self.diff_blocks = nn.ModuleDict(blocks)
        self.decoder = HierarchicalDecoder(config.channels, config.num_classes, config.conv_after_merge)

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        s = self.config.stride
        if x.shape[-1] % s or x.shape[-2] % s:
            raise DimensionError(f"input size {tuple(x.shape[-2:])} not divisible by {s}")

    def encode(self, x, post=False):
        """Feature pyramid, finest level first."""
        if x.ndim == 3:
            x = x.unsqueeze(0)
        self._check_input(x)
        enc = self.encoder_post if (post and self.encoder_post is not None) else self.encoder
        return enc(x)

    def transformer_difference(self, f_pre, f_post, level, return_tokens=False):
        if f_pre.shape != f_post.shape:
            raise DimensionError(f"pre/post feature shapes differ: {tuple(f_pre.shape)} vs {tuple(f_post.shape)}")
        block = self.diff_blocks[str(level)] if str(level) in self.diff_blocks else None
        if block is None:
            out = torch.abs(f_pre - f_post)
            return (out, None) if return_tokens else out
        return block(f_pre, f_post, return_tokens=return_tokens)

    def difference_pyramid(self, pre, post, return_tokens=False):
        fp = self.encode(pre)
        fq = self.encode(post, post=True)
        if fp[0].shape != fq[0].shape:
            raise DimensionError("pre and post images differ in shape")
        diffs, tokens = [], []
        for k in range(self.config.levels):
            d, t = self.transformer_difference(fp[k], fq[k], k, return_tokens=True)
            diffs.append(d)
            tokens.append(t)
        return (diffs, tokens) if return_tokens else diffs

    def hierarchical_decode(self, diffs):
        if len(diffs) != self.config.levels:
            raise DimensionError(f"expected {self.config.levels} pyramid levels, got {len(diffs)}")
        for k, d in enumerate(diffs):
            if d.shape[1] != self.config.channels[k]:
                raise DimensionError(f"level {k} has {d.shape[1]} channels, expected {self.config.channels[k]}")
            if k and (d.shape[-1] * 2 != diffs[k - 1].shape[-1] or d.shape[-2] * 2 != diffs[k - 1].shape[-2]):
                raise DimensionError(f"level {k} spatial size does not halve the previous level")
        return self.decoder(diffs)

    def forward(self, pre, post):
        """Per-pixel class logits ``(B, num_classes, H, W)``."""
        return self.hierarchical_decode(self.difference_pyramid(pre, post))

    def encoder_state_dict(self):
        return {k: v.clone() for k, v in self.encoder.state_dict().items()}

    def load_encoder_state_dict(self, state):
        self.encoder.load_state_dict(state)
        if self.encoder_post is not None:
            self.encoder_post.load_state_dict(state)


def build_model(config: ModelConfig, seed: Optional[int] = None) -> ChangeNet:
    if seed is not None:
        torch.manual_seed(seed)
    return ChangeNet(config)


def predict_masks(logits):
    """Argmax damage mask and its building/background localization mask.

    ``torch.argmax`` returns the first maximal index, so ties go to the lower class.
    """
    logits = torch.as_tensor(logits)
    damage = torch.argmax(logits, dim=-3)
    loc = (damage > 0).to(torch.uint8)
    return damage.cpu().numpy().astype("int64"), loc.cpu().numpy()
