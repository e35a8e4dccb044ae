from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Dict

import numpy as np

from ..errors import DimensionError


@dataclass
class TileRecord:
    """One co-registered pre/post image pair and its per-pixel label mask."""

    tile_id: str
    event_id: str
    pre_image: np.ndarray  # (H, W, 3) uint8
    post_image: np.ndarray  # (H, W, 3) uint8
    label_mask: np.ndarray  # (H, W) int64
    resolution_m_per_px: float = 0.8
    num_classes: int = 5
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.pre_image = np.asarray(self.pre_image, dtype=np.uint8)
        self.post_image = np.asarray(self.post_image, dtype=np.uint8)
        self.label_mask = np.asarray(self.label_mask, dtype=np.int64)
        h, w = self.label_mask.shape
        for name, img in (("pre_image", self.pre_image), ("post_image", self.post_image)):
            if img.shape != (h, w, 3):
                raise DimensionError(f"{self.tile_id}: {name} {img.shape} does not match label ({h}, {w})")
        if self.label_mask.size and (self.label_mask.min() < 0 or self.label_mask.max() >= self.num_classes):
            raise ValueError(f"{self.tile_id}: labels outside [0, {self.num_classes})")
        if self.resolution_m_per_px <= 0:
            raise ValueError("resolution must be positive")

    @property
    def shape(self):
        return self.label_mask.shape

    def replace(self, **changes) -> "TileRecord":
        return replace(self, **changes)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.pre_image, self.post_image, self.label_mask):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def crop_tiles(record: TileRecord, size: int):
    """Split a record into non-overlapping ``size`` x ``size`` patches, row-major."""
    h, w = record.shape
    if h % size or w % size:
        raise DimensionError(f"{record.tile_id}: {h}x{w} is not a multiple of {size}")
    out = []
    for r in range(0, h, size):
        for c in range(0, w, size):
            sl = (slice(r, r + size), slice(c, c + size))
            out.append(
                record.replace(
                    tile_id=f"{record.tile_id}_r{r // size}c{c // size}",
                    pre_image=record.pre_image[sl].copy(),
                    post_image=record.post_image[sl].copy(),
                    label_mask=record.label_mask[sl].copy(),
                )
            )
    return out
