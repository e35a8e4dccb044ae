"""Joint geometric and independent photometric augmentation of tile records."""
from __future__ import annotations

import zlib

import numpy as np
from PIL import Image

from ..config import AugmentConfig
from .records import TileRecord


def _rng(seed, record):
    return np.random.default_rng([int(seed), zlib.crc32(record.tile_id.encode())])


def _rescale(arr, factor, nearest):
    """Zoom about the centre by ``factor`` keeping the array size (reflect padding)."""
    h, w = arr.shape[:2]
    nh, nw = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
    if (nh, nw) == (h, w):
        return arr
    mode = Image.NEAREST if nearest else Image.BILINEAR
    if arr.ndim == 2:
        im = Image.fromarray(arr.astype(np.int32), mode="I")
        out = np.asarray(im.resize((nw, nh), Image.NEAREST), dtype=np.int64)
    else:
        out = np.asarray(Image.fromarray(arr).resize((nw, nh), mode))
    if nh >= h:
        r0, c0 = (nh - h) // 2, (nw - w) // 2
        return out[r0:r0 + h, c0:c0 + w].copy()
    pt, pl = (h - nh) // 2, (w - nw) // 2
    pad = ((pt, h - nh - pt), (pl, w - nw - pl)) + ((0, 0),) * (arr.ndim - 2)
    return np.pad(out, pad, mode="symmetric")


def _photometric(rng, img, strength):
    x = img.astype(np.float64)
    b, c, s = rng.uniform(1 - strength, 1 + strength, size=3)
    x = x * b
    mean = x.mean()
    x = (x - mean) * c + mean
    gray = x.mean(axis=2, keepdims=True)
    x = gray + (x - gray) * s
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def geometric(arrays, flip_h=False, flip_v=False, k90=0, scale=1.0):
    """Apply one geometric transform to every array (images and masks alike)."""
    out = []
    for a in arrays:
        nearest = a.ndim == 2
        if scale != 1.0:
            a = _rescale(a, scale, nearest)
        if flip_h:
            a = a[:, ::-1]
        if flip_v:
            a = a[::-1]
        if k90:
            a = np.rot90(a, k90)
        out.append(np.ascontiguousarray(a))
    return out


def augment(record: TileRecord, seed: int, toggles: AugmentConfig) -> TileRecord:
    """Deterministic per ``(seed, record.tile_id)``; the mask never sees photometric changes."""
    if not toggles.any:
        return record
    rng = _rng(seed, record)
    flip_h = bool(toggles.flips and rng.random() < 0.5)
    flip_v = bool(toggles.flips and rng.random() < 0.5)
    k90 = int(rng.integers(4)) if toggles.rot90 else 0
    scale = float(rng.uniform(1 - toggles.scale_jitter, 1 + toggles.scale_jitter)) if toggles.scale_jitter > 0 else 1.0
    pre, post, mask = geometric([record.pre_image, record.post_image, record.label_mask], flip_h, flip_v, k90, scale)
    if toggles.photometric > 0:
        pre = _photometric(rng, pre, toggles.photometric)
        post = _photometric(rng, post, toggles.photometric)
    return record.replace(pre_image=pre, post_image=post, label_mask=mask)
