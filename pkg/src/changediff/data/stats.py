from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

WEIGHT_MIN = 0.01
WEIGHT_MAX = 0.7
# a class covering 2.7 % of pixels receives weight 0.1
INVERSE_FREQUENCY_SCALE = 0.27


def class_pixel_distribution(records, num_classes: Optional[int] = None) -> List[float]:
    """Percentage of labelled pixels per class across all records."""
    if not records:
        raise ValueError("cannot compute a distribution over no records")
    if num_classes is None:
        num_classes = max(r.num_classes for r in records)
    counts = np.zeros(num_classes, dtype=np.int64)
    for r in records:
        counts += np.bincount(r.label_mask.ravel(), minlength=num_classes)[:num_classes]
    total = counts.sum()
    if total == 0:
        raise ValueError("records contain no pixels")
    return (100.0 * counts / total).tolist()


def derive_class_weights(distribution: Sequence[float], scale=INVERSE_FREQUENCY_SCALE,
                         lo=WEIGHT_MIN, hi=WEIGHT_MAX, decimals=2) -> List[float]:
    """Inverse-frequency weights from a percentage distribution, clipped and rounded.

    ``w_i = clip(scale / p_i, lo, hi)`` rounded to ``decimals``; classes with
    zero frequency get ``hi``.
    """
    p = np.asarray(distribution, dtype=np.float64)
    if p.ndim != 1 or p.size < 2 or not np.isfinite(p).all() or (p < 0).any() or p.sum() <= 0:
        raise ValueError(f"malformed class distribution: {distribution}")
    # frequencies below scale / hi clip to hi; bounding them avoids overflow
    w = scale / np.maximum(p, scale / hi)
    return [round(float(v), decimals) for v in np.clip(w, lo, hi)]
