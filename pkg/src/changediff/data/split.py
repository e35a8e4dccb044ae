from __future__ import annotations

from collections import defaultdict
from typing import List, Sequence, Tuple

import numpy as np


def dominant_class(mask: np.ndarray) -> int:
    """Most frequent non-background label, or 0 for tiles without buildings."""
    counts = np.bincount(np.asarray(mask).ravel())
    if counts.size <= 1 or counts[1:].sum() == 0:
        return 0
    return int(np.argmax(counts[1:]) + 1)


def allocate(n: int, fractions: Sequence[float]) -> List[int]:
    """Largest-remainder split of ``n`` items; ties go to the earlier part."""
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(records, fractions=(0.8, 0.1, 0.1), seed=0) -> Tuple[list, list, list]:
    """Bucket tiles by dominant damage class and split each bucket by ``fractions``."""
    if not records:
        raise ValueError("cannot split an empty dataset")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three nonnegative values summing to 1: {fractions}")
    buckets = defaultdict(list)
    for i, rec in enumerate(records):
        buckets[dominant_class(rec.label_mask)].append(i)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for key in sorted(buckets):
        idx = np.array(buckets[key])[rng.permutation(len(buckets[key]))]
        n_train, n_val, _ = allocate(len(idx), fractions)
        parts[0].extend(idx[:n_train].tolist())
        parts[1].extend(idx[n_train:n_train + n_val].tolist())
        parts[2].extend(idx[n_train + n_val:].tolist())
    return tuple([records[i] for i in sorted(p)] for p in parts)
