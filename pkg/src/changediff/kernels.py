"""Hot pixel kernels with a numba path and a numpy fallback.

Both paths produce identical integer results; ``use_numba`` selects between them
per call and defaults to whatever :mod:`changediff._accel` decided at import.
"""
import numpy as np

from . import _accel


def _confusion_loop(gt, pred, num_classes):
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    for i in range(gt.shape[0]):
        out[gt[i], pred[i]] += 1
    return out


def _confusion_numpy(gt, pred, num_classes):
    flat = gt.astype(np.int64) * num_classes + pred.astype(np.int64)
    counts = np.bincount(flat, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def _fill_ring_loop(xs, ys, inside):
    # inside: scratch boolean grid toggled once per edge crossing (even-odd rule)
    h, w = inside.shape
    n = xs.shape[0]
    for r in range(h):
        cy = r + 0.5
        for i in range(n):
            j = i - 1 if i > 0 else n - 1
            yi = ys[i]
            yj = ys[j]
            if (yi > cy) != (yj > cy):
                xc = xs[i] + (cy - yi) * (xs[j] - xs[i]) / (yj - yi)
                # pixel centres strictly left of the crossing get toggled
                c_end = int(np.ceil(xc - 0.5))
                if c_end > w:
                    c_end = w
                for c in range(0, c_end):
                    inside[r, c] = not inside[r, c]
    return inside


def _even_odd_numpy(rings, h, w):
    cx = np.arange(w, dtype=np.float64) + 0.5
    cy = np.arange(h, dtype=np.float64) + 0.5
    inside = np.zeros((h, w), dtype=bool)
    for xs, ys in rings:
        xj = np.roll(xs, 1)
        yj = np.roll(ys, 1)
        for xi, yi, xe, ye in zip(xs, ys, xj, yj):
            rows = (yi > cy) != (ye > cy)
            if not rows.any():
                continue
            xc = xi + (cy[rows] - yi) * (xe - xi) / (ye - yi)
            inside[rows] ^= cx[None, :] < xc[:, None]
    return inside


_confusion_jit = _accel.njit(_confusion_loop)
_fill_ring_jit = _accel.njit(_fill_ring_loop)


def confusion_counts(gt, pred, num_classes, use_numba=None):
    """Count (gt, pred) label pairs into a ``num_classes`` square matrix."""
    gt = np.ascontiguousarray(gt, dtype=np.int64).ravel()
    pred = np.ascontiguousarray(pred, dtype=np.int64).ravel()
    if use_numba is None:
        use_numba = _accel.HAS_NUMBA
    if use_numba and _confusion_jit is not None:
        return _confusion_jit(gt, pred, num_classes)
    return _confusion_numpy(gt, pred, num_classes)


def even_odd_fill(rings, height, width, use_numba=None):
    """Boolean mask of pixels whose centre lies inside ``rings`` (even-odd rule).

    ``rings`` is a sequence of ``(xs, ys)`` vertex arrays in pixel coordinates;
    holes and multi-part shapes are handled by the parity rule.
    """
    rings = [(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)) for xs, ys in rings]
    if use_numba is None:
        use_numba = _accel.HAS_NUMBA
    if use_numba and _fill_ring_jit is not None:
        inside = np.zeros((height, width), dtype=np.bool_)
        for xs, ys in rings:
            if xs.shape[0] >= 3:
                _fill_ring_jit(xs, ys, inside)
        return inside
    return _even_odd_numpy([r for r in rings if r[0].shape[0] >= 3], height, width)
