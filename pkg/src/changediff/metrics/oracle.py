"""Brute-force reference metrics.

Deliberately naive: plain Python loops over pixels and outcome classes, no
confusion matrix, no numpy reductions. Used to cross-check :mod:`.core`.
"""


def _pixels(mask):
    return [int(v) for v in mask.ravel().tolist()]


def confusion(pred, gt, num_classes):
    table = [[0] * num_classes for _ in range(num_classes)]
    for p, g in zip(_pixels(pred), _pixels(gt)):
        table[g][p] += 1
    return table


def counts(pred, gt, cls):
    tp = fp = fn = 0
    for p, g in zip(_pixels(pred), _pixels(gt)):
        if p == cls and g == cls:
            tp += 1
        elif p == cls:
            fp += 1
        elif g == cls:
            fn += 1
    return tp, fp, fn


def class_f1(pred, gt, cls):
    tp, fp, fn = counts(pred, gt, cls)
    return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def class_iou(pred, gt, cls):
    tp, fp, fn = counts(pred, gt, cls)
    return 0.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)


def loc_f1(pred, gt):
    inter = nx = ny = 0
    for p, g in zip(_pixels(pred), _pixels(gt)):
        bp, bg = p > 0, g > 0
        nx += bp
        ny += bg
        inter += bp and bg
    return 1.0 if nx + ny == 0 else 2 * inter / (nx + ny)


def harmonic(values):
    if any(v == 0 for v in values):
        return 0.0
    acc = 0.0
    for v in values:
        acc += 1.0 / v
    return len(values) / acc


def arithmetic(values):
    acc = 0.0
    for v in values:
        acc += v
    return acc / len(values)


def report(pred, gt, num_classes):
    """Dict with the same quantities as :class:`EvalReport`."""
    f1s = [class_f1(pred, gt, c) for c in range(num_classes)]
    ious = [class_iou(pred, gt, c) for c in range(num_classes)]
    if num_classes > 2:
        f1c = harmonic(f1s[1:])
    else:
        f1c = arithmetic(f1s)
    present = [c for c in range(num_classes) if any(g == c for g in _pixels(gt))]
    floc = loc_f1(pred, gt)
    return {
        "confusion": confusion(pred, gt, num_classes),
        "class_f1": f1s,
        "iou_per_class": ious,
        "iou_macro": arithmetic([ious[c] for c in present]) if present else 0.0,
        "f1_loc": floc,
        "f1_class": f1c,
        "score": 0.3 * floc + 0.7 * f1c,
    }
