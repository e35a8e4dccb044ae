"""Fixed-layout CSV and text renderings of an :class:`EvalReport`.

CSV columns are ``class,f1,iou``: one row per class, then the aggregate rows
``f1_loc``, ``f1_class``, ``score`` (f1 column) and ``iou_macro`` (iou column).
Floats are printed with six decimals so reruns are byte-identical.
"""
import csv
import io

CSV_COLUMNS = ("class", "f1", "iou")
DAMAGE_NAMES = ("background", "no-damage", "minor-damage", "major-damage", "destroyed")


def _f(v):
    return f"{v:.6f}"


def report_rows(report):
    rows = [(str(c), _f(report.class_f1[c]), _f(report.iou_per_class[c])) for c in range(report.num_classes)]
    rows.append(("f1_loc", _f(report.f1_loc), ""))
    rows.append(("f1_class", _f(report.f1_class), ""))
    rows.append(("score", _f(report.score), ""))
    rows.append(("iou_macro", "", _f(report.iou_macro)))
    return rows


def report_to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(report_rows(report))
    return buf.getvalue()


def report_to_text(report) -> str:
    names = DAMAGE_NAMES if report.num_classes == 5 else tuple(f"class {c}" for c in range(report.num_classes))
    lines = [f"{'class':<16}{'F1':>10}{'IOU':>10}", "-" * 36]
    for c in range(report.num_classes):
        lines.append(f"{c} {names[c]:<14}{report.class_f1[c]:>10.6f}{report.iou_per_class[c]:>10.6f}")
    lines.append("-" * 36)
    lines.append(f"{'F1 loc':<16}{report.f1_loc:>10.6f}")
    lines.append(f"{'F1 class':<16}{report.f1_class:>10.6f}  ({report.aggregate_mode})")
    lines.append(f"{'score':<16}{report.score:>10.6f}")
    lines.append(f"{'mean IOU':<16}{'':>10}{report.iou_macro:>10.6f}")
    return "\n".join(lines) + "\n"
