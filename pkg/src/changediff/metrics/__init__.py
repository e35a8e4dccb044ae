from .core import (
    AGGREGATE_MODES,
    EvalReport,
    aggregate_f1,
    class_f1,
    confusion_matrix,
    evaluate_masks,
    f1_loc,
    iou,
    iou_macro,
    loc_f1_from_confusion,
    xview2_score,
)
from .report import CSV_COLUMNS, report_to_csv, report_to_text
