from .ablation import AXES, AblationRow, ablation_run, ablation_to_csv
from .finetune import fine_tune, merge_classes, merge_records, prepare_target, reshape_head
from .loop import TrainHistory, evaluate_model, selection_score, train
from .pretrain import SegmentationUNet, pretrain_segmentation_backbone
