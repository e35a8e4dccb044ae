"""Bi-temporal change detection and building damage classification."""
from .config import FineTuneConfig, LossConfig, ModelConfig, TrainConfig
from .model import Checkpoint, ChangeNet, build_model, predict_masks

__version__ = "0.1.0"
