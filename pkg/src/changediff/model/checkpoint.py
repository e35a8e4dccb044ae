"""Self-describing checkpoint container.

Weights are stored in the safetensors layout; all configuration travels in a
single metadata entry holding canonical (sorted-key) JSON, which keeps the
file byte-stable across save -> load -> save.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import torch
from safetensors.torch import load_file, safe_open, save_file

from ..config import LossConfig, ModelConfig, dumps
from ..errors import DataFormatError

FORMAT_VERSION = 1
_META_KEY = "changediff"


@dataclass
class Checkpoint:
    state: Dict[str, torch.Tensor]
    model_config: ModelConfig
    loss_config: Optional[LossConfig] = None
    train_config: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, loss_config=None, train_config=None, **extra):
        state = {k: v.detach().cpu().clone().contiguous() for k, v in model.state_dict().items()}
        tc = train_config.to_dict() if hasattr(train_config, "to_dict") else train_config
        return cls(state, model.config, loss_config, tc, dict(extra))

    def build_model(self):
        from .network import ChangeNet

        model = ChangeNet(self.model_config)
        model.load_state_dict(self.state)
        return model

    def metadata(self) -> Dict[str, str]:
        payload = {
            "format_version": FORMAT_VERSION,
            "model_config": self.model_config.to_dict(),
            "loss_config": self.loss_config.to_dict() if self.loss_config is not None else None,
            "train_config": self.train_config,
            "extra": self.extra,
        }
        return {_META_KEY: dumps(payload)}

    def save(self, path):
        save_file(self.state, str(path), metadata=self.metadata())

    @classmethod
    def load(cls, path):
        try:
            with safe_open(str(path), framework="pt") as fh:
                meta = fh.metadata() or {}
        except Exception as exc:  # safetensors raises its own error types
            raise DataFormatError(f"{path}: not a checkpoint ({exc})") from exc
        if _META_KEY not in meta:
            raise DataFormatError(f"{path}: missing checkpoint metadata")
        payload = json.loads(meta[_META_KEY])
        if payload.get("format_version") != FORMAT_VERSION:
            raise DataFormatError(f"{path}: unsupported format version {payload.get('format_version')}")
        state = load_file(str(path))
        lc = payload.get("loss_config")
        return cls(
            state=state,
            model_config=ModelConfig.from_dict(payload["model_config"]),
            loss_config=LossConfig.from_dict(lc) if lc is not None else None,
            train_config=payload.get("train_config"),
            extra=payload.get("extra") or {},
        )
