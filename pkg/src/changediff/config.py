"""Configuration records shared by the model, losses, training and CLI.

Every record converts to and from a plain JSON-compatible dict so that
checkpoints and run documents are self-describing.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError

LOSS_VARIANTS = ("focal_dice", "focal_dice_ordinal", "buildings_only_ce")

DAMAGE_CLASS_WEIGHTS = (0.01, 0.1, 0.7, 0.7, 0.7)


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 5
    levels: int = 5
    channels: Tuple[int, ...] = (32, 64, 128, 256, 512)
    # None means every level except the finest one
    transformer_levels: Optional[Tuple[int, ...]] = None
    transformer_depth: int = 3
    attention_heads: int = 8
    # None means "use the level's channel count"
    token_dim: Optional[int] = None
    conv_after_merge: bool = False
    shared_encoder: bool = True
    image_size: int = 256
    token_budget: int = 4096
    mlp_ratio: int = 4

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.transformer_levels is not None:
            object.__setattr__(self, "transformer_levels", tuple(sorted(set(int(k) for k in self.transformer_levels))))
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.levels < 3:
            raise ConfigError(f"levels must be >= 3, got {self.levels}")
        if len(self.channels) != self.levels or any(c <= 0 for c in self.channels):
            raise ConfigError(f"channels {self.channels} must list {self.levels} positive widths")
        for k in self.active_transformer_levels:
            if k == 0:
                raise ConfigError("the finest level (0) cannot carry a transformer block")
            if not 0 < k < self.levels:
                raise ConfigError(f"transformer level {k} outside [1, {self.levels - 1}]")
        if self.transformer_depth < 0:
            raise ConfigError("transformer_depth must be >= 0")
        if self.attention_heads < 1:
            raise ConfigError("attention_heads must be >= 1")
        if self.transformer_depth > 0:
            for k in self.active_transformer_levels:
                if self.level_token_dim(k) % self.attention_heads:
                    raise ConfigError(
                        f"token width {self.level_token_dim(k)} at level {k} is not divisible by "
                        f"{self.attention_heads} heads"
                    )
        if self.image_size % self.stride:
            raise ConfigError(f"image_size {self.image_size} must be divisible by {self.stride}")
        if self.token_budget < 1:
            raise ConfigError("token_budget must be positive")

    @property
    def stride(self) -> int:
        return 2 ** (self.levels - 1)

    @property
    def active_transformer_levels(self) -> Tuple[int, ...]:
        if self.transformer_levels is None:
            return tuple(range(1, self.levels))
        return self.transformer_levels

    def level_token_dim(self, level: int) -> int:
        return self.token_dim if self.token_dim is not None else self.channels[level]

    def patch_size(self, level: int) -> int:
        """Smallest power-of-two patch keeping the level's token grid within budget."""
        side = self.image_size // 2**level
        p = 1
        while (side // p) ** 2 > self.token_budget and side // p > 1:
            p *= 2
        return p

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        if self.transformer_levels is not None:
            d["transformer_levels"] = list(self.transformer_levels)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelConfig":
        return _from_dict(cls, d, tuples=("channels", "transformer_levels"))


@dataclass(frozen=True)
class LossConfig:
    class_weights: Tuple[float, ...] = DAMAGE_CLASS_WEIGHTS
    alpha: float = 1.0
    gamma: float = 2.0
    variant: str = "focal_dice"
    ordinal_weight: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        if any(not math.isfinite(w) or w < 0 for w in self.class_weights):
            raise ConfigError(f"class weights must be finite and >= 0: {self.class_weights}")
        if self.alpha < 0 or self.gamma < 0 or self.ordinal_weight < 0:
            raise ConfigError("alpha, gamma and ordinal_weight must be >= 0")
        if self.variant not in LOSS_VARIANTS:
            raise ConfigError(f"unknown loss variant {self.variant!r}; expected one of {LOSS_VARIANTS}")

    @property
    def num_classes(self) -> int:
        return len(self.class_weights)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["class_weights"] = list(self.class_weights)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "LossConfig":
        return _from_dict(cls, d, tuples=("class_weights",))


@dataclass(frozen=True)
class AugmentConfig:
    flips: bool = False
    rot90: bool = False
    scale_jitter: float = 0.0
    photometric: float = 0.0

    @classmethod
    def standard(cls) -> "AugmentConfig":
        return cls(flips=True, rot90=True, scale_jitter=0.1, photometric=0.2)

    @classmethod
    def aggressive(cls) -> "AugmentConfig":
        # used for cross-domain fine-tuning: wider scale and colour ranges
        return cls(flips=True, rot90=True, scale_jitter=0.25, photometric=0.35)

    @property
    def any(self) -> bool:
        return self.flips or self.rot90 or self.scale_jitter > 0 or self.photometric > 0

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    # None: milestones at 60% and 85% of the epoch budget
    scheduler_milestones: Optional[Tuple[int, ...]] = None
    scheduler_factor: float = 0.6
    batch_size: int = 8
    epochs: int = 50
    val_fraction: float = 0.10
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.scheduler_milestones is not None:
            object.__setattr__(self, "scheduler_milestones", tuple(int(m) for m in self.scheduler_milestones))
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", AugmentConfig.from_dict(self.augment))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 < self.scheduler_factor < 1:
            raise ConfigError("scheduler_factor must lie in (0, 1)")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")

    @property
    def milestones(self) -> Tuple[int, ...]:
        if self.scheduler_milestones is not None:
            return self.scheduler_milestones
        return (int(round(0.6 * self.epochs)), int(round(0.85 * self.epochs)))

    def lr_at(self, epoch: int) -> float:
        n = sum(1 for m in self.milestones if m <= epoch)
        return self.learning_rate * self.scheduler_factor**n

    def to_dict(self):
        d = dataclasses.asdict(self)
        if self.scheduler_milestones is not None:
            d["scheduler_milestones"] = list(self.scheduler_milestones)
        return d

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, tuples=("scheduler_milestones",))


DEFAULT_MERGE_MAP = {0: 0, 1: 1, 2: 2, 3: 3, 4: 3}


@dataclass(frozen=True)
class FineTuneConfig:
    epochs: int = 10
    learning_rate: float = 1e-6
    class_merge_map: Optional[Dict[int, int]] = field(default_factory=lambda: dict(DEFAULT_MERGE_MAP))
    # None: derive from the target label distribution
    class_weights: Optional[Tuple[float, ...]] = None
    batch_size: int = 4
    val_fraction: float = 0.10
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig.aggressive)

    def __post_init__(self):
        if self.class_merge_map is not None:
            m = {int(k): int(v) for k, v in self.class_merge_map.items()}
            object.__setattr__(self, "class_merge_map", m)
            targets = sorted(set(m.values()))
            if targets != list(range(len(targets))):
                raise ConfigError(f"merge map must be onto 0..K-1, got targets {targets}")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", AugmentConfig.from_dict(self.augment))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    def to_dict(self):
        d = dataclasses.asdict(self)
        if self.class_merge_map is not None:
            d["class_merge_map"] = {str(k): v for k, v in sorted(self.class_merge_map.items())}
        if self.class_weights is not None:
            d["class_weights"] = list(self.class_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, tuples=("class_weights",))


def _from_dict(cls, d, tuples=()):
    if d is None:
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = dict(d)
    for key in tuples:
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_run_document(path) -> Dict[str, Any]:
    """Read a JSON run document with optional ``model``/``loss``/``train``/``data`` sections."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: run document must be a JSON object")
    unknown = set(doc) - {"model", "loss", "train", "finetune", "data", "ablation"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return doc


def reduced_model_config(**overrides) -> ModelConfig:
    """Small three-level network used for desk-scale runs and tests."""
    base = dict(
        levels=3,
        channels=(8, 16, 32),
        transformer_depth=2,
        attention_heads=2,
        image_size=64,
        token_budget=1024,
    )
    base.update(overrides)
    return ModelConfig(**base)
