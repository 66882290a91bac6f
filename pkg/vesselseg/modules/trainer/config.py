"""
Training configuration and its ``key=value`` / YAML file form.

Nested groups are flattened in files: ``lambda1``, ``lambda2``, ``dice_smooth``
feed the loss weights; ``p_hflip``, ``p_rot``, ``rot_angles``, ``p_noise``,
``noise_max_magnitude`` feed the augmentation policy; ``init_filters``,
``blocks_down``, ``blocks_up``, ``in_channels``, ``out_channels``,
``patch_size`` describe the architecture. ``preset`` picks the starting
defaults (pretrain, finetune or desk).
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field

from ...errors import ContractViolation, FormatError
from ..data import AugmentPolicy
from ..metrics import LossWeights
from ..segresnet import ModelConfig

TOP_LEVEL_KEYS = (
    "lr",
    "batch_size",
    "epochs",
    "l2_decay",
    "rmsprop_alpha",
    "rmsprop_eps",
    "seed",
    "select_best_val",
    "augment",
)
LOSS_KEYS = ("lambda1", "lambda2", "dice_smooth")
AUGMENT_KEYS = ("p_hflip", "p_rot", "rot_angles", "p_noise", "noise_max_magnitude")
MODEL_KEYS = ("in_channels", "out_channels", "init_filters", "blocks_down", "blocks_up", "patch_size")
LIST_KEYS = ("rot_angles", "blocks_down", "blocks_up")


class TrainConfig(BaseModel):
    """Optimizer, schedule and objective settings for one training phase."""

    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=1e-5, ge=0.0)
    batch_size: int = Field(default=24, ge=1)
    epochs: int = Field(default=400, ge=0)
    l2_decay: float = Field(default=1e-8, ge=0.0)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    rmsprop_alpha: float = Field(default=0.99, gt=0.0, lt=1.0)
    rmsprop_eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0)
    select_best_val: bool = True
    augment: bool = True
    augment_policy: AugmentPolicy = Field(default_factory=AugmentPolicy)
    architecture: Optional[ModelConfig] = None

    @classmethod
    def pretrain_defaults(cls, **overrides: Any) -> "TrainConfig":
        """Full-scale source-domain pretraining: 400 epochs, lr 1e-5, L2 1e-8."""
        return cls(**{"epochs": 400, "lr": 1e-5, "l2_decay": 1e-8, **overrides})

    @classmethod
    def finetune_defaults(cls, **overrides: Any) -> "TrainConfig":
        """Full-scale target-domain fine-tuning: 100 epochs."""
        return cls(**{"epochs": 100, "lr": 1e-5, "l2_decay": 1e-8, **overrides})

    @classmethod
    def desk_scale(cls, **overrides: Any) -> "TrainConfig":
        """Tiny network on 32px synthetic patches with a faster learning rate."""
        values = {"epochs": 12, "lr": 1e-3, "architecture": ModelConfig.tiny(32), **overrides}
        return cls(**values)

    def resolved_architecture(self) -> ModelConfig:
        return self.architecture or ModelConfig()

    def flat_items(self) -> Dict[str, Any]:
        """Every setting under its file key."""
        items: Dict[str, Any] = {k: getattr(self, k) for k in TOP_LEVEL_KEYS}
        items.update({k: getattr(self.loss_weights, k) for k in LOSS_KEYS})
        items.update({k: getattr(self.augment_policy, k) for k in AUGMENT_KEYS})
        if self.architecture is not None:
            items.update({k: getattr(self.architecture, k) for k in MODEL_KEYS})
        return items

    def to_text(self) -> str:
        lines = []
        for key, value in self.flat_items().items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "TrainConfig":
        """
        Build from flat file keys.

        Raises:
            FormatError: unknown key or unknown preset
            pydantic.ValidationError: a value violates its bounds
        """
        values = dict(values)
        preset = str(values.pop("preset", "pretrain")).strip().lower()
        presets = {
            "pretrain": cls.pretrain_defaults,
            "finetune": cls.finetune_defaults,
            "desk": cls.desk_scale,
        }
        if preset not in presets:
            raise FormatError(f"unknown preset {preset!r}", record="preset")
        base = presets[preset]()

        known = set(TOP_LEVEL_KEYS) | set(LOSS_KEYS) | set(AUGMENT_KEYS) | set(MODEL_KEYS)
        for key in values:
            if key not in known:
                raise FormatError(f"unknown config key {key!r}", record=key)
        values = {k: _split_list(v) if k in LIST_KEYS else v for k, v in values.items()}

        top = {k: values[k] for k in TOP_LEVEL_KEYS if k in values}
        loss = {k: values[k] for k in LOSS_KEYS if k in values}
        aug = {k: values[k] for k in AUGMENT_KEYS if k in values}
        arch = {k: values[k] for k in MODEL_KEYS if k in values}

        update: Dict[str, Any] = dict(top)
        if loss:
            update["loss_weights"] = LossWeights(**{**base.loss_weights.model_dump(), **loss})
        if aug:
            update["augment_policy"] = AugmentPolicy(**{**base.augment_policy.model_dump(), **aug})
        if arch:
            current = base.architecture or ModelConfig()
            try:
                merged = {k: getattr(current, k) for k in MODEL_KEYS}
                merged.update({k: (v if k in LIST_KEYS else int(v)) for k, v in arch.items()})
                update["architecture"] = ModelConfig(**merged).validate()
            except ContractViolation:
                raise
            except (TypeError, ValueError) as e:
                raise FormatError(f"invalid model keys: {e}", record="architecture") from e

        fields = {name: getattr(base, name) for name in cls.model_fields}
        fields.update(update)
        return cls(**fields)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrainConfig":
        """Load ``key=value`` lines, or YAML when the suffix is .yaml/.yml."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
            if not isinstance(data, dict):
                raise FormatError(f"{path}: YAML config must be a mapping", record="root")
            return cls.from_mapping(data)
        return cls.from_mapping(parse_key_values(text))


def _split_list(value: Any) -> List[int]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.replace(";", ",").split(",") if p.strip()]
        try:
            return [int(p) for p in parts]
        except ValueError as e:
            raise FormatError(f"expected comma-separated integers, got {value!r}") from e
    if isinstance(value, int):
        return [value]
    return [int(v) for v in value]


def parse_key_values(text: str) -> Dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {line_no}: expected key=value, got {raw!r}", record=f"line{line_no}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise FormatError(f"line {line_no}: duplicate key {key!r}", record=key)
        values[key] = value
    return values

