import logging
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rtcascade.core.config import default_file, read_config
from rtcascade.models.dose.config import LossWeights

logger = logging.getLogger(__name__)

_config_file_path = default_file(__file__, "config_train.ini")
_defaults = read_config(_config_file_path, "train")
_augmentation_defaults = read_config(_config_file_path, "augmentation")

AXIS_NAMES = ("z", "y", "x")
Mode = Literal["seg", "dose_stage1", "dose_stage2", "end_to_end"]


class ConfigAugmentation(BaseModel):
    model_config = ConfigDict(extra="forbid")

    intensity_shift_range: float = Field(
        default=_augmentation_defaults["intensity_shift_range"],
        ge=0,
        validate_default=True,
    )
    intensity_shift_prob: float = Field(
        default=_augmentation_defaults["intensity_shift_prob"],
        ge=0,
        le=1,
        validate_default=True,
    )
    flip_axes: tuple[Literal["z", "y", "x"], ...] = Field(
        default=_augmentation_defaults["flip_axes"], validate_default=True
    )
    flip_prob: float = Field(
        default=_augmentation_defaults["flip_prob"], ge=0, le=1, validate_default=True
    )
    rot90_axes: tuple[tuple[Literal["z", "y", "x"], Literal["z", "y", "x"]], ...] = (
        Field(default=_augmentation_defaults["rot90_axes"], validate_default=True)
    )
    rot90_prob: float = Field(
        default=_augmentation_defaults["rot90_prob"], ge=0, le=1, validate_default=True
    )
    crop_size: Optional[int] = Field(
        default=_augmentation_defaults["crop_size"], validate_default=True
    )

    @model_validator(mode="after")
    def _check(self) -> "ConfigAugmentation":
        for pair in self.rot90_axes:
            if pair[0] == pair[1]:
                raise ValueError(f"rotation plane {pair} needs two distinct axes")
        if self.crop_size is not None and self.crop_size < 1:
            raise ValueError(f"crop_size must be positive, got {self.crop_size}")
        return self

    @classmethod
    def disabled(cls) -> "ConfigAugmentation":
        """Every transform switched off."""
        return cls(
            intensity_shift_prob=0.0, flip_prob=0.0, rot90_prob=0.0, crop_size=None
        )


class ConfigTrain(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Mode = Field(default=_defaults["mode"], validate_default=True)
    lr: Optional[float] = Field(default=_defaults["lr"], gt=0, validate_default=True)
    weight_decay: Optional[float] = Field(
        default=_defaults["weight_decay"], ge=0, validate_default=True
    )
    beta1: float = Field(default=_defaults["beta1"], ge=0, lt=1, validate_default=True)
    beta2: float = Field(default=_defaults["beta2"], ge=0, lt=1, validate_default=True)
    eps: float = Field(default=_defaults["eps"], gt=0, validate_default=True)
    steps: int = Field(default=_defaults["steps"], ge=0, validate_default=True)
    batch_size: int = Field(
        default=_defaults["batch_size"], ge=1, validate_default=True
    )
    seed: int = Field(default=_defaults["seed"], validate_default=True)
    dtype: Literal["float32", "float64"] = Field(
        default=_defaults["dtype"], validate_default=True
    )
    freeze_seg: bool = Field(default=_defaults["freeze_seg"], validate_default=True)
    log_every: int = Field(default=_defaults["log_every"], ge=1, validate_default=True)
    loss: LossWeights = Field(default_factory=LossWeights)
    augmentation: ConfigAugmentation = Field(default_factory=ConfigAugmentation)

    @property
    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return _defaults["lr_seg"] if self.mode == "seg" else _defaults["lr_dose"]

    @property
    def decay(self) -> float:
        if self.weight_decay is not None:
            return self.weight_decay
        if self.mode == "seg":
            return _defaults["weight_decay_seg"]
        return _defaults["weight_decay_dose"]
