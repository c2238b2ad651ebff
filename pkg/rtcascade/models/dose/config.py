import logging
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rtcascade.core.config import default_file, read_config
from rtcascade.core.constants import DOSE_INPUT_CHANNELS
from rtcascade.models.encoder.config import ConfigEncoder

logger = logging.getLogger(__name__)

_config_file_path = default_file(__file__, "config_dose.ini")
_encoder_defaults = read_config(_config_file_path, "encoder")
_defaults = read_config(_config_file_path, "dose")
_loss_defaults = read_config(_config_file_path, "loss")

# final output plus three deep-supervision levels
PYRAMID_LEVELS = 4


class ConfigDose(BaseModel):
    model_config = ConfigDict(extra="forbid")

    encoder: ConfigEncoder = Field(
        default_factory=lambda: ConfigEncoder(**_encoder_defaults)
    )
    decoder_channels: list[int] = Field(
        default=_defaults["decoder_channels"], validate_default=True
    )
    unet_channels: tuple[int, int, int] = Field(
        default=_defaults["unet_channels"], validate_default=True
    )
    activation: Literal["mish", "relu"] = Field(
        default=_defaults["activation"], validate_default=True
    )
    dose_scale: float = Field(
        default=_defaults["dose_scale"], gt=0, validate_default=True
    )
    cascade_input: Literal["soft", "hard"] = Field(
        default=_defaults["cascade_input"], validate_default=True
    )
    init_seed: int = Field(default=_defaults["init_seed"], validate_default=True)

    @model_validator(mode="after")
    def _check(self) -> "ConfigDose":
        if self.encoder.in_channels != DOSE_INPUT_CHANNELS + 1:
            raise ValueError(
                "The stage-two encoder takes the dose input plus the stage-one "
                f"estimate, {DOSE_INPUT_CHANNELS + 1} channels"
            )
        if self.encoder.upsampling_stages + 1 < PYRAMID_LEVELS:
            raise ValueError(
                f"Patch size {self.encoder.patch} gives fewer than "
                f"{PYRAMID_LEVELS} decoder levels"
            )
        if any(n % 4 for n in self.encoder.resolution):
            raise ValueError(
                "The stage-one U-Net halves the volume twice, resolution "
                f"{self.encoder.resolution} must be divisible by 4"
            )
        if self.encoder.num_layers != _encoder_defaults["num_layers"]:
            logger.warning(
                "Dose encoder uses %d transformer layers instead of %d",
                self.encoder.num_layers,
                _encoder_defaults["num_layers"],
            )
        return self


class LossWeights(BaseModel):
    """Weights of the final-output and deep-supervision terms of the dose loss."""

    model_config = ConfigDict(extra="forbid")

    lambda1: float = Field(
        default=_loss_defaults["lambda1"], ge=0, validate_default=True
    )
    lambda2: float = Field(
        default=_loss_defaults["lambda2"], ge=0, validate_default=True
    )

    @model_validator(mode="after")
    def _check(self) -> "LossWeights":
        if (self.lambda1, self.lambda2) != (
            _loss_defaults["lambda1"],
            _loss_defaults["lambda2"],
        ):
            logger.warning(
                "Dose loss weights (%g, %g) differ from the defaults (%g, %g)",
                self.lambda1,
                self.lambda2,
                _loss_defaults["lambda1"],
                _loss_defaults["lambda2"],
            )
        return self
