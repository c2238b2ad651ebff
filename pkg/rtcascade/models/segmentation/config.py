import logging
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rtcascade.core.config import default_file, read_config
from rtcascade.core.constants import NUM_CLASSES
from rtcascade.models.encoder.config import ConfigEncoder

logger = logging.getLogger(__name__)

_config_file_path = default_file(__file__, "config_seg.ini")
_encoder_defaults = read_config(_config_file_path, "encoder")
_defaults = read_config(_config_file_path, "seg")


class ConfigSeg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    encoder: ConfigEncoder = Field(
        default_factory=lambda: ConfigEncoder(**_encoder_defaults)
    )
    decoder_channels: list[int] = Field(
        default=_defaults["decoder_channels"], validate_default=True
    )
    num_classes: int = Field(default=NUM_CLASSES, validate_default=True)
    activation: Literal["mish", "relu"] = Field(
        default=_defaults["activation"], validate_default=True
    )
    init_seed: int = Field(default=_defaults["init_seed"], validate_default=True)

    @model_validator(mode="after")
    def _check(self) -> "ConfigSeg":
        if self.num_classes != NUM_CLASSES:
            raise ValueError(
                f"num_classes is fixed at {NUM_CLASSES}, got {self.num_classes}"
            )
        if self.encoder.in_channels != 1:
            raise ValueError("The segmentation encoder takes a single CT channel")
        if self.activation != _defaults["activation"]:
            logger.warning(
                "Segmentation decoder uses '%s' instead of the default '%s'",
                self.activation,
                _defaults["activation"],
            )
        return self
