import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ConfigEncoder(BaseModel):
    """Shape of a 3-D patch transformer encoder.

    The segmentation and dose networks each read their encoder defaults from the
    `[encoder]` section of their own .ini file.
    """

    model_config = ConfigDict(extra="forbid")

    # spatial extent (D, H, W) in voxels, an int means a cube
    resolution: tuple[int, int, int]
    patch: int = Field(gt=0)
    in_channels: int = Field(gt=0)
    embed_dim: int = Field(gt=0)
    num_layers: int = Field(gt=0)
    num_heads: int = Field(gt=0)
    # layers whose outputs feed the decoder, 1-based; None means every L/4 layers
    tap_layers: Optional[tuple[int, int, int, int]] = None
    mlp_ratio: float = Field(default=4.0, gt=0)

    @field_validator("resolution", mode="before")
    @classmethod
    def _cube(cls, value: object) -> object:
        if isinstance(value, int):
            return (value, value, value)
        return value

    @model_validator(mode="after")
    def _check_shapes(self) -> "ConfigEncoder":
        if self.patch & (self.patch - 1):
            raise ValueError(f"patch size {self.patch} is not a power of two")
        if any(n % self.patch for n in self.resolution):
            raise ValueError(
                f"resolution {self.resolution} is not divisible by patch {self.patch}"
            )
        if self.embed_dim % self.num_heads:
            raise ValueError(
                f"embed_dim {self.embed_dim} is not divisible by {self.num_heads} heads"
            )
        if self.tap_layers is None:
            if self.num_layers % 4:
                raise ValueError(
                    f"num_layers {self.num_layers} must be a multiple of 4 to space "
                    "the four tap layers evenly"
                )
            step = self.num_layers // 4
            self.tap_layers = (step, 2 * step, 3 * step, 4 * step)
        taps = self.tap_layers
        step = self.num_layers // 4
        if self.num_layers % 4 or list(taps) != [step * i for i in range(1, 5)]:
            raise ValueError(
                f"tap_layers {taps} must be the four layers spaced "
                f"num_layers/4 apart ending at {self.num_layers}"
            )
        return self

    @property
    def grid(self) -> tuple[int, int, int]:
        """Patch grid extents (D/P, H/P, W/P)."""
        return tuple(n // self.patch for n in self.resolution)  # type: ignore

    @property
    def num_tokens(self) -> int:
        return math.prod(self.grid)

    @property
    def token_length(self) -> int:
        return self.in_channels * self.patch**3

    @property
    def mlp_width(self) -> int:
        return int(round(self.mlp_ratio * self.embed_dim))

    @property
    def upsampling_stages(self) -> int:
        """Stride-2 stages needed to return from patch scale to full resolution."""
        return self.patch.bit_length() - 1
