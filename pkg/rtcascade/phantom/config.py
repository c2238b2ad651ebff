from pydantic import BaseModel, ConfigDict, Field, model_validator

from rtcascade.core.config import default_file, read_config
from rtcascade.core.constants import OAR_NAMES

_config_file_path = default_file(__file__, "config_phantom.ini")
_defaults = read_config(_config_file_path, "phantom")

# radii are specified on a grid of this extent
REFERENCE_RESOLUTION = 32
MIN_RADIUS_VOXELS = 1.5


class ConfigPhantom(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolution: int = Field(default=_defaults["resolution"], validate_default=True)
    spacing: tuple[float, float, float] = Field(
        default=_defaults["spacing"], validate_default=True
    )
    seed: int = Field(default=_defaults["seed"], ge=0, validate_default=True)
    prescriptions: tuple[float, ...] = Field(
        default=_defaults["prescriptions"], validate_default=True
    )
    falloff_mm: float = Field(
        default=_defaults["falloff_mm"], gt=0, validate_default=True
    )
    noise_sigma: float = Field(
        default=_defaults["noise_sigma"], ge=0, validate_default=True
    )
    smoothing_sigma: float = Field(
        default=_defaults["smoothing_sigma"], ge=0, validate_default=True
    )
    organ_radii: dict[str, tuple[float, float]] = Field(
        default=_defaults["organ_radii"], validate_default=True
    )
    jitter: float = Field(default=_defaults["jitter"], ge=0, validate_default=True)
    max_retries: int = Field(
        default=_defaults["max_retries"], ge=1, validate_default=True
    )

    @model_validator(mode="after")
    def _check(self) -> "ConfigPhantom":
        n = self.resolution
        if n < 16 or n & (n - 1):
            raise ValueError(f"resolution must be a power of two >= 16, got {n}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not self.prescriptions or any(p <= 0 for p in self.prescriptions):
            raise ValueError("prescriptions must be positive")
        if any(a <= b for a, b in zip(self.prescriptions, self.prescriptions[1:])):
            raise ValueError(
                f"prescriptions {self.prescriptions} must be strictly decreasing"
            )
        missing = sorted(set(OAR_NAMES + ("ptv",)) - set(self.organ_radii))
        if missing:
            raise ValueError(f"organ_radii has no entry for {', '.join(missing)}")
        for name, (low, high) in self.organ_radii.items():
            if not 0 < low <= high:
                raise ValueError(
                    f"organ radius range for {name} is invalid: {low, high}"
                )
        return self

    def radius_range(self, name: str) -> tuple[float, float]:
        """Radius range of `name` in voxels at this resolution."""
        scale = self.resolution / REFERENCE_RESOLUTION
        low, high = self.organ_radii[name]
        return max(MIN_RADIUS_VOXELS, low * scale), max(MIN_RADIUS_VOXELS, high * scale)
