"""
Domain records shared between the phantom generator, the models, the metrics and the
command line tools.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from rtcascade.core.constants import (
    NUM_OARS,
    OAR_CRITERIA,
    OAR_NAMES,
    PTV_CRITERIA,
)
from rtcascade.core.exc import ConfigurationError


@dataclass(frozen=True)
class SpacingGrid:
    """Voxel spacing in millimetres along (z, y, x)."""

    spacing: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ConfigurationError(
                f"Voxel spacing must be three positive values, got {self.spacing}"
            )
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing))

    def permuted(self, axes: tuple[int, int, int]) -> "SpacingGrid":
        permuted = tuple(self.spacing[a] for a in axes)
        return SpacingGrid(permuted)  # type: ignore[arg-type]


@dataclass(frozen=True)
class RoiSpec:
    """A region of interest and the DVH criteria evaluated on it."""

    name: str
    kind: Literal["OAR", "PTV"]

    @property
    def criteria(self) -> tuple[str, ...]:
        return OAR_CRITERIA if self.kind == "OAR" else PTV_CRITERIA


@dataclass
class Subject:
    """One synthetic patient.

    Volumes are numpy arrays of shape (D, H, W) except `ct` and `dose`, which carry a
    leading channel axis of length one. `oar_masks` has shape (7, D, H, W) in the
    fixed organ order of `rtcascade.core.constants.OAR_NAMES`.
    """

    ct: np.ndarray
    oar_masks: np.ndarray
    ptv: np.ndarray
    body: np.ndarray
    dose: np.ndarray
    spacing: SpacingGrid
    prescription: float = 0.0
    index: int = 0
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        spatial = self.body.shape
        if self.ct.shape != (1, *spatial) or self.dose.shape != (1, *spatial):
            raise ConfigurationError(
                f"CT {self.ct.shape} and dose {self.dose.shape} must be (1, *{spatial})"
            )
        if self.oar_masks.shape != (NUM_OARS, *spatial):
            raise ConfigurationError(
                f"OAR masks must have shape {(NUM_OARS, *spatial)}, "
                f"got {self.oar_masks.shape}"
            )
        if self.ptv.shape != spatial:
            raise ConfigurationError(f"PTV shape {self.ptv.shape} != {spatial}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.body.shape)  # type: ignore[return-value]

    def onehot(self) -> np.ndarray:
        """Ground-truth segmentation as an (8, D, H, W) indicator, background first."""
        oars = self.oar_masks.astype(self.ct.dtype)
        background = 1.0 - oars.sum(axis=0, keepdims=True)
        return np.concatenate([background, oars], axis=0)

    def rois(self) -> list[tuple[RoiSpec, np.ndarray]]:
        """The seven OARs plus the PTV, named after its prescription level."""
        rois = [
            (RoiSpec(name, "OAR"), self.oar_masks[i].astype(bool))
            for i, name in enumerate(OAR_NAMES)
        ]
        ptv = RoiSpec(ptv_name(self.prescription), "PTV")
        rois.append((ptv, self.ptv.astype(bool)))
        return rois


def ptv_name(prescription: float) -> str:
    return "PTV{0:d}".format(int(round(prescription)))
