"""
Random geometric and intensity transforms applied to training subjects.

Random numbers are drawn in a fixed order whatever the outcome of each draw: the
intensity shift (apply, amount), one draw per flip axis, two per rotation plane
(apply, quarter turns) and finally the three crop offsets. Two calls with generators
in the same state therefore give the same subject.
"""
import logging
from dataclasses import replace

import numpy as np

from rtcascade.core.exc import ConfigurationError
from rtcascade.core.structure import SpacingGrid, Subject
from rtcascade.training.config import AXIS_NAMES, ConfigAugmentation

logger = logging.getLogger(__name__)


def _volumes(subject: Subject) -> dict[str, np.ndarray]:
    return {
        "ct": subject.ct,
        "oar_masks": subject.oar_masks,
        "ptv": subject.ptv,
        "body": subject.body,
        "dose": subject.dose,
    }


def _spatial_axis(array: np.ndarray, axis: int) -> int:
    return array.ndim - 3 + axis


def augment(
    subject: Subject, cfg: ConfigAugmentation, rng: np.random.Generator
) -> Subject:
    """
    Return a transformed copy of `subject`.

    Flips and rotations act on every volume alike, the intensity shift on the CT
    only, so masks stay binary and aligned with the dose. A rotation by an odd number
    of quarter turns swaps the spacing of the two axes of its plane.

    Parameters:
        subject: the sample to transform, left untouched
        cfg: transform probabilities and ranges
        rng: source of randomness, advanced by a fixed number of draws
    Returns:
        Subject of the same shape, or of extent `cfg.crop_size` when cropping
    Raises:
        ConfigurationError: the crop does not fit inside the volume
    """
    volumes = {key: value.copy() for key, value in _volumes(subject).items()}
    spacing = subject.spacing
    applied = []

    shift_hit = rng.uniform() < cfg.intensity_shift_prob
    shift = rng.uniform(-cfg.intensity_shift_range, cfg.intensity_shift_range)
    if shift_hit:
        volumes["ct"] = (volumes["ct"] + shift).astype(subject.ct.dtype)
        applied.append(f"shift {shift:+.3f}")

    for name in cfg.flip_axes:
        if rng.uniform() < cfg.flip_prob:
            axis = AXIS_NAMES.index(name)
            for key, array in volumes.items():
                volumes[key] = np.flip(array, _spatial_axis(array, axis))
            applied.append(f"flip {name}")

    for first, second in cfg.rot90_axes:
        hit = rng.uniform() < cfg.rot90_prob
        turns = int(rng.integers(1, 4))
        if not hit:
            continue
        plane = (AXIS_NAMES.index(first), AXIS_NAMES.index(second))
        for key, array in volumes.items():
            axes = tuple(_spatial_axis(array, a) for a in plane)
            volumes[key] = np.rot90(array, k=turns, axes=axes)
        if turns % 2:
            order = [0, 1, 2]
            order[plane[0]], order[plane[1]] = order[plane[1]], order[plane[0]]
            spacing = spacing.permuted(tuple(order))  # type: ignore[arg-type]
        applied.append(f"rot90 {first}{second} x{turns}")

    if cfg.crop_size is not None:
        volumes, spacing = _crop(volumes, spacing, cfg.crop_size, rng)
        applied.append(f"crop {cfg.crop_size}")

    if applied:
        logger.debug("Subject %d augmented: %s", subject.index, ", ".join(applied))
    return replace(
        subject,
        spacing=spacing,
        **{key: np.ascontiguousarray(value) for key, value in volumes.items()},
    )


def _crop(
    volumes: dict[str, np.ndarray],
    spacing: SpacingGrid,
    size: int,
    rng: np.random.Generator,
) -> tuple[dict[str, np.ndarray], SpacingGrid]:
    shape = volumes["body"].shape
    if any(size > n for n in shape):
        raise ConfigurationError(
            f"Crop of extent {size} does not fit in a volume of shape {shape}"
        )
    offsets = [int(rng.integers(0, n - size + 1)) for n in shape]
    window = tuple(slice(o, o + size) for o in offsets)
    cropped = {key: array[(..., *window)] for key, array in volumes.items()}
    return cropped, spacing
