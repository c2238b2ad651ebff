"""
Synthetic head-and-neck subjects.

Every subject is a pure function of (seed, index). The layout is stylised: an
ellipsoidal body, seven organs at jittered canonical positions (the spinal cord and
esophagus as vertical tubes, the parotids as a bilateral pair, the mandible elongated
left-right), and one PTV placed against a randomly chosen organ. The reference dose
equals the prescription inside the PTV and decays exponentially with the distance to
it elsewhere in the body.

Grid axes are (z, y, x): z runs inferior to superior, y posterior to anterior is
negative to positive, x runs right to left.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from rtcascade.core.constants import OAR_NAMES
from rtcascade.core.exc import PhantomGenerationError, UndefinedMetricError
from rtcascade.core.structure import SpacingGrid, Subject
from rtcascade.core.utils import make_rng
from rtcascade.phantom.config import ConfigPhantom

logger = logging.getLogger(__name__)

# body semi-axes as fractions of the resolution
BODY_SEMI_AXES = (0.45, 0.40, 0.36)
MIN_STRUCTURE_VOXELS = 4
# the PTV sphere starts this fraction of the touching distance from its anchor, so
# it overlaps the organ before the overlap is carved away
PTV_OFFSET = 0.75

# tissue intensities on a [0, 1] scale before smoothing and noise
TISSUE = {
    "air": 0.0,
    "body": 0.45,
    "brainstem": 0.52,
    "spinal_cord": 0.58,
    "right_parotid": 0.40,
    "left_parotid": 0.40,
    "esophagus": 0.36,
    "larynx": 0.30,
    "mandible": 0.90,
    "ptv": 0.50,
}


@dataclass(frozen=True)
class OrganTemplate:
    """Canonical placement of one organ, offsets as fractions of the resolution."""

    centre: tuple[float, float, float]
    # semi-axes in units of the drawn radius
    stretch: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # vertical tubes span this z range (fractions) instead of an ellipsoid
    tube: tuple[float, float] | None = None


TEMPLATES: dict[str, OrganTemplate] = {
    "brainstem": OrganTemplate(centre=(0.25, 0.08, 0.0), stretch=(1.6, 1.0, 1.0)),
    "spinal_cord": OrganTemplate(centre=(0.0, 0.20, 0.0), tube=(-0.38, 0.12)),
    "right_parotid": OrganTemplate(centre=(0.10, 0.0, -0.22), stretch=(1.3, 1.0, 1.0)),
    "left_parotid": OrganTemplate(centre=(0.10, 0.0, 0.22), stretch=(1.3, 1.0, 1.0)),
    "esophagus": OrganTemplate(centre=(0.0, 0.07, 0.0), tube=(-0.38, -0.06)),
    "larynx": OrganTemplate(centre=(-0.12, -0.14, 0.0)),
    "mandible": OrganTemplate(centre=(0.02, -0.27, 0.0), stretch=(1.0, 1.0, 3.0)),
}


def _coordinates(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    axis = np.arange(n, dtype=np.float64)
    return np.meshgrid(axis, axis, axis, indexing="ij")


def ellipsoid(
    grid: tuple[np.ndarray, ...],
    centre: np.ndarray,
    semi_axes: tuple[float, float, float],
) -> np.ndarray:
    z, y, x = grid
    return (
        ((z - centre[0]) / semi_axes[0]) ** 2
        + ((y - centre[1]) / semi_axes[1]) ** 2
        + ((x - centre[2]) / semi_axes[2]) ** 2
    ) <= 1.0


def tube(
    grid: tuple[np.ndarray, ...],
    centre: np.ndarray,
    radius: float,
    z_range: tuple[float, float],
) -> np.ndarray:
    z, y, x = grid
    in_disc = (y - centre[1]) ** 2 + (x - centre[2]) ** 2 <= radius**2
    return in_disc & (z >= z_range[0]) & (z <= z_range[1])


def distance_to_set(mask: np.ndarray, spacing: SpacingGrid) -> np.ndarray:
    """Euclidean distance in mm from every voxel to the nearest voxel of `mask`."""
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        raise UndefinedMetricError("Distance to an empty set is undefined")
    return ndimage.distance_transform_edt(~mask, sampling=spacing.spacing)


def _draw_layout(
    cfg: ConfigPhantom, rng: np.random.Generator, grid: tuple[np.ndarray, ...]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """One attempt at body, organ and PTV masks; organs are carved out in order so
    earlier organs win overlaps."""
    n = cfg.resolution
    middle = np.full(3, (n - 1) / 2.0)
    body = ellipsoid(grid, middle, tuple(f * n for f in BODY_SEMI_AXES))
    occupied = np.zeros_like(body)
    organs = np.zeros((len(OAR_NAMES), n, n, n), dtype=bool)
    centres = {}
    radii = {}
    for i, name in enumerate(OAR_NAMES):
        template = TEMPLATES[name]
        radius = rng.uniform(*cfg.radius_range(name))
        jitter = rng.uniform(-cfg.jitter, cfg.jitter, 3)
        centre = middle + (np.asarray(template.centre) + jitter) * n
        if template.tube is not None:
            z_range = tuple(middle[0] + f * n for f in template.tube)
            shape = tube(grid, centre, radius, z_range)  # type: ignore[arg-type]
        else:
            semi_axes = tuple(radius * s for s in template.stretch)
            shape = ellipsoid(grid, centre, semi_axes)  # type: ignore[arg-type]
        organs[i] = shape & body & ~occupied
        occupied |= organs[i]
        centres[name] = centre
        radii[name] = radius

    anchor = str(rng.choice(OAR_NAMES))
    ptv_radius = rng.uniform(*cfg.radius_range("ptv"))
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    offset = PTV_OFFSET * (radii[anchor] + ptv_radius)
    ptv_centre = centres[anchor] + direction * offset
    ptv = ellipsoid(grid, ptv_centre, (ptv_radius,) * 3) & body & ~occupied
    return body, organs, ptv, anchor


def _layout_problem(organs: np.ndarray, ptv: np.ndarray) -> str | None:
    for name, organ in zip(OAR_NAMES, organs):
        if organ.sum() < MIN_STRUCTURE_VOXELS:
            return f"{name} has fewer than {MIN_STRUCTURE_VOXELS} voxels"
    if ptv.sum() < MIN_STRUCTURE_VOXELS:
        return f"the PTV has fewer than {MIN_STRUCTURE_VOXELS} voxels"
    structure = ndimage.generate_binary_structure(3, 1)
    grown = ndimage.binary_dilation(ptv, structure=structure)
    if not (grown & organs.any(axis=0)).any():
        return "the PTV touches no organ"
    return None


def _synthetic_ct(
    cfg: ConfigPhantom,
    rng: np.random.Generator,
    body: np.ndarray,
    organs: np.ndarray,
    ptv: np.ndarray,
) -> np.ndarray:
    intensity = np.full(body.shape, TISSUE["air"])
    intensity[body] = TISSUE["body"]
    for name, organ in zip(OAR_NAMES, organs):
        intensity[organ] = TISSUE[name]
    intensity[ptv] = TISSUE["ptv"]
    if cfg.smoothing_sigma > 0:
        intensity = ndimage.gaussian_filter(intensity, sigma=cfg.smoothing_sigma)
    intensity = intensity + rng.normal(0.0, cfg.noise_sigma, body.shape)
    return np.clip(intensity, 0.0, 1.0)


def reference_dose(
    ptv: np.ndarray,
    body: np.ndarray,
    prescription: float,
    falloff_mm: float,
    spacing: SpacingGrid,
) -> np.ndarray:
    """prescription * exp(-distance / falloff) inside the body, 0 outside."""
    distance = distance_to_set(ptv, spacing)
    dose = prescription * np.exp(-distance / falloff_mm)
    dose[ptv] = prescription
    dose[~body] = 0.0
    return dose


def generate(cfg: ConfigPhantom, index: int) -> Subject:
    """
    Build subject `index` of the phantom set described by `cfg`.

    Parameters:
        cfg: phantom configuration; `cfg.seed` selects the set
        index: subject number within the set
    Returns:
        Subject with float32 CT in [0, 1] and dose in Gy, boolean masks
    """
    rng = make_rng(cfg.seed, index)
    spacing = SpacingGrid(cfg.spacing)
    grid = _coordinates(cfg.resolution)
    problem = None
    for attempt in range(1, cfg.max_retries + 1):
        body, organs, ptv, anchor = _draw_layout(cfg, rng, grid)
        problem = _layout_problem(organs, ptv)
        if problem is None:
            break
        logger.debug(
            "Subject %d of seed %d, attempt %d rejected: %s",
            index,
            cfg.seed,
            attempt,
            problem,
        )
    else:
        raise PhantomGenerationError(
            f"Could not place the structures of subject {index} for seed {cfg.seed} "
            f"after {cfg.max_retries} attempts: {problem}"
        )
    prescription = float(rng.choice(cfg.prescriptions))
    ct = _synthetic_ct(cfg, rng, body, organs, ptv)
    dose = reference_dose(ptv, body, prescription, cfg.falloff_mm, spacing)
    logger.debug(
        "Subject %d: PTV%d next to %s, %d PTV voxels",
        index,
        prescription,
        anchor,
        int(ptv.sum()),
    )
    return Subject(
        ct=ct[None].astype(np.float32),
        oar_masks=organs,
        ptv=ptv,
        body=body,
        dose=dose[None].astype(np.float32),
        spacing=spacing,
        prescription=prescription,
        index=index,
        seed=cfg.seed,
        extras={"anchor": anchor},
    )
