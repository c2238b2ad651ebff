"""
Overlap and surface-distance metrics between binary masks.
"""
import logging

import numpy as np
from scipy.ndimage import binary_erosion, generate_binary_structure
from scipy.spatial import cKDTree

from rtcascade.core.exc import DimensionError, UndefinedMetricError
from rtcascade.core.structure import SpacingGrid

logger = logging.getLogger(__name__)

HD_PERCENTILE = 95.0


def _binary_pair(g: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(g).astype(bool)
    p = np.asarray(p).astype(bool)
    if g.shape != p.shape:
        raise DimensionError(f"Mask shapes {g.shape} and {p.shape} do not agree")
    return g, p


def dice(g: np.ndarray, p: np.ndarray) -> float:
    """2|G & P| / (|G| + |P|), 1 when both masks are empty."""
    g, p = _binary_pair(g, p)
    total = int(g.sum()) + int(p.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(g, p).sum()) / total


def surface(mask: np.ndarray) -> np.ndarray:
    """Voxels of `mask` with at least one 6-connected neighbour outside it; the grid
    border counts as outside."""
    mask = np.asarray(mask).astype(bool)
    structure = generate_binary_structure(mask.ndim, 1)
    eroded = binary_erosion(mask, structure=structure, border_value=0)
    return mask & ~eroded


def directed_surface_distances(
    source: np.ndarray, target: np.ndarray, spacing: SpacingGrid
) -> np.ndarray:
    """For every surface voxel of `source`, the distance in mm to the nearest surface
    voxel of `target`."""
    scale = np.asarray(spacing.spacing)
    source_points = np.argwhere(surface(source)) * scale
    target_points = np.argwhere(surface(target)) * scale
    distances, _ = cKDTree(target_points).query(source_points)
    return distances


def hd95(g: np.ndarray, p: np.ndarray, spacing: SpacingGrid) -> float:
    """
    95th-percentile symmetric Hausdorff distance in millimetres.

    Parameters:
        g: reference mask
        p: predicted mask
        spacing: voxel spacing along (z, y, x)
    Returns:
        the larger of the two directed 95th percentiles of surface distances,
        percentiles interpolated linearly
    """
    g, p = _binary_pair(g, p)
    if not g.any() or not p.any():
        raise UndefinedMetricError("HD95 is undefined when either mask is empty")
    forward = directed_surface_distances(g, p, spacing)
    backward = directed_surface_distances(p, g, spacing)
    return float(
        max(
            np.percentile(forward, HD_PERCENTILE),
            np.percentile(backward, HD_PERCENTILE),
        )
    )
