"""
Dose-volume metrics: DVH criteria per region of interest, the dose score, the DVH
score, cumulative DVH curves, and isodose-volume Dice curves.

Dose arrays may carry a leading channel axis of length one.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from rtcascade.core.constants import POINT_ONE_CC_MM3
from rtcascade.core.exc import DimensionError, UndefinedMetricError
from rtcascade.core.structure import RoiSpec, SpacingGrid
from rtcascade.metrics.overlap import dice

logger = logging.getLogger(__name__)

DEFAULT_ISODOSE_COUNT = 10
CRITERIA_COLUMNS = ["subject", "roi", "criterion", "gt", "pred", "difference"]


@dataclass
class DvhCurve:
    thresholds: np.ndarray
    fraction: np.ndarray


@dataclass
class EvaluationCase:
    """Reference and predicted dose for one subject with its regions of interest."""

    name: str
    gt: np.ndarray
    pred: np.ndarray
    rois: list[tuple[RoiSpec, np.ndarray]]
    spacing: SpacingGrid
    body: Optional[np.ndarray] = None


@dataclass
class DvhReport:
    criteria: pd.DataFrame
    dose_score: float
    dvh_score: float
    skipped: list[tuple[str, str]] = field(default_factory=list)


def _spatial(dose: np.ndarray) -> np.ndarray:
    dose = np.asarray(dose, dtype=np.float64)
    if dose.ndim == 4 and dose.shape[0] == 1:
        return dose[0]
    return dose


def _masked(dose: np.ndarray, mask: np.ndarray) -> np.ndarray:
    dose = _spatial(dose)
    mask = np.asarray(mask).astype(bool)
    if dose.shape != mask.shape:
        raise DimensionError(f"Dose {dose.shape} and mask {mask.shape} do not agree")
    if not mask.any():
        raise UndefinedMetricError("Dose statistics are undefined on an empty mask")
    return dose[mask]


def percent_rank(percent: str, count: int) -> int:
    """1-based rank in the descending order: ceil(x * n / 100), at least 1."""
    rank = math.ceil(Fraction(percent) * count / 100)
    return min(max(rank, 1), count)


def volume_rank(volume_mm3: float, voxel_volume_mm3: float, count: int) -> int:
    """1-based rank of the hottest `volume_mm3`, rounding half up."""
    rank = math.floor(volume_mm3 / voxel_volume_mm3 + 0.5)
    return min(max(rank, 1), count)


def dvh_criteria(
    dose: np.ndarray, mask: np.ndarray, spacing: SpacingGrid, roi: RoiSpec
) -> dict[str, float]:
    """
    DVH criteria of one region, in Gy.

    Dmean is the mean dose. Dx% is the dose at rank ceil(x/100 * n) of the doses
    sorted in descending order. D0.1cc is the dose at rank
    round(100 mm^3 / voxel volume).
    """
    values = np.sort(_masked(dose, mask))[::-1]
    n = values.size
    result = {}
    for criterion in roi.criteria:
        if criterion == "Dmean":
            result[criterion] = float(values.mean())
        elif criterion == "D0.1cc":
            rank = volume_rank(POINT_ONE_CC_MM3, spacing.voxel_volume_mm3, n)
            result[criterion] = float(values[rank - 1])
        elif criterion.startswith("D") and criterion.endswith("%"):
            rank = percent_rank(criterion[1:-1], n)
            result[criterion] = float(values[rank - 1])
        else:
            raise ValueError(f"Unknown DVH criterion '{criterion}'")
    return result


def dose_score(g: np.ndarray, p: np.ndarray, region: np.ndarray) -> float:
    """Mean absolute dose difference over the voxels of `region`."""
    g, p = _spatial(g), _spatial(p)
    if g.shape != p.shape:
        raise DimensionError(f"Dose shapes {g.shape} and {p.shape} do not agree")
    return float(np.abs(_masked(g, region) - _masked(p, region)).mean())


def mean_dose_score(cases: Sequence[EvaluationCase]) -> float:
    """Per-subject dose scores over the body mask, averaged over subjects."""
    scores = []
    for case in cases:
        region = case.body
        if region is None:
            region = np.ones(_spatial(case.gt).shape, dtype=bool)
        scores.append(dose_score(case.gt, case.pred, region))
    return float(np.mean(scores))


def criteria_table(
    cases: Sequence[EvaluationCase],
) -> tuple[pd.DataFrame, list[tuple[str, str]]]:
    """One row per (subject, ROI, criterion) with reference and predicted values.

    ROIs on which a criterion is undefined are left out and returned as
    (subject, roi) pairs.
    """
    rows = []
    skipped = []
    for case in cases:
        for roi, mask in case.rois:
            try:
                gt = dvh_criteria(case.gt, mask, case.spacing, roi)
                pred = dvh_criteria(case.pred, mask, case.spacing, roi)
            except UndefinedMetricError as e:
                logger.warning(
                    "Skipping ROI %s of subject %s in the DVH score: %s",
                    roi.name,
                    case.name,
                    e,
                )
                skipped.append((case.name, roi.name))
                continue
            for criterion in roi.criteria:
                rows.append(
                    {
                        "subject": case.name,
                        "roi": roi.name,
                        "criterion": criterion,
                        "gt": gt[criterion],
                        "pred": pred[criterion],
                        "difference": abs(gt[criterion] - pred[criterion]),
                    }
                )
    table = pd.DataFrame(rows, columns=CRITERIA_COLUMNS)
    table = table.sort_values(["subject", "roi", "criterion"], ignore_index=True)
    return table, skipped


def dvh_score(cases: Sequence[EvaluationCase]) -> float:
    """Absolute criterion differences summed over subjects, ROIs and criteria,
    divided by the number of criteria that were evaluated."""
    table, _ = criteria_table(cases)
    if table.empty:
        raise UndefinedMetricError("No ROI had a defined DVH criterion")
    return float(table["difference"].sum() / len(table))


def evaluate(cases: Sequence[EvaluationCase]) -> DvhReport:
    table, skipped = criteria_table(cases)
    if table.empty:
        raise UndefinedMetricError("No ROI had a defined DVH criterion")
    return DvhReport(
        criteria=table,
        dose_score=mean_dose_score(cases),
        dvh_score=float(table["difference"].sum() / len(table)),
        skipped=skipped,
    )


def dvh_curve(
    dose: np.ndarray, mask: np.ndarray, bins: int, max_dose: float
) -> DvhCurve:
    """Cumulative DVH: fraction of the region receiving at least each of `bins`
    thresholds spaced uniformly on [0, max_dose]."""
    if bins < 2:
        raise ValueError(f"A DVH curve needs at least 2 bins, got {bins}")
    values = np.sort(_masked(dose, mask))
    thresholds = np.linspace(0.0, max_dose, bins)
    at_least = values.size - np.searchsorted(values, thresholds, side="left")
    return DvhCurve(thresholds=thresholds, fraction=at_least / values.size)


def default_isodose_thresholds(
    g: np.ndarray, count: int = DEFAULT_ISODOSE_COUNT
) -> list[float]:
    """`count` equally spaced thresholds in (0, max(g)]."""
    top = float(_spatial(g).max())
    return [top * i / count for i in range(1, count + 1)]


def isodose_dice_curve(
    g: np.ndarray, p: np.ndarray, thresholds: Sequence[float]
) -> list[tuple[float, float]]:
    g, p = _spatial(g), _spatial(p)
    if g.shape != p.shape:
        raise DimensionError(f"Dose shapes {g.shape} and {p.shape} do not agree")
    return [(float(t), dice(g >= t, p >= t)) for t in thresholds]
