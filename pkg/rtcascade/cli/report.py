"""
Evaluation of a directory of predicted doses against a phantom directory.

The report is one table with a `kind` column:

    criterion    one row per (subject, ROI, DVH criterion); value is |gt - pred|
    dose_score   per-subject dose score over the body
    dice, hd95   per-subject, per-OAR overlap of predicted masks, when present
    summary      dose score, DVH score and per-OAR mean Dice and HD95
    ttest        paired t statistic and p-value against a baseline directory
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from rtcascade import metrics
from rtcascade.cli.dataset import indices_with, read_subject, subject_path
from rtcascade.cli.vol1 import read_volume
from rtcascade.core.constants import OAR_NAMES
from rtcascade.core.exc import DimensionError, FormatError, UndefinedMetricError
from rtcascade.metrics import EvaluationCase

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["kind", "subject", "roi", "criterion", "gt", "pred", "value"]
ALL = "all"
DVH_BINS = 100


@dataclass
class SubjectEvaluation:
    case: EvaluationCase
    # predicted OAR masks [7, D, H, W], None when the prediction has none
    masks: Optional[np.ndarray]
    gt_masks: np.ndarray


def subject_name(index: int) -> str:
    return f"subject_{index}"


def _matching_indices(pred_dir: Path, gt_dir: Path) -> list[int]:
    gt = indices_with(gt_dir, "dose")
    pred = set(indices_with(pred_dir, "dose"))
    if not gt:
        raise FormatError(f"No ground-truth doses found in {gt_dir}")
    missing = [i for i in gt if i not in pred]
    if missing:
        raise FormatError(
            f"Predictions in {pred_dir} are missing for subjects "
            + ", ".join(str(i) for i in missing)
        )
    extra = sorted(pred - set(gt))
    if extra:
        logger.warning("Ignoring predictions without ground truth: %s", extra)
    return gt


def load_evaluations(pred_dir: Path, gt_dir: Path) -> list[SubjectEvaluation]:
    evaluations = []
    for index in _matching_indices(pred_dir, gt_dir):
        subject = read_subject(gt_dir, index)
        pred = read_volume(subject_path(pred_dir, index, "dose"), kind="dose")
        if pred.shape != subject.shape:
            raise DimensionError(
                f"Predicted dose of subject {index} has shape {pred.shape}, "
                f"ground truth {subject.shape}"
            )
        mask_path = subject_path(pred_dir, index, "masks")
        masks = None
        if mask_path.exists():
            masks = read_volume(mask_path, kind="mask").data.astype(bool)
        case = EvaluationCase(
            name=subject_name(index),
            gt=subject.dose,
            pred=pred.data,
            rois=subject.rois(),
            spacing=subject.spacing,
            body=subject.body,
        )
        evaluations.append(SubjectEvaluation(case, masks, subject.oar_masks))
    return evaluations


def _row(kind: str, subject: str, roi: str, criterion: str, value: float) -> dict:
    return {
        "kind": kind,
        "subject": subject,
        "roi": roi,
        "criterion": criterion,
        "gt": np.nan,
        "pred": np.nan,
        "value": value,
    }


def overlap_rows(evaluations: list[SubjectEvaluation]) -> list[dict]:
    rows = []
    for evaluation in evaluations:
        if evaluation.masks is None:
            continue
        case = evaluation.case
        for i, name in enumerate(OAR_NAMES):
            g, p = evaluation.gt_masks[i], evaluation.masks[i]
            rows.append(_row("dice", case.name, name, "", metrics.dice(g, p)))
            try:
                distance = metrics.hd95(g, p, case.spacing)
            except UndefinedMetricError as e:
                logger.warning("No HD95 for %s of %s: %s", name, case.name, e)
                continue
            rows.append(_row("hd95", case.name, name, "", distance))
    return rows


def _subject_dvh_scores(cases: list[EvaluationCase]) -> list[float]:
    return [metrics.dvh_score([case]) for case in cases]


def ttest_rows(
    cases: list[EvaluationCase], baseline: list[EvaluationCase]
) -> list[dict]:
    """Paired t-tests of per-subject dose and DVH scores, prediction vs baseline."""
    rows = []
    pairs = {
        "dose_score": (
            [metrics.mean_dose_score([c]) for c in cases],
            [metrics.mean_dose_score([c]) for c in baseline],
        ),
        "dvh_score": (_subject_dvh_scores(cases), _subject_dvh_scores(baseline)),
    }
    for name, (a, b) in pairs.items():
        t, p = metrics.paired_t_test(a, b)
        rows.append(_row("ttest", ALL, ALL, f"{name}_t", t))
        rows.append(_row("ttest", ALL, ALL, f"{name}_p", p))
    return rows


def build_report(
    evaluations: list[SubjectEvaluation],
    baseline: Optional[list[SubjectEvaluation]] = None,
) -> pd.DataFrame:
    cases = [e.case for e in evaluations]
    summary = metrics.evaluate(cases)
    criteria = summary.criteria.rename(columns={"difference": "value"})
    criteria.insert(0, "kind", "criterion")

    rows = [
        _row("dose_score", case.name, "body", "", metrics.mean_dose_score([case]))
        for case in cases
    ]
    overlaps = overlap_rows(evaluations)
    rows.extend(overlaps)
    rows.append(_row("summary", ALL, ALL, "dose_score", summary.dose_score))
    rows.append(_row("summary", ALL, ALL, "dvh_score", summary.dvh_score))
    if overlaps:
        frame = pd.DataFrame(overlaps)
        for kind in ("dice", "hd95"):
            for name in OAR_NAMES:
                values = frame[(frame["kind"] == kind) & (frame["roi"] == name)]
                if not values.empty:
                    rows.append(
                        _row("summary", ALL, name, kind, float(values["value"].mean()))
                    )
    if baseline is not None:
        rows.extend(ttest_rows(cases, [e.case for e in baseline]))
    extra = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return pd.concat([criteria[REPORT_COLUMNS], extra], ignore_index=True)


def write_curves(evaluations: list[SubjectEvaluation], directory: Path) -> None:
    """Per-subject cumulative DVH curves of every ROI and the isodose Dice curve."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for evaluation in evaluations:
        case = evaluation.case
        top = float(max(case.gt.max(), case.pred.max()))
        rows = []
        for roi, mask in case.rois:
            if not mask.any():
                continue
            for source, dose in (("gt", case.gt), ("pred", case.pred)):
                curve = metrics.dvh_curve(dose, mask, DVH_BINS, top)
                for threshold, fraction in zip(curve.thresholds, curve.fraction):
                    rows.append(
                        {
                            "roi": roi.name,
                            "source": source,
                            "dose_gy": threshold,
                            "fraction": fraction,
                        }
                    )
        pd.DataFrame(rows, columns=["roi", "source", "dose_gy", "fraction"]).to_csv(
            directory / f"{case.name}_dvh.csv", index=False
        )
        thresholds = metrics.default_isodose_thresholds(case.gt)
        isodose = metrics.isodose_dice_curve(case.gt, case.pred, thresholds)
        pd.DataFrame(isodose, columns=["threshold_gy", "dice"]).to_csv(
            directory / f"{case.name}_isodose.csv", index=False
        )
    logger.info("Wrote curves of %d subjects to %s", len(evaluations), directory)
