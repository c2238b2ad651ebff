from rtcascade.metrics.dvh import (
    DvhCurve,
    DvhReport,
    EvaluationCase,
    criteria_table,
    default_isodose_thresholds,
    dose_score,
    dvh_criteria,
    dvh_curve,
    dvh_score,
    evaluate,
    isodose_dice_curve,
    mean_dose_score,
)
from rtcascade.metrics.overlap import dice, hd95, surface
from rtcascade.metrics.stats import paired_t_test

__all__ = [
    "DvhCurve",
    "DvhReport",
    "EvaluationCase",
    "criteria_table",
    "default_isodose_thresholds",
    "dice",
    "dose_score",
    "dvh_criteria",
    "dvh_curve",
    "dvh_score",
    "evaluate",
    "hd95",
    "isodose_dice_curve",
    "mean_dose_score",
    "paired_t_test",
    "surface",
]
