"""
Command line interface: `rtcascade <command> [options]`.

    phantom     write synthetic subjects as VOL1 files with a manifest
    train       train one stage of the cascade and write a CKPT1 checkpoint
    predict     predict doses for one subject or a whole subject directory
    eval        compare predicted doses with ground truth, write a CSV report
    gradcheck   run finite-difference gradient checks

Exit codes: 0 success, 1 usage or configuration error, 2 data or format error,
3 numerical failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from rtcascade.autograd.tensor import Tensor, no_grad
from rtcascade.cli import report
from rtcascade.cli.dataset import (
    indices_with,
    load_subjects,
    read_subject,
    subject_path,
    write_subjects,
)
from rtcascade.cli.run_config import load_run_config
from rtcascade.cli.vol1 import Volume, mask_volume, read_volume, write_volume
from rtcascade.core.config import build_config
from rtcascade.core.constants import (
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    OAR_NAMES,
)
from rtcascade.core.exc import (
    ConfigurationError,
    ContractError,
    DegenerateStatisticError,
    FormatError,
    ManifestError,
    NumericalError,
    PhantomGenerationError,
    TrainingError,
    UndefinedMetricError,
)
from rtcascade.core.structure import SpacingGrid
from rtcascade.core.utils import setup_logging
from rtcascade.models import dose, segmentation
from rtcascade.models.dose import ConfigDose
from rtcascade.models.segmentation import ConfigSeg
from rtcascade.models.suites import SCOPES, run_scope
from rtcascade.phantom import generate
from rtcascade.training import load_checkpoint, restore, save_checkpoint, train
from rtcascade.training.checkpoint import Checkpoint
from rtcascade.training.trainer import MODE_REQUIRED_INIT, build_parameters

logger = logging.getLogger(__name__)

TRAIN_MODES = {
    "seg": "seg",
    "dose1": "dose_stage1",
    "dose2": "dose_stage2",
    "e2e": "end_to_end",
}
EXIT_CODES: tuple[tuple[type[Exception], int], ...] = (
    (ConfigurationError, EXIT_USAGE),
    (ContractError, EXIT_DATA),
    (UndefinedMetricError, EXIT_DATA),
    (DegenerateStatisticError, EXIT_DATA),
    (PhantomGenerationError, EXIT_DATA),
    (FormatError, EXIT_DATA),
    (ManifestError, EXIT_DATA),
    (NumericalError, EXIT_NUMERICAL),
    (TrainingError, EXIT_NUMERICAL),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self: "_Parser", message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def cmd_phantom(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    if args.count < 1:
        raise ConfigurationError(f"--count must be positive, got {args.count}")
    subjects = [generate(run.phantom, index) for index in range(args.count)]
    write_subjects(args.out_dir, subjects)
    return EXIT_OK


def _trace_path(out: Path, trace: Optional[Path]) -> Path:
    return trace if trace is not None else out.with_suffix(".trace.csv")


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    mode = TRAIN_MODES[args.mode]
    if MODE_REQUIRED_INIT[mode] and not args.init:
        raise ConfigurationError(
            f"Mode {args.mode} continues from trained networks; pass the checkpoints "
            "to start from with --init"
        )
    data_dir = args.data_dir or run.data_dir
    if data_dir is None:
        raise ConfigurationError("No subject directory: pass --data-dir")
    train_cfg = run.train.model_copy(update={"mode": mode})
    subjects = load_subjects(Path(data_dir))
    init = [load_checkpoint(path) for path in args.init or []]
    result = train(subjects, train_cfg, run.seg, run.dose, init=init)
    save_checkpoint(result.checkpoint, args.out)
    trace_path = _trace_path(args.out, args.trace)
    result.trace.to_csv(trace_path, index=False)
    logger.info("Wrote loss trace with %d rows to %s", len(result.trace), trace_path)
    return EXIT_OK


def _configs_from(
    checkpoints: Sequence[Checkpoint],
) -> tuple[Optional[ConfigSeg], Optional[ConfigDose]]:
    seg_cfg = dose_cfg = None
    for checkpoint in checkpoints:
        stored = checkpoint.config
        if stored.get("seg") is not None:
            seg_cfg = build_config(ConfigSeg, **stored["seg"])
        if stored.get("dose") is not None:
            dose_cfg = build_config(ConfigDose, **stored["dose"])
    return seg_cfg, dose_cfg


class Predictor:
    """Networks restored from checkpoints, ready for inference."""

    def __init__(
        self: "Predictor", checkpoints: Sequence[Checkpoint], cascade: bool
    ) -> None:
        self.seg_cfg, self.dose_cfg = _configs_from(checkpoints)
        if self.dose_cfg is None:
            raise ManifestError("No checkpoint holds a dose network")
        if cascade and self.seg_cfg is None:
            raise ManifestError(
                "Predicting without --oar needs a checkpoint with a segmentation "
                "network"
            )
        self.cascade = cascade
        mode = "end_to_end" if cascade else "dose_stage2"
        seg_cfg = self.seg_cfg if cascade else None
        self.params = build_parameters(mode, seg_cfg, self.dose_cfg)
        required = ("seg.", "dose.") if cascade else ("dose.",)
        merged = [
            Checkpoint(
                params={
                    name: value
                    for name, value in checkpoint.params.items()
                    if cascade or name.startswith("dose.")
                }
            )
            for checkpoint in checkpoints
        ]
        restore(self.params, merged, required)

    def _check_shape(self: "Predictor", shape: tuple[int, ...]) -> None:
        expected = tuple(self.dose_cfg.encoder.resolution)  # type: ignore[union-attr]
        if tuple(shape) != expected:
            raise ManifestError(
                f"Input volumes of shape {tuple(shape)} do not fit the checkpoint, "
                f"which expects {expected}"
            )

    def predict(
        self: "Predictor",
        ct: np.ndarray,
        ptv: np.ndarray,
        oars: Optional[np.ndarray] = None,
    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Predicted dose [1, D, H, W] clamped at 0, and the predicted masks [8, D, H, W]
        in cascade mode.
        """
        self._check_shape(ct.shape[1:])
        with no_grad():
            output = dose.cascade_forward(
                Tensor(np.asarray(ct, dtype=np.float32)),
                Tensor(np.asarray(ptv, dtype=np.float32)),
                self.seg_cfg,  # type: ignore[arg-type]
                self.params.scope("seg"),
                self.dose_cfg,  # type: ignore[arg-type]
                self.params.scope("dose"),
                oars=None if oars is None else Tensor(np.asarray(oars, np.float32)),
            )
        masks = None
        if output.seg is not None:
            masks = segmentation.predict_masks(output.seg.probs.data)
        return dose.predict_dose(output.pyramid), masks


def cmd_predict(args: argparse.Namespace) -> int:
    checkpoints = [load_checkpoint(path) for path in args.checkpoint]
    if args.data_dir is not None:
        if args.out_dir is None:
            raise ConfigurationError("--data-dir needs --out-dir")
        predictor = Predictor(checkpoints, cascade=not args.gt_oars)
        indices = indices_with(args.data_dir, "ct")
        if not indices:
            raise FormatError(f"No subjects found in {args.data_dir}")
        for index in indices:
            subject = read_subject(args.data_dir, index)
            oars = subject.oar_masks if args.gt_oars else None
            predicted, masks = predictor.predict(subject.ct, subject.ptv[None], oars)
            _write_prediction(
                predicted,
                masks,
                subject.spacing,
                subject_path(args.out_dir, index, "dose"),
                subject_path(args.out_dir, index, "masks"),
            )
        logger.info("Predicted %d subjects into %s", len(indices), args.out_dir)
        return EXIT_OK

    if args.ct is None or args.ptv is None or args.out is None:
        raise ConfigurationError("predict needs --ct, --ptv and --out, or --data-dir")
    ct = read_volume(args.ct, kind="ct")
    ptv = read_volume(args.ptv, kind="mask")
    oars = None
    if args.oar is not None:
        oars = read_volume(args.oar, kind="mask").data
    if ptv.shape != ct.shape or (oars is not None and oars.shape[1:] != ct.shape):
        raise ManifestError("CT, PTV and OAR volumes differ in shape")
    predictor = Predictor(checkpoints, cascade=oars is None)
    predicted, masks = predictor.predict(ct.data, ptv.data, oars)
    masks_out = args.out_masks or args.out.with_name(args.out.stem + "_masks.vol1")
    _write_prediction(predicted, masks, ct.spacing, args.out, masks_out)
    return EXIT_OK


def _write_prediction(
    predicted: np.ndarray,
    masks: Optional[np.ndarray],
    spacing: SpacingGrid,
    dose_path: Path,
    masks_path: Path,
) -> None:
    write_volume(dose_path, Volume(predicted, spacing, "dose", ["dose"]))
    if masks is not None:
        write_volume(masks_path, mask_volume(masks[1:], spacing, OAR_NAMES))


def cmd_eval(args: argparse.Namespace) -> int:
    evaluations = report.load_evaluations(args.pred_dir, args.gt_dir)
    baseline = None
    if args.baseline_dir is not None:
        baseline = report.load_evaluations(args.baseline_dir, args.gt_dir)
    table = report.build_report(evaluations, baseline)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out, index=False)
    if args.curves_dir is not None:
        report.write_curves(evaluations, args.curves_dir)
    summary = table[table["kind"] == "summary"]
    for row in summary.itertuples(index=False):
        logger.info("%s %s: %.4f", row.criterion, row.roi, row.value)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    reports = run_scope(args.scope, instances=args.instances, seed=args.seed)
    table = pd.DataFrame(
        [
            {
                "op": r.op_name,
                "max_relative_error": r.max_relative_error,
                "elements": r.element_count,
                "passed": r.passed,
            }
            for r in reports
        ]
    )
    print(table.to_string(index=False))
    if args.out is not None:
        table.to_csv(args.out, index=False)
    failed = table[~table["passed"]]
    if not failed.empty:
        for row in failed.itertuples(index=False):
            logger.error(
                "Gradient check failed for %s: max relative error %.3g",
                row.op,
                row.max_relative_error,
            )
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rtcascade",
        description="Cascade transformer dose prediction on synthetic phantoms",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Log at DEBUG level"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    phantom = commands.add_parser("phantom", help="Generate synthetic subjects")
    phantom.add_argument("--config", type=Path, help="Run configuration (.ini)")
    phantom.add_argument("--count", type=int, required=True, help="Subjects to write")
    phantom.add_argument("--out-dir", type=Path, required=True)
    phantom.set_defaults(handler=cmd_phantom)

    trainer = commands.add_parser("train", help="Train one stage of the cascade")
    trainer.add_argument("--mode", choices=sorted(TRAIN_MODES), required=True)
    trainer.add_argument("--config", type=Path, help="Run configuration (.ini)")
    trainer.add_argument("--data-dir", type=Path, help="Phantom directory")
    trainer.add_argument(
        "--init", type=Path, nargs="+", help="Checkpoints to start from"
    )
    trainer.add_argument("--out", type=Path, required=True, help="Checkpoint to write")
    trainer.add_argument(
        "--trace", type=Path, help="Loss trace CSV (default: next to --out)"
    )
    trainer.set_defaults(handler=cmd_train)

    predict = commands.add_parser("predict", help="Predict dose distributions")
    predict.add_argument("--checkpoint", type=Path, nargs="+", required=True)
    predict.add_argument("--ct", type=Path)
    predict.add_argument("--ptv", type=Path)
    predict.add_argument(
        "--oar", type=Path, help="OAR masks; segment the CT when omitted"
    )
    predict.add_argument("--out", type=Path, help="Predicted dose volume")
    predict.add_argument("--out-masks", type=Path, help="Predicted OAR masks")
    predict.add_argument("--data-dir", type=Path, help="Predict a whole directory")
    predict.add_argument("--out-dir", type=Path)
    predict.add_argument(
        "--gt-oars",
        action="store_true",
        help="With --data-dir, feed the stored OAR masks instead of segmenting",
    )
    predict.set_defaults(handler=cmd_predict)

    evaluate = commands.add_parser("eval", help="Evaluate predicted doses")
    evaluate.add_argument("--pred-dir", type=Path, required=True)
    evaluate.add_argument("--gt-dir", type=Path, required=True)
    evaluate.add_argument("--out", type=Path, required=True, help="Report CSV")
    evaluate.add_argument("--curves-dir", type=Path)
    evaluate.add_argument(
        "--baseline-dir", type=Path, help="Second prediction directory to t-test"
    )
    evaluate.set_defaults(handler=cmd_eval)

    gradcheck = commands.add_parser("gradcheck", help="Finite-difference checks")
    gradcheck.add_argument("--scope", choices=SCOPES, default="op")
    gradcheck.add_argument("--instances", type=int, default=1)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--out", type=Path, help="Report CSV")
    gradcheck.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    setup_logging("DEBUG" if args.verbose else "INFO")
    try:
        return args.handler(args)
    except OSError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except Exception as e:
        for error_class, code in EXIT_CODES:
            if isinstance(e, error_class):
                logger.error("%s: %s", type(e).__name__, e)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
