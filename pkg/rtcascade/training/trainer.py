"""
Training loops for the four stages of the cascade.

    seg           segmentation network alone, Dice + cross-entropy
    dose_stage1   stage-one U-Net alone on ground-truth masks, lambda1 * L1
    dose_stage2   stage-two network on ground-truth masks with stage one frozen
    end_to_end    segmentation feeding the dose network, both objectives summed;
                  stage one stays frozen and the segmentation network optionally too

Every step evaluates the loss of one batch, records it, and then applies one AdamW
update, so `steps` updates give a trace of `steps + 1` rows whose last row is the
loss after the final update.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from rtcascade.autograd import ops
from rtcascade.autograd.tensor import Tensor, default_dtype
from rtcascade.core.exc import ConfigurationError, TrainingError
from rtcascade.core.structure import Subject
from rtcascade.core.utils import fingerprint, make_rng
from rtcascade.models import dose, losses, segmentation
from rtcascade.models.dose import PYRAMID_LEVELS, ConfigDose
from rtcascade.models.params import ParameterSet
from rtcascade.models.segmentation import ConfigSeg
from rtcascade.training.augment import augment
from rtcascade.training.checkpoint import Checkpoint, restore
from rtcascade.training.config import ConfigTrain
from rtcascade.training.optim import AdamWSettings, OptimState, adamw_step

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "total", "seg_loss", "dose_out", "dose_ds"]

# networks present in the parameter set of each mode
MODE_NETWORKS = {
    "seg": ("seg",),
    "dose_stage1": ("dose",),
    "dose_stage2": ("dose",),
    "end_to_end": ("seg", "dose"),
}
# parameter prefixes that initial checkpoints must cover
MODE_REQUIRED_INIT = {
    "seg": (),
    "dose_stage1": (),
    "dose_stage2": ("dose.stage1.",),
    "end_to_end": ("seg.", "dose."),
}
_AUGMENT_STREAM = 3


@dataclass
class TrainResult:
    params: ParameterSet
    trace: pd.DataFrame
    checkpoint: Checkpoint


def run_config(
    train_cfg: ConfigTrain,
    seg_cfg: Optional[ConfigSeg],
    dose_cfg: Optional[ConfigDose],
) -> dict:
    """The JSON-ready configuration stored in checkpoints and fingerprinted."""
    return {
        "train": train_cfg.model_dump(mode="json"),
        "seg": None if seg_cfg is None else seg_cfg.model_dump(mode="json"),
        "dose": None if dose_cfg is None else dose_cfg.model_dump(mode="json"),
    }


def _require(
    mode: str, seg_cfg: Optional[ConfigSeg], dose_cfg: Optional[ConfigDose]
) -> None:
    networks = MODE_NETWORKS[mode]
    if "seg" in networks and seg_cfg is None:
        raise ConfigurationError(f"Mode {mode} needs a segmentation configuration")
    if "dose" in networks and dose_cfg is None:
        raise ConfigurationError(f"Mode {mode} needs a dose configuration")


def build_parameters(
    mode: str,
    seg_cfg: Optional[ConfigSeg] = None,
    dose_cfg: Optional[ConfigDose] = None,
) -> ParameterSet:
    """Freshly initialised parameters of the networks trained in `mode`."""
    _require(mode, seg_cfg, dose_cfg)
    params = ParameterSet()
    if "seg" in MODE_NETWORKS[mode]:
        assert seg_cfg is not None
        segmentation.init_seg_net(seg_cfg, params.scope("seg"))
    if "dose" in MODE_NETWORKS[mode]:
        assert dose_cfg is not None
        dose.init_dose_net(dose_cfg, params.scope("dose"))
    return params


def freeze_for_mode(params: ParameterSet, train_cfg: ConfigTrain) -> None:
    mode = train_cfg.mode
    if mode == "dose_stage1":
        params.scope("dose").scope("stage2").freeze()
    elif mode in ("dose_stage2", "end_to_end"):
        params.scope("dose").scope("stage1").freeze()
    if mode == "end_to_end" and train_cfg.freeze_seg:
        params.scope("seg").freeze()


def _tensor(array: np.ndarray, dtype: str) -> Tensor:
    return Tensor(np.asarray(array, dtype=dtype))


def subject_loss(
    subject: Subject,
    params: ParameterSet,
    train_cfg: ConfigTrain,
    seg_cfg: Optional[ConfigSeg] = None,
    dose_cfg: Optional[ConfigDose] = None,
) -> dict[str, Tensor]:
    """
    Loss terms of one subject for the configured mode.

    Returns:
        dict with `total` and whichever of `seg_loss`, `dose_out` and `dose_ds` the
        mode computes
    """
    mode = train_cfg.mode
    dtype = train_cfg.dtype
    ct = _tensor(subject.ct, dtype)
    terms: dict[str, Tensor] = {}
    if mode == "seg":
        probs = segmentation.forward(ct, seg_cfg, params.scope("seg")).probs
        terms["seg_loss"] = losses.dice_ce_loss(probs, _tensor(subject.onehot(), dtype))
        terms["total"] = terms["seg_loss"]
        return terms

    target = _tensor(subject.dose, dtype)
    ptv = _tensor(subject.ptv[None], dtype)
    dose_params = params.scope("dose")
    if mode == "dose_stage1":
        x_cop = dose.assemble_dose_input(ct, _tensor(subject.oar_masks, dtype), ptv)
        coarse = dose.stage1_forward(x_cop, dose_cfg, dose_params.scope("stage1"))
        weights = train_cfg.loss.model_copy(update={"lambda2": 0.0})
        terms.update(losses.dose_loss_terms([coarse], [target], weights))
        return terms

    gt_pyramid = losses.build_gt_pyramid(target, PYRAMID_LEVELS)
    if mode == "dose_stage2":
        oars = _tensor(subject.oar_masks, dtype)
        output = dose.cascade_forward(
            ct,
            ptv,
            seg_cfg,  # type: ignore[arg-type]
            ParameterSet(),
            dose_cfg,  # type: ignore[arg-type]
            dose_params,
            oars=oars,
        )
        terms.update(
            losses.dose_loss_terms(output.pyramid.levels, gt_pyramid, train_cfg.loss)
        )
        return terms

    output = dose.cascade_forward(
        ct,
        ptv,
        seg_cfg,  # type: ignore[arg-type]
        params.scope("seg"),
        dose_cfg,  # type: ignore[arg-type]
        dose_params,
    )
    dose_terms = losses.dose_loss_terms(
        output.pyramid.levels, gt_pyramid, train_cfg.loss
    )
    terms.update(dose_terms)
    terms["seg_loss"] = losses.dice_ce_loss(
        output.seg.probs, _tensor(subject.onehot(), dtype)  # type: ignore[union-attr]
    )
    terms["total"] = ops.add(dose_terms["total"], terms["seg_loss"])
    return terms


def batch_loss(
    batch: Sequence[Subject],
    params: ParameterSet,
    train_cfg: ConfigTrain,
    seg_cfg: Optional[ConfigSeg] = None,
    dose_cfg: Optional[ConfigDose] = None,
) -> dict[str, Tensor]:
    """Loss terms averaged over the subjects of `batch`."""
    summed: dict[str, Tensor] = {}
    for subject in batch:
        for name, term in subject_loss(
            subject, params, train_cfg, seg_cfg, dose_cfg
        ).items():
            summed[name] = term if name not in summed else ops.add(summed[name], term)
    return {
        name: ops.mul_scalar(term, 1.0 / len(batch)) for name, term in summed.items()
    }


def _check_shapes(
    subjects: Sequence[Subject],
    train_cfg: ConfigTrain,
    seg_cfg: Optional[ConfigSeg],
    dose_cfg: Optional[ConfigDose],
) -> None:
    if not subjects:
        raise ConfigurationError("Training needs at least one subject")
    crop = train_cfg.augmentation.crop_size
    for cfg in (seg_cfg, dose_cfg):
        if cfg is None:
            continue
        expected = cfg.encoder.resolution
        extent = (crop,) * 3 if crop is not None else None
        for subject in subjects:
            shape = extent or subject.shape
            if tuple(shape) != tuple(expected):
                raise ConfigurationError(
                    f"Subject {subject.index} yields volumes of shape {tuple(shape)}, "
                    f"the networks expect {tuple(expected)}"
                )


def _batch_indices(step: int, batch_size: int, count: int) -> list[int]:
    return [(step * batch_size + j) % count for j in range(batch_size)]


def train(
    subjects: Sequence[Subject],
    train_cfg: ConfigTrain,
    seg_cfg: Optional[ConfigSeg] = None,
    dose_cfg: Optional[ConfigDose] = None,
    init: Sequence[Checkpoint] = (),
) -> TrainResult:
    """
    Run `train_cfg.steps` AdamW updates of the networks selected by the mode.

    Batches cycle through `subjects` in order; each sample is augmented with a
    generator seeded from `train_cfg.seed`, so a run is a pure function of its
    inputs.

    Parameters:
        subjects: training subjects
        train_cfg: mode, optimizer and augmentation settings
        seg_cfg: segmentation configuration, for `seg` and `end_to_end`
        dose_cfg: dose configuration, for the dose modes and `end_to_end`
        init: checkpoints loaded into the fresh parameters before training
    Returns:
        TrainResult with the trained parameters, the loss trace and a checkpoint
    Raises:
        ConfigurationError: configurations and subjects do not fit together
        ManifestError: the initial checkpoints do not match the networks
        TrainingError: the loss or a gradient becomes non-finite
    """
    mode = train_cfg.mode
    _require(mode, seg_cfg, dose_cfg)
    if mode == "seg":
        dose_cfg = None
    elif mode != "end_to_end":
        seg_cfg = None
    _check_shapes(subjects, train_cfg, seg_cfg, dose_cfg)
    config = run_config(train_cfg, seg_cfg, dose_cfg)

    with default_dtype(train_cfg.dtype):
        params = build_parameters(mode, seg_cfg, dose_cfg)
        restore(params, init, MODE_REQUIRED_INIT[mode])
        params.astype(train_cfg.dtype)
        freeze_for_mode(params, train_cfg)
        settings = AdamWSettings(
            lr=train_cfg.learning_rate,
            weight_decay=train_cfg.decay,
            beta1=train_cfg.beta1,
            beta2=train_cfg.beta2,
            eps=train_cfg.eps,
        )
        state = OptimState()
        rng = make_rng(train_cfg.seed, _AUGMENT_STREAM)
        logger.info(
            "Training %s: %d trainable of %d parameters, %d steps, lr %g, decay %g",
            mode,
            sum(t.size for _, t in params.trainable()),
            params.parameter_count(),
            train_cfg.steps,
            settings.lr,
            settings.weight_decay,
        )

        rows = []
        for step in range(train_cfg.steps + 1):
            indices = _batch_indices(step, train_cfg.batch_size, len(subjects))
            batch = [augment(subjects[i], train_cfg.augmentation, rng) for i in indices]
            params.zero_grad()
            terms = batch_loss(batch, params, train_cfg, seg_cfg, dose_cfg)
            total = terms["total"]
            value = total.item()
            if not np.isfinite(value):
                raise TrainingError(f"Loss became non-finite at step {step}: {value}")
            row = {"step": step}
            row.update({name: np.nan for name in TRACE_COLUMNS[1:]})
            row.update({name: term.item() for name, term in terms.items()})
            rows.append(row)
            if step % train_cfg.log_every == 0 or step == train_cfg.steps:
                logger.info("Step %d: loss %.6f", step, value)
            if step == train_cfg.steps:
                break
            total.backward()
            try:
                adamw_step(params, state, settings)
            except TrainingError as e:
                raise TrainingError(f"Step {step}: {e}") from e

    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    checkpoint = Checkpoint(
        params=params.state(),
        optim=state,
        step=state.step,
        fingerprint=fingerprint(config),
        config=config,
    )
    return TrainResult(params=params, trace=trace, checkpoint=checkpoint)
