"""
Two-stage dose prediction.

Stage one is a small 3-level U-Net mapping the dose input (CT, seven OAR channels,
PTV) to a coarse dose estimate. Stage two concatenates that estimate with the dose
input, encodes the 10-channel volume with a patch transformer, and decodes it with
the shared multiscale decoder. A 1x1x1 head on each of the four finest decoder
levels gives the dose pyramid, coarse to fine.

Heads produce values in units of `dose_scale` Gy and are multiplied back, so the
networks train at unit scale while every output is in Gy.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rtcascade.autograd import conv, ops
from rtcascade.autograd.tensor import Tensor
from rtcascade.core.constants import DOSE_INPUT_CHANNELS, NUM_OARS
from rtcascade.core.exc import ConfigurationError, DimensionError
from rtcascade.core.utils import make_rng
from rtcascade.models import segmentation
from rtcascade.models.decoder import check_widths, decode, init_decoder
from rtcascade.models.dose.config import PYRAMID_LEVELS, ConfigDose
from rtcascade.models.encoder import encode, init_encoder
from rtcascade.models.params import (
    ParameterSet,
    init_conv,
    init_conv_transpose,
)
from rtcascade.models.segmentation import ConfigSeg, SegOutput

logger = logging.getLogger(__name__)

_INIT_STREAM = 2


@dataclass
class DosePyramid:
    """Dose predictions in Gy at scales 1/8, 1/4, 1/2 and 1 of the input, plus the
    stage-one estimate they were conditioned on."""

    levels: list[Tensor]
    stage1: Tensor

    @property
    def final(self) -> Tensor:
        return self.levels[-1]


@dataclass
class CascadeOutput:
    pyramid: DosePyramid
    dose_input: Tensor
    seg: Optional[SegOutput] = None


def _conv(x: Tensor, params: ParameterSet, name: str, **kwargs: int) -> Tensor:
    return conv.conv3d(x, params[f"{name}.weight"], params[f"{name}.bias"], **kwargs)


def _up(x: Tensor, params: ParameterSet, name: str) -> Tensor:
    return conv.conv_transpose3d(
        x, params[f"{name}.weight"], params[f"{name}.bias"], stride=2
    )


def init_stage1(
    cfg: ConfigDose, params: ParameterSet, rng: np.random.Generator
) -> None:
    c1, c2, c3 = cfg.unet_channels
    init_conv(params, "enc1", DOSE_INPUT_CHANNELS, c1, 3, rng)
    init_conv(params, "down1", c1, c2, 2, rng)
    init_conv(params, "enc2", c2, c2, 3, rng)
    init_conv(params, "down2", c2, c3, 2, rng)
    init_conv(params, "bottom", c3, c3, 3, rng)
    init_conv_transpose(params, "up2", c3, c2, 2, rng)
    init_conv(params, "dec2", 2 * c2, c2, 3, rng)
    init_conv_transpose(params, "up1", c2, c1, 2, rng)
    init_conv(params, "dec1", 2 * c1, c1, 3, rng)
    init_conv(params, "head", c1, 1, 1, rng)


def stage1_forward(x_cop: Tensor, cfg: ConfigDose, params: ParameterSet) -> Tensor:
    """Coarse dose estimate [1, D, H, W] in Gy from the 9-channel dose input."""
    act = cfg.activation
    e1 = ops.activation(_conv(x_cop, params, "enc1", padding=1), act)
    d1 = ops.activation(_conv(e1, params, "down1", stride=2), act)
    e2 = ops.activation(_conv(d1, params, "enc2", padding=1), act)
    d2 = ops.activation(_conv(e2, params, "down2", stride=2), act)
    b = ops.activation(_conv(d2, params, "bottom", padding=1), act)
    u2 = ops.activation(_up(b, params, "up2"), act)
    x2 = ops.activation(
        _conv(ops.concat([u2, e2], axis=0), params, "dec2", padding=1), act
    )
    u1 = ops.activation(_up(x2, params, "up1"), act)
    x1 = ops.activation(
        _conv(ops.concat([u1, e1], axis=0), params, "dec1", padding=1), act
    )
    return ops.mul_scalar(_conv(x1, params, "head"), cfg.dose_scale)


def head_name(level: int) -> str:
    return f"heads.{level:02d}"


def init_dose_net(cfg: ConfigDose, params: ParameterSet) -> None:
    """Add stage-one and stage-two parameters under the `stage1` and `stage2` scopes."""
    check_widths(cfg.decoder_channels, cfg.encoder)
    rng = make_rng(cfg.init_seed, _INIT_STREAM)
    init_stage1(cfg, params.scope("stage1"), rng)
    stage2 = params.scope("stage2")
    init_encoder(cfg.encoder, stage2.scope("encoder"), rng)
    init_decoder(cfg.encoder, cfg.decoder_channels, stage2.scope("decoder"), rng)
    for level, width in enumerate(cfg.decoder_channels[-PYRAMID_LEVELS:], start=1):
        init_conv(stage2, head_name(level), width, 1, 1, rng)
    logger.debug(
        "Initialised dose network with %d parameters", params.parameter_count()
    )


def forward(x_cop: Tensor, cfg: ConfigDose, params: ParameterSet) -> DosePyramid:
    """
    Dose pyramid for a dose input.

    Parameters:
        x_cop: dose input [9, D, H, W], channels CT, seven OARs, PTV
        cfg: dose network configuration
        params: dose parameters with `stage1` and `stage2` scopes
    Returns:
        DosePyramid with four levels, unclamped, in Gy
    """
    expected = (DOSE_INPUT_CHANNELS, *cfg.encoder.resolution)
    if x_cop.shape != expected:
        raise ConfigurationError(
            f"Dose input of shape {x_cop.shape} does not match {expected}"
        )
    coarse = stage1_forward(x_cop, cfg, params.scope("stage1"))
    stage2_input = ops.concat(
        [x_cop, ops.mul_scalar(coarse, 1.0 / cfg.dose_scale)], axis=0
    )
    stage2 = params.scope("stage2")
    taps = encode(stage2_input, cfg.encoder, stage2.scope("encoder"))
    decoded = decode(
        taps, stage2_input, cfg.encoder, stage2.scope("decoder"), cfg.activation
    )
    levels = []
    for level, feature in enumerate(decoded[-PYRAMID_LEVELS:], start=1):
        name = head_name(level)
        head = conv.conv3d(
            feature, stage2[f"{name}.weight"], stage2[f"{name}.bias"]
        )
        levels.append(ops.mul_scalar(head, cfg.dose_scale))
    return DosePyramid(levels=levels, stage1=coarse)


def assemble_dose_input(ct: Tensor, oars: Tensor, ptv: Tensor) -> Tensor:
    """Stack CT [1,...], seven OAR channels [7,...] and PTV [1,...] into [9,...]."""
    if ct.shape[0] != 1 or ptv.shape[0] != 1 or oars.shape[0] != NUM_OARS:
        raise DimensionError(
            f"Dose input needs CT (1,...), OARs ({NUM_OARS},...) and PTV (1,...), got "
            f"{ct.shape}, {oars.shape}, {ptv.shape}"
        )
    return ops.concat([ct, oars, ptv], axis=0)


def oar_channels(seg: SegOutput, mode: str) -> Tensor:
    """The seven organ channels of a segmentation, as probabilities or hard masks."""
    if mode == "soft":
        return ops.slice_axis(seg.probs, 0, 1, 1 + NUM_OARS)
    masks = segmentation.predict_masks(seg.probs.data)[1:]
    return Tensor(masks.astype(seg.probs.dtype))


def cascade_forward(
    ct: Tensor,
    ptv: Tensor,
    seg_cfg: ConfigSeg,
    seg_params: ParameterSet,
    dose_cfg: ConfigDose,
    dose_params: ParameterSet,
    oars: Optional[Tensor] = None,
) -> CascadeOutput:
    """Segment the CT, assemble the dose input, and predict the dose pyramid.

    When `oars` is given the segmentation network is skipped and those channels are
    used directly. In hard mode the returned segmentation keeps its graph, so a
    segmentation loss can still train it, but the argmax masks reach the dose network
    as constants.
    """
    if ct.shape != ptv.shape:
        raise DimensionError(f"CT {ct.shape} and PTV {ptv.shape} do not agree")
    seg = None
    if oars is None:
        seg = segmentation.forward(ct, seg_cfg, seg_params)
        oars = oar_channels(seg, dose_cfg.cascade_input)
    dose_input = assemble_dose_input(ct, oars, ptv)
    pyramid = forward(dose_input, dose_cfg, dose_params)
    return CascadeOutput(pyramid=pyramid, dose_input=dose_input, seg=seg)


def predict_dose(pyramid: DosePyramid) -> np.ndarray:
    """Full-resolution prediction [1, D, H, W] with negative values set to 0."""
    return np.maximum(pyramid.final.data, 0.0)
