"""
Organ-at-risk segmentation: transformer encoder, multiscale decoder, and a 1x1x1
convolution to eight class logits (background first, then the seven organs in the
order of `rtcascade.core.constants.CLASS_NAMES`).
"""
import logging
from dataclasses import dataclass

import numpy as np

from rtcascade.autograd import conv, ops
from rtcascade.autograd.tensor import Tensor
from rtcascade.core.constants import NUM_CLASSES
from rtcascade.core.exc import ConfigurationError
from rtcascade.core.utils import make_rng
from rtcascade.models.decoder import check_widths, decode, init_decoder
from rtcascade.models.encoder import encode, init_encoder
from rtcascade.models.params import ParameterSet, init_conv
from rtcascade.models.segmentation.config import ConfigSeg

logger = logging.getLogger(__name__)

# tag mixed into the init seed so the two networks never share a stream
_INIT_STREAM = 1


@dataclass
class SegOutput:
    logits: Tensor
    probs: Tensor


def init_seg_net(cfg: ConfigSeg, params: ParameterSet) -> None:
    """Add freshly initialised segmentation parameters to `params`."""
    check_widths(cfg.decoder_channels, cfg.encoder)
    rng = make_rng(cfg.init_seed, _INIT_STREAM)
    init_encoder(cfg.encoder, params.scope("encoder"), rng)
    init_decoder(cfg.encoder, cfg.decoder_channels, params.scope("decoder"), rng)
    init_conv(params, "head", cfg.decoder_channels[-1], NUM_CLASSES, 1, rng)
    logger.debug(
        "Initialised segmentation network with %d parameters",
        params.parameter_count(),
    )


def forward(ct: Tensor, cfg: ConfigSeg, params: ParameterSet) -> SegOutput:
    """Class logits and softmax probabilities [8, D, H, W] for a CT [1, D, H, W]."""
    if ct.shape != (1, *cfg.encoder.resolution):
        raise ConfigurationError(
            f"CT of shape {ct.shape} does not match the configured resolution "
            f"{cfg.encoder.resolution}"
        )
    taps = encode(ct, cfg.encoder, params.scope("encoder"))
    levels = decode(taps, ct, cfg.encoder, params.scope("decoder"), cfg.activation)
    logits = conv.conv3d(levels[-1], params["head.weight"], params["head.bias"])
    return SegOutput(logits=logits, probs=ops.softmax(logits, axis=0))


def predict_masks(probs: np.ndarray) -> np.ndarray:
    """
    Per-voxel argmax over the class axis as a boolean one-hot volume.

    Parameters:
        probs: class scores [8, D, H, W]; any monotone transform of the
            probabilities gives the same result
    Returns:
        masks: [8, D, H, W] booleans, exactly one True per voxel; ties go to the
            lower class index
    """
    probs = np.asarray(probs)
    labels = np.argmax(probs, axis=0)
    return labels[None, ...] == np.arange(probs.shape[0]).reshape(-1, 1, 1, 1)
