"""
Multiscale convolutional decoder shared by the segmentation network and the second
dose stage.

The deepest tap feature seeds the decoder at patch scale. Every following stage
doubles the spatial extent with a stride-2 transposed convolution, fuses a skip
feature projected by a 3^3 convolution, and mixes the result with a multiscale block
(parallel 3^3 and 7^3 convolutions). Skip features for the first three stages come
from the remaining taps, deepest first, each lifted to its stage's scale by a chain
of stride-2 transposed convolutions. Stages beyond the third take the input volume,
resampled to the stage's scale, as their skip.
"""
import logging

import numpy as np

from rtcascade.autograd import conv, ops, resample
from rtcascade.autograd.tensor import Tensor
from rtcascade.core.exc import ConfigurationError
from rtcascade.models.encoder import ConfigEncoder, TapFeatures, reshape_tap
from rtcascade.models.params import ParameterSet, init_conv, init_conv_transpose

logger = logging.getLogger(__name__)

TAP_SKIP_STAGES = 3


def check_widths(widths: list[int], cfg: ConfigEncoder) -> None:
    """Decoder widths: one for the seed plus one per upsampling stage, strictly
    decreasing, all even."""
    expected = cfg.upsampling_stages + 1
    if len(widths) != expected:
        raise ConfigurationError(
            f"Patch size {cfg.patch} needs {expected} decoder widths, got {widths}"
        )
    if any(a <= b for a, b in zip(widths, widths[1:])):
        raise ConfigurationError(f"Decoder widths {widths} must strictly decrease")
    if any(w % 2 for w in widths):
        raise ConfigurationError(
            f"Decoder widths {widths} must be even to split across two kernel sizes"
        )


def init_multiscale_block(
    params: ParameterSet, c_in: int, c_out: int, rng: np.random.Generator
) -> None:
    if c_out % 2:
        raise ConfigurationError(
            f"Multiscale block output width {c_out} must be even"
        )
    init_conv(params, "conv3", c_in, c_out // 2, 3, rng)
    init_conv(params, "conv7", c_in, c_out // 2, 7, rng)


def multiscale_block(x: Tensor, params: ParameterSet, activation: str) -> Tensor:
    """Concatenate a 3^3 and a 7^3 convolution branch, then apply the activation."""
    small = conv.conv3d(
        x, params["conv3.weight"], params["conv3.bias"], stride=1, padding=1
    )
    large = conv.conv3d(
        x, params["conv7.weight"], params["conv7.bias"], stride=1, padding=3
    )
    return ops.activation(ops.concat([small, large], axis=0), activation)


def init_decoder_stage(
    params: ParameterSet,
    below: int,
    skip: int,
    width: int,
    rng: np.random.Generator,
) -> None:
    init_conv_transpose(params, "up", below, width, 2, rng)
    init_conv(params, "skip", skip, width, 3, rng)
    init_multiscale_block(params.scope("block"), 2 * width, width, rng)


def decoder_stage(
    skip: Tensor, below: Tensor, params: ParameterSet, activation: str
) -> Tensor:
    """Upsample `below`, project `skip`, concatenate, and mix."""
    target = tuple(2 * n for n in below.shape[1:])
    if skip.shape[1:] != target:
        raise ConfigurationError(
            f"Skip feature {skip.shape} is not at twice the scale of {below.shape}"
        )
    up = conv.conv_transpose3d(below, params["up.weight"], params["up.bias"], stride=2)
    projected = conv.conv3d(
        skip, params["skip.weight"], params["skip.bias"], stride=1, padding=1
    )
    return multiscale_block(
        ops.concat([up, projected], axis=0), params.scope("block"), activation
    )


def lift_tap(
    volume: Tensor, params: ParameterSet, steps: int, activation: str
) -> Tensor:
    """Bring a patch-scale tap volume up by `steps` stride-2 transposed convolutions."""
    x = volume
    for step in range(steps):
        name = f"{step:02d}"
        x = conv.conv_transpose3d(
            x, params[f"{name}.weight"], params[f"{name}.bias"], stride=2
        )
        x = ops.activation(x, activation)
    return x


def stage_name(stage: int) -> str:
    return f"stages.{stage:02d}"


def skip_taps(cfg: ConfigEncoder) -> list[int]:
    """Taps feeding stages 1, 2, 3: all but the deepest, deepest first."""
    return sorted(cfg.tap_layers, reverse=True)[1:]


def init_decoder(
    cfg: ConfigEncoder,
    widths: list[int],
    params: ParameterSet,
    rng: np.random.Generator,
) -> None:
    check_widths(widths, cfg)
    init_multiscale_block(params.scope("seed"), cfg.embed_dim, widths[0], rng)
    for stage in range(1, cfg.upsampling_stages + 1):
        scope = params.scope(stage_name(stage))
        width = widths[stage]
        if stage <= TAP_SKIP_STAGES:
            lift = scope.scope("lift")
            c_in = cfg.embed_dim
            for step in range(stage):
                init_conv_transpose(lift, f"{step:02d}", c_in, width, 2, rng)
                c_in = width
            skip_channels = width
        else:
            skip_channels = cfg.in_channels
        init_decoder_stage(scope, widths[stage - 1], skip_channels, width, rng)


def decode(
    taps: TapFeatures,
    volume: Tensor,
    cfg: ConfigEncoder,
    params: ParameterSet,
    activation: str,
) -> list[Tensor]:
    """
    Run the decoder ladder.

    Parameters:
        taps: encoder tap features keyed by layer index
        volume: the encoder input, used as skip by stages beyond the third
        cfg: encoder configuration
        params: decoder parameters
        activation: name of the decoder activation
    Returns:
        levels: the seed and the output of every stage, coarse to fine; the last
            entry is at full resolution
    """
    seed = reshape_tap(taps[cfg.num_layers], cfg)
    levels = [multiscale_block(seed, params.scope("seed"), activation)]
    tap_order = skip_taps(cfg)
    for stage in range(1, cfg.upsampling_stages + 1):
        scope = params.scope(stage_name(stage))
        if stage <= TAP_SKIP_STAGES:
            tap = reshape_tap(taps[tap_order[stage - 1]], cfg)
            skip = lift_tap(tap, scope.scope("lift"), stage, activation)
        else:
            scale = 2 ** (cfg.upsampling_stages - stage)
            shape = tuple(n // scale for n in cfg.resolution)
            skip = resample.trilinear_resize(volume, shape) if scale > 1 else volume
        levels.append(decoder_stage(skip, levels[-1], scope, activation))
    return levels
