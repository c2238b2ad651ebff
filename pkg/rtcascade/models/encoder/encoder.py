"""
3-D patch transformer encoder.

The volume [C, D, H, W] is cut into non-overlapping P^3 patches, each patch is
flattened channel-major then (z, y, x) and linearly projected to K features, a
trainable positional table is added, and the token sequence runs through L pre-norm
transformer layers. The outputs of four evenly spaced layers are kept as tap
features for the decoder.
"""
import logging
import math

import numpy as np

from rtcascade.autograd import ops
from rtcascade.autograd.tensor import Tensor
from rtcascade.core.exc import ConfigurationError, DimensionError
from rtcascade.models.encoder.config import ConfigEncoder
from rtcascade.models.params import ParameterSet, init_affine, init_norm

logger = logging.getLogger(__name__)

TapFeatures = dict[int, Tensor]

# (C, nD, P, nH, P, nW, P) -> (nD, nH, nW, C, P, P, P)
_PATCH_AXES = (1, 3, 5, 0, 2, 4, 6)
_UNPATCH_AXES = (3, 0, 4, 1, 5, 2, 6)

POSITION_STD = 0.02


def patchify(volume: Tensor, patch: int) -> Tensor:
    """
    Cut a [C, D, H, W] volume into a token sequence [N, C * P^3].

    Parameters:
        volume: channel-first volume
        patch: edge length P of the cubic patches
    Returns:
        tokens: row j is patch j, patches enumerated in (z, y, x) row-major order
            over the patch grid
    """
    if volume.ndim != 4:
        raise DimensionError(f"patchify expects [C,D,H,W], got {volume.shape}")
    c, d, h, w = volume.shape
    if d % patch or h % patch or w % patch:
        raise ConfigurationError(
            f"Volume extents {(d, h, w)} are not divisible by patch size {patch}"
        )
    nd, nh, nw = d // patch, h // patch, w // patch
    x = ops.reshape(volume, (c, nd, patch, nh, patch, nw, patch))
    x = ops.permute(x, _PATCH_AXES)
    return ops.reshape(x, (nd * nh * nw, c * patch**3))


def unpatchify(
    tokens: Tensor, channels: int, grid: tuple[int, int, int], patch: int
) -> Tensor:
    """Inverse of `patchify`."""
    nd, nh, nw = grid
    x = ops.reshape(tokens, (nd, nh, nw, channels, patch, patch, patch))
    x = ops.permute(x, _UNPATCH_AXES)
    return ops.reshape(x, (channels, nd * patch, nh * patch, nw * patch))


def embed(tokens: Tensor, projection: Tensor, position: Tensor) -> Tensor:
    """Linear patch projection plus the positional table, row by row."""
    if (
        tokens.ndim != 2
        or projection.ndim != 2
        or tokens.shape[1] != projection.shape[0]
    ):
        raise ConfigurationError(
            f"Tokens {tokens.shape} do not fit the projection {projection.shape}"
        )
    projected = ops.matmul(tokens, projection)
    if position.shape != projected.shape:
        raise ConfigurationError(
            f"Positional table {position.shape} != projected tokens {projected.shape}"
        )
    return ops.add(projected, position)


def multi_head_attention(
    x: Tensor, params: ParameterSet, num_heads: int
) -> tuple[Tensor, list[Tensor]]:
    """Scaled dot-product self-attention.

    Returns the attention output [N, K] and the per-head weight matrices [N, N].
    """
    n, k = x.shape
    if k % num_heads:
        raise ConfigurationError(f"Width {k} is not divisible by {num_heads} heads")
    head_dim = k // num_heads
    scale = 1.0 / math.sqrt(head_dim)
    qkv = ops.linear(x, params["qkv.weight"], params["qkv.bias"])
    heads = []
    weights = []
    for i in range(num_heads):
        q = ops.slice_axis(qkv, 1, i * head_dim, (i + 1) * head_dim)
        key = ops.slice_axis(qkv, 1, k + i * head_dim, k + (i + 1) * head_dim)
        v = ops.slice_axis(qkv, 1, 2 * k + i * head_dim, 2 * k + (i + 1) * head_dim)
        scores = ops.mul_scalar(ops.matmul(q, ops.transpose(key)), scale)
        attn = ops.softmax(scores, axis=1)
        weights.append(attn)
        heads.append(ops.matmul(attn, v))
    merged = ops.concat(heads, axis=1)
    return ops.linear(merged, params["out.weight"], params["out.bias"]), weights


def transformer_layer(x: Tensor, params: ParameterSet, num_heads: int) -> Tensor:
    """Pre-norm residual block: x + MSA(LN(x)), then + MLP(LN(.))."""
    normed = ops.layer_norm(x, params["norm1.gain"], params["norm1.shift"])
    attended, _ = multi_head_attention(normed, params.scope("attn"), num_heads)
    x = ops.add(x, attended)
    normed = ops.layer_norm(x, params["norm2.gain"], params["norm2.shift"])
    hidden = ops.gelu(
        ops.linear(normed, params["mlp.fc1.weight"], params["mlp.fc1.bias"])
    )
    out = ops.linear(hidden, params["mlp.fc2.weight"], params["mlp.fc2.bias"])
    return ops.add(x, out)


def layer_name(index: int) -> str:
    return f"layers.{index:02d}"


def init_encoder(
    cfg: ConfigEncoder, params: ParameterSet, rng: np.random.Generator
) -> None:
    """Add the encoder parameters to `params`.

    Affine weights are drawn with fan-in scaling, biases are zero, the positional
    table is N(0, 0.02^2).
    """
    k = cfg.embed_dim
    params.add(
        "patch_embed.weight",
        rng.normal(0.0, 1.0 / math.sqrt(cfg.token_length), (cfg.token_length, k)),
    )
    params.add("pos_embed", rng.normal(0.0, POSITION_STD, (cfg.num_tokens, k)))
    for index in range(1, cfg.num_layers + 1):
        layer = params.scope(layer_name(index))
        init_norm(layer, "norm1", k)
        init_affine(layer.scope("attn"), "qkv", k, 3 * k, rng)
        init_affine(layer.scope("attn"), "out", k, k, rng)
        init_norm(layer, "norm2", k)
        init_affine(layer.scope("mlp"), "fc1", k, cfg.mlp_width, rng)
        init_affine(layer.scope("mlp"), "fc2", cfg.mlp_width, k, rng)


def encode(volume: Tensor, cfg: ConfigEncoder, params: ParameterSet) -> TapFeatures:
    """Patchify, embed and run the layer stack, keeping the tap-layer outputs."""
    expected = (cfg.in_channels, *cfg.resolution)
    if volume.shape != expected:
        raise ConfigurationError(
            f"Encoder expects a volume of shape {expected}, got {volume.shape}"
        )
    tokens = patchify(volume, cfg.patch)
    x = embed(tokens, params["patch_embed.weight"], params["pos_embed"])
    taps: TapFeatures = {}
    for index in range(1, cfg.num_layers + 1):
        x = transformer_layer(x, params.scope(layer_name(index)), cfg.num_heads)
        if index in cfg.tap_layers:
            taps[index] = x
    return taps


def reshape_tap(feature: Tensor, cfg: ConfigEncoder) -> Tensor:
    """Token sequence [N, K] back onto the patch grid as a volume [K, D/P, H/P, W/P]."""
    if feature.shape != (cfg.num_tokens, cfg.embed_dim):
        raise DimensionError(
            f"Tap feature {feature.shape} does not match "
            f"({cfg.num_tokens}, {cfg.embed_dim})"
        )
    return ops.reshape(ops.transpose(feature), (cfg.embed_dim, *cfg.grid))
