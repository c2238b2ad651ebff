"""
Dense 3-D convolution and its adjoint on channel-first volumes [C, D, H, W].

Both ops loop over the k^3 kernel offsets and do one matrix product per offset
against a strided slab of the (padded) input, which keeps memory at one slab.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from rtcascade.autograd.tensor import Tensor, make_result
from rtcascade.core.exc import ConfigurationError, DimensionError


def _check_volume(op: str, x: Tensor, kernel: Tensor, in_axis: int) -> int:
    if x.ndim != 4:
        raise DimensionError(f"{op}: input must be [C,D,H,W], got {x.shape}")
    if kernel.ndim != 5 or len(set(kernel.shape[2:])) != 1:
        raise DimensionError(f"{op}: kernel must be [*,*,k,k,k], got {kernel.shape}")
    if kernel.shape[in_axis] != x.shape[0]:
        raise DimensionError(
            f"{op}: kernel {kernel.shape} expects {kernel.shape[in_axis]} input "
            f"channels, input has shape {x.shape}"
        )
    return kernel.shape[2]


def _check_bias(op: str, bias: Optional[Tensor], channels: int) -> None:
    if bias is not None and bias.shape != (channels,):
        raise DimensionError(f"{op}: bias {bias.shape} must be ({channels},)")


def conv_output_extent(extent: int, k: int, stride: int, padding: int) -> int:
    span = extent + 2 * padding - k
    if stride < 1 or span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"Extent {extent} with kernel {k}, stride {stride}, padding {padding} "
            "does not give an integral output extent"
        )
    return span // stride + 1


def conv3d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlate `x` [C_in,D,H,W] with `kernel` [C_out,C_in,k,k,k].

    Parameters:
        x: the input volume
        kernel: filter bank, not flipped
        bias: optional per-output-channel offset
        stride: step between output samples along every spatial axis
        padding: zero padding added to both sides of every spatial axis
    Returns:
        Tensor [C_out, D', H', W'] with D' = (D + 2*padding - k) / stride + 1
    """
    k = _check_volume("conv3d", x, kernel, in_axis=1)
    c_out, c_in = kernel.shape[:2]
    _check_bias("conv3d", bias, c_out)
    out_shape = tuple(conv_output_extent(n, k, stride, padding) for n in x.shape[1:])
    pad = ((0, 0),) + ((padding, padding),) * 3
    xp = np.pad(x.data, pad) if padding else x.data
    n_out = int(np.prod(out_shape))

    def slab_index(a: int, b: int, c: int) -> tuple[slice, ...]:
        return (
            slice(None),
            slice(a, a + stride * (out_shape[0] - 1) + 1, stride),
            slice(b, b + stride * (out_shape[1] - 1) + 1, stride),
            slice(c, c + stride * (out_shape[2] - 1) + 1, stride),
        )

    offsets = [(a, b, c) for a in range(k) for b in range(k) for c in range(k)]
    out = np.zeros((c_out, n_out), dtype=np.result_type(x.data, kernel.data))
    for a, b, c in offsets:
        slab = xp[slab_index(a, b, c)].reshape(c_in, n_out)
        out += kernel.data[:, :, a, b, c] @ slab
    if bias is not None:
        out += bias.data[:, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        g2 = g.reshape(c_out, n_out)
        grad_xp = np.zeros_like(xp)
        grad_kernel = np.zeros_like(kernel.data)
        for a, b, c in offsets:
            index = slab_index(a, b, c)
            slab = xp[index].reshape(c_in, n_out)
            grad_kernel[:, :, a, b, c] = g2 @ slab.T
            grad_xp[index] += (kernel.data[:, :, a, b, c].T @ g2).reshape(
                (c_in,) + out_shape
            )
        if padding:
            grad_xp = grad_xp[
                :, padding:-padding, padding:-padding, padding:-padding
            ]
        grads = [grad_xp, grad_kernel]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out.reshape((c_out,) + out_shape), parents, "conv3d", backward)


def conv_transpose3d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 2,
) -> Tensor:
    """Adjoint of `conv3d` without padding; `kernel` is [C_in,C_out,k,k,k].

    Every input voxel stamps its kernel-weighted channels into the output at
    `stride` times its position, so the output extent is (n - 1) * stride + k.
    """
    if stride < 1:
        raise ConfigurationError(f"conv_transpose3d: stride must be >= 1, got {stride}")
    k = _check_volume("conv_transpose3d", x, kernel, in_axis=0)
    c_in, c_out = kernel.shape[:2]
    _check_bias("conv_transpose3d", bias, c_out)
    in_shape = x.shape[1:]
    n_in = int(np.prod(in_shape))
    out_shape = tuple((n - 1) * stride + k for n in in_shape)
    x2 = x.data.reshape(c_in, n_in)

    def slab_index(a: int, b: int, c: int) -> tuple[slice, ...]:
        return (
            slice(None),
            slice(a, a + stride * (in_shape[0] - 1) + 1, stride),
            slice(b, b + stride * (in_shape[1] - 1) + 1, stride),
            slice(c, c + stride * (in_shape[2] - 1) + 1, stride),
        )

    offsets = [(a, b, c) for a in range(k) for b in range(k) for c in range(k)]
    out = np.zeros((c_out,) + out_shape, dtype=np.result_type(x.data, kernel.data))
    for a, b, c in offsets:
        stamp = kernel.data[:, :, a, b, c].T @ x2
        out[slab_index(a, b, c)] += stamp.reshape((c_out,) + in_shape)
    if bias is not None:
        out += bias.data[:, None, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        grad_x = np.zeros((c_in, n_in), dtype=g.dtype)
        grad_kernel = np.zeros_like(kernel.data)
        for a, b, c in offsets:
            g_slab = g[slab_index(a, b, c)].reshape(c_out, n_in)
            grad_x += kernel.data[:, :, a, b, c] @ g_slab
            grad_kernel[:, :, a, b, c] = x2 @ g_slab.T
        grads = [grad_x.reshape(x.shape), grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2, 3)))
        return tuple(grads)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, parents, "conv_transpose3d", backward)
