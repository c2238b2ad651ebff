"""
Elementwise, structural, and reduction primitives with their gradient rules.

There is no general broadcasting: binary ops need identical shapes, except for
`add_bias` (a 1-D bias along one axis) and the `*_scalar` ops.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf, expit

from rtcascade.autograd.tensor import Tensor, make_result
from rtcascade.core.exc import DimensionError

Axis = Optional[int | tuple[int, ...]]

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not agree")


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} is out of range for {ndim} dimensions")
    return axis % ndim


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return make_result(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return make_result(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return make_result(
        a.data * b.data, (a, b), "mul", lambda g: (g * b.data, g * a.data)
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("div", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g / b.data, -g * a.data / (b.data * b.data)

    return make_result(a.data / b.data, (a, b), "div", backward)


def mul_scalar(x: Tensor, c: float) -> Tensor:
    return make_result(x.data * c, (x,), "mul_scalar", lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return make_result(x.data + c, (x,), "add_scalar", lambda g: (g,))


def add_bias(x: Tensor, bias: Tensor, axis: int) -> Tensor:
    """Add the 1-D `bias` along `axis` of `x`, broadcasting over all other axes."""
    axis = _normalize_axis(axis, x.ndim)
    if bias.ndim != 1 or bias.shape[0] != x.shape[axis]:
        raise DimensionError(
            f"add_bias: bias {bias.shape} does not match axis {axis} of {x.shape}"
        )
    view = [1] * x.ndim
    view[axis] = bias.shape[0]
    others = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g, g.sum(axis=others)

    return make_result(
        x.data + bias.data.reshape(view), (x, bias), "add_bias", backward
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return make_result(a.data @ b.data, (a, b), "matmul", backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of the rows of `x`: x @ weight + bias."""
    return add_bias(matmul(x, weight), bias, axis=1)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    axis = _normalize_axis(axis, tensors[0].ndim)
    reference = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(reference) or any(
            other[i] != reference[i] for i in range(len(reference)) if i != axis
        ):
            raise DimensionError(
                f"concat: shape {t.shape} does not fit {tensors[0].shape} "
                f"on axis {axis}"
            )
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return make_result(data, tuple(tensors), "concat", backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    return make_result(
        x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(x.shape),)
    )


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return make_result(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        "permute",
        lambda g: (g.transpose(inverse),),
    )


def transpose(x: Tensor) -> Tensor:
    return permute(x, (1, 0))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Entries start:stop of `axis`."""
    axis = _normalize_axis(axis, x.ndim)
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(
            f"slice_axis: [{start}:{stop}] is outside axis {axis} of {x.shape}"
        )
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return make_result(x.data[index].copy(), (x,), "slice_axis", backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), "relu", lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian error linear unit, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return make_result(
        x.data * cdf, (x,), "gelu", lambda g: (g * (cdf + x.data * pdf),)
    )


def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x)), with softplus evaluated as logaddexp(0, x)."""
    softplus = np.logaddexp(0.0, x.data)
    tanh_sp = np.tanh(softplus)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        sech2 = 1.0 - tanh_sp * tanh_sp
        return (g * (tanh_sp + x.data * sech2 * expit(x.data)),)

    return make_result(x.data * tanh_sp, (x,), "mish", backward)


def activation(x: Tensor, name: str) -> Tensor:
    if name == "mish":
        return mish(x)
    if name == "relu":
        return relu(x)
    if name == "gelu":
        return gelu(x)
    raise ValueError(f"Unknown activation '{name}'")


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    """Natural logarithm of x + eps."""
    shifted = x.data + eps
    return make_result(np.log(shifted), (x,), "log", lambda g: (g / shifted,))


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), "square", lambda g: (2.0 * g * x.data,))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return make_result(np.abs(x.data), (x,), "abs", lambda g: (g * np.sign(x.data),))


def sum(x: Tensor, axis: Axis = None) -> Tensor:  # noqa: A001
    if axis is None:
        return make_result(
            np.asarray(x.data.sum()),
            (x,),
            "sum",
            lambda g: (np.broadcast_to(g, x.shape).copy(),),
        )
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(_normalize_axis(a, x.ndim) for a in axes)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(np.expand_dims(g, axes), x.shape).copy(),)

    return make_result(x.data.sum(axis=axes), (x,), "sum", backward)


def mean(x: Tensor, axis: Axis = None) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = math.prod(x.shape[a] for a in axes)
    return mul_scalar(sum(x, axis), 1.0 / count)


def softmax(x: Tensor, axis: int) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), "softmax", backward)


def layer_norm(
    x: Tensor, gain: Tensor, shift: Tensor, axis: int = -1, eps: float = 1e-5
) -> Tensor:
    """Normalise every slice along `axis` to zero mean and unit variance, then apply
    the per-position `gain` and `shift`."""
    axis = _normalize_axis(axis, x.ndim)
    n = x.shape[axis]
    if gain.shape != (n,) or shift.shape != (n,):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} / shift {shift.shape} must be ({n},)"
        )
    view = [1] * x.ndim
    view[axis] = n
    others = tuple(i for i in range(x.ndim) if i != axis)
    mu = x.data.mean(axis=axis, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    out = xhat * gain.data.reshape(view) + shift.data.reshape(view)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxhat = g * gain.data.reshape(view)
        gx = (
            inv_std
            / n
            * (
                n * gxhat
                - gxhat.sum(axis=axis, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axis, keepdims=True)
            )
        )
        return gx, (g * xhat).sum(axis=others), g.sum(axis=others)

    return make_result(out, (x, gain, shift), "layer_norm", backward)
