"""
Trilinear resampling of [C, D, H, W] volumes.

Sample positions follow the half-pixel (align-corners off) convention: output index
i reads the source at (i + 0.5) * n_in / n_out - 0.5, clamped into [0, n_in - 1].
The 3-D resize is separable, so it is applied as three 1-D interpolation matrices.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from rtcascade.autograd.tensor import Tensor, make_result
from rtcascade.core.exc import DimensionError


def source_position(i: int, n_in: int, n_out: int) -> float:
    position = (i + 0.5) * (n_in / n_out) - 0.5
    return min(max(position, 0.0), float(n_in - 1))


def interpolation_matrix(n_in: int, n_out: int, dtype: np.dtype) -> np.ndarray:
    """Row i holds the linear-interpolation weights of output sample i."""
    matrix = np.zeros((n_out, n_in), dtype=dtype)
    for i in range(n_out):
        position = source_position(i, n_in, n_out)
        i0 = int(np.floor(position))
        i1 = min(i0 + 1, n_in - 1)
        frac = position - i0
        matrix[i, i0] += 1.0 - frac
        matrix[i, i1] += frac
    return matrix


def _apply(data: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    md, mh, mw = matrices
    return np.einsum("ad,be,cf,xdef->xabc", md, mh, mw, data, optimize=True)


def trilinear_resize(x: Tensor, out_shape: Sequence[int]) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(
            f"trilinear_resize: input must be [C,D,H,W], got {x.shape}"
        )
    out_shape = tuple(int(n) for n in out_shape)
    if len(out_shape) != 3 or min(out_shape) < 1 or min(x.shape[1:]) < 1:
        raise DimensionError(
            f"trilinear_resize: cannot resize {x.shape} to spatial shape {out_shape}"
        )
    if out_shape == x.shape[1:]:
        return make_result(x.data.copy(), (x,), "trilinear_resize", lambda g: (g,))
    matrices = [
        interpolation_matrix(n_in, n_out, x.dtype)
        for n_in, n_out in zip(x.shape[1:], out_shape)
    ]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_apply(g, [m.T for m in matrices]),)

    return make_result(_apply(x.data, matrices), (x,), "trilinear_resize", backward)
