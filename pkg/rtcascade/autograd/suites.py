"""
Random instances of every primitive op, for gradient checking.

Each case maps a generator to a function and the tensors it is differentiated with
respect to. Inputs near non-differentiable points (relu, abs at 0) and outside the
domain (log, div) are moved away before checking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from rtcascade.autograd import conv, ops, resample
from rtcascade.autograd.gradcheck import GradCheckReport, grad_check
from rtcascade.autograd.tensor import Tensor

Instance = tuple[Callable[..., Tensor], list[Tensor]]


@dataclass(frozen=True)
class GradCase:
    name: str
    build: Callable[[np.random.Generator], Instance]


def _t(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _away_from_zero(rng: np.random.Generator, *shape: int) -> Tensor:
    values = rng.uniform(0.1, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return Tensor(values)


def _positive(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(0.5, 2.0, size=shape))


OP_CASES: tuple[GradCase, ...] = (
    GradCase("matmul", lambda r: (ops.matmul, [_t(r, 4, 5), _t(r, 5, 3)])),
    GradCase("add", lambda r: (ops.add, [_t(r, 3, 4), _t(r, 3, 4)])),
    GradCase("sub", lambda r: (ops.sub, [_t(r, 3, 4), _t(r, 3, 4)])),
    GradCase("mul", lambda r: (ops.mul, [_t(r, 3, 4), _t(r, 3, 4)])),
    GradCase("div", lambda r: (ops.div, [_t(r, 3, 4), _positive(r, 3, 4)])),
    GradCase(
        "mul_scalar", lambda r: (lambda x: ops.mul_scalar(x, -1.7), [_t(r, 2, 5)])
    ),
    GradCase(
        "add_bias",
        lambda r: (lambda x, b: ops.add_bias(x, b, axis=0), [_t(r, 3, 2, 2), _t(r, 3)]),
    ),
    GradCase(
        "concat",
        lambda r: (
            lambda a, b: ops.concat([a, b], axis=0),
            [_t(r, 1, 3, 3, 3), _t(r, 2, 3, 3, 3)],
        ),
    ),
    GradCase(
        "reshape", lambda r: (lambda x: ops.reshape(x, (6, 4)), [_t(r, 2, 3, 4)])
    ),
    GradCase(
        "permute", lambda r: (lambda x: ops.permute(x, (2, 0, 1)), [_t(r, 2, 3, 4)])
    ),
    GradCase(
        "slice_axis",
        lambda r: (lambda x: ops.slice_axis(x, 1, 1, 3), [_t(r, 2, 4, 3)]),
    ),
    GradCase("relu", lambda r: (ops.relu, [_away_from_zero(r, 4, 5)])),
    GradCase("gelu", lambda r: (ops.gelu, [_t(r, 4, 5)])),
    GradCase("mish", lambda r: (ops.mish, [_t(r, 4, 5)])),
    GradCase(
        "log", lambda r: (lambda x: ops.log(x, eps=1e-6), [_positive(r, 4, 5)])
    ),
    GradCase("square", lambda r: (ops.square, [_t(r, 4, 5)])),
    GradCase("abs", lambda r: (ops.abs, [_away_from_zero(r, 4, 5)])),
    GradCase("sum", lambda r: (lambda x: ops.sum(x, axis=1), [_t(r, 3, 4, 2)])),
    GradCase("mean", lambda r: (lambda x: ops.mean(x, axis=(0, 2)), [_t(r, 3, 4, 2)])),
    GradCase("softmax", lambda r: (lambda x: ops.softmax(x, axis=1), [_t(r, 3, 5)])),
    GradCase(
        "layer_norm",
        lambda r: (
            lambda x, g, s: ops.layer_norm(x, g, s, axis=-1),
            [_t(r, 3, 6), _t(r, 6), _t(r, 6)],
        ),
    ),
    GradCase(
        "conv3d",
        lambda r: (
            lambda x, k, b: conv.conv3d(x, k, b, stride=1, padding=1),
            [_t(r, 2, 4, 4, 4), _t(r, 3, 2, 3, 3, 3), _t(r, 3)],
        ),
    ),
    GradCase(
        "conv3d_stride2",
        lambda r: (
            lambda x, k, b: conv.conv3d(x, k, b, stride=2, padding=0),
            [_t(r, 2, 4, 4, 4), _t(r, 3, 2, 2, 2, 2), _t(r, 3)],
        ),
    ),
    GradCase(
        "conv_transpose3d",
        lambda r: (
            lambda x, k, b: conv.conv_transpose3d(x, k, b, stride=2),
            [_t(r, 2, 2, 3, 2), _t(r, 2, 3, 2, 2, 2), _t(r, 3)],
        ),
    ),
    GradCase(
        "trilinear_resize",
        lambda r: (
            lambda x: resample.trilinear_resize(x, (3, 5, 2)),
            [_t(r, 2, 4, 4, 4)],
        ),
    ),
)


def run_cases(
    cases: tuple[GradCase, ...], instances: int = 10, seed: int = 0
) -> list[GradCheckReport]:
    """Check every case on `instances` random draws; keep the worst draw per case."""
    reports = []
    for case in cases:
        rng = np.random.default_rng([seed, len(reports)])
        worst = None
        for _ in range(instances):
            f, inputs = case.build(rng)
            report = grad_check(f, inputs, op_name=case.name, rng=rng)
            if worst is None or report.max_relative_error > worst.max_relative_error:
                worst = report
        reports.append(worst)
    return reports
