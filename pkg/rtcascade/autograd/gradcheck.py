"""
Finite-difference verification of reverse-mode gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from rtcascade.autograd import ops
from rtcascade.autograd.tensor import Tensor, default_dtype, no_grad
from rtcascade.core.constants import GRADCHECK_FLOOR, GRADCHECK_STEP, GRADCHECK_TOL
from rtcascade.core.exc import NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckReport:
    op_name: str
    max_relative_error: float
    element_count: int
    passed: bool


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = GRADCHECK_FLOOR
) -> np.ndarray:
    """|g_a - g_n| / max(floor, |g_a| + |g_n|), elementwise."""
    scale = np.maximum(floor, np.abs(analytic) + np.abs(numeric))
    return np.abs(analytic - numeric) / scale


def check_finite(root: Tensor) -> None:
    """Raise NumericalError naming the earliest op whose output is not finite."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            stack.extend((p, False) for p in tensor.node.parents)
    for tensor in order:
        if not np.all(np.isfinite(tensor.data)):
            name = tensor.node.op_name if tensor.node is not None else "input"
            raise NumericalError(f"Non-finite value produced by '{name}'")


def _scalarize(out: Tensor, projection: Optional[np.ndarray]) -> Tensor:
    if projection is None:
        return ops.sum(out)
    return ops.sum(ops.mul(out, Tensor(projection)))


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    op_name: str = "f",
    step: float = GRADCHECK_STEP,
    tol: float = GRADCHECK_TOL,
    floor: float = GRADCHECK_FLOOR,
    sample: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare the gradients of `f(*inputs)` against central differences.

    The inputs are converted in place to float64 leaves that require a gradient and
    `f` is evaluated in double precision. A non-scalar output is reduced by a fixed
    random projection. The step for element x is `step * max(1, |x|)`.

    Parameters:
        f: tensor function of the inputs
        inputs: tensors to perturb
        op_name: label used in the report
        sample: if given, check at most this many randomly chosen elements per input
        rng: generator for the projection and the element sample
    Returns:
        GradCheckReport with the largest relative error over all checked elements
    """
    rng = np.random.default_rng(0) if rng is None else rng
    with default_dtype(np.float64):
        for tensor in inputs:
            tensor.data = np.array(tensor.data, dtype=np.float64)
            tensor.requires_grad = True
            tensor.grad = None
        out = f(*inputs)
        check_finite(out)
        projection = None if out.size == 1 else rng.standard_normal(out.shape)
        objective = _scalarize(out, projection)
        objective.backward()

        def evaluate() -> float:
            with no_grad():
                return _scalarize(f(*inputs), projection).item()

        worst = 0.0
        count = 0
        for tensor in inputs:
            analytic = (
                np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
            )
            flat = tensor.data.reshape(-1)
            indices = np.arange(flat.size)
            if sample is not None and sample < flat.size:
                indices = rng.choice(flat.size, size=sample, replace=False)
            for index in indices:
                original = flat[index]
                h = step * max(1.0, abs(original))
                flat[index] = original + h
                plus = evaluate()
                flat[index] = original - h
                minus = evaluate()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * h)
                error = float(
                    relative_error(analytic.reshape(-1)[index], numeric, floor)
                )
                worst = max(worst, error)
                count += 1
    passed = worst < tol
    if not passed:
        logger.warning(
            "Gradient check for %s failed: max relative error %.3g", op_name, worst
        )
    return GradCheckReport(op_name, worst, count, passed)
