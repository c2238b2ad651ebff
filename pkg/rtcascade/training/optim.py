"""
AdamW with decoupled weight decay over a `ParameterSet`.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from rtcascade.core.exc import TrainingError
from rtcascade.models.params import ParameterSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamWSettings:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class OptimState:
    """First and second moment estimates keyed by parameter name, plus the number of
    updates taken so far."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def names(self) -> list[str]:
        return sorted(self.m)


def adamw_step(
    params: ParameterSet, state: OptimState, settings: AdamWSettings
) -> None:
    """
    Apply one AdamW update to every trainable parameter in place.

    The decay multiplies the parameter by (1 - lr * weight_decay) before the
    bias-corrected Adam update is subtracted. Frozen parameters are skipped and keep
    no moment state.

    Parameters:
        params: parameters with gradients from the last backward pass
        state: moment estimates, updated in place
        settings: learning rate, decay and Adam constants
    Raises:
        TrainingError: a trainable parameter has no gradient or a non-finite one
    """
    trainable = params.trainable()
    for name, tensor in trainable:
        if tensor.grad is None:
            raise TrainingError(f"Parameter {name} received no gradient")
        if not np.all(np.isfinite(tensor.grad)):
            raise TrainingError(f"Gradient of parameter {name} is not finite")

    state.step += 1
    t = state.step
    b1, b2 = settings.beta1, settings.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    for name, tensor in trainable:
        grad = tensor.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * grad
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * grad * grad
        data = tensor.data * (1.0 - settings.lr * settings.weight_decay)
        update = (m / correction1) / (np.sqrt(v / correction2) + settings.eps)
        tensor.data = (data - settings.lr * update).astype(tensor.dtype)
    logger.debug("AdamW step %d over %d parameters", t, len(trainable))
