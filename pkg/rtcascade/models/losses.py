"""
Training objectives.

`dice_ce_loss` is the segmentation loss: one minus the mean soft Dice over the eight
classes, plus the voxel-averaged cross-entropy. `dose_loss` is the weighted L1 dose
loss with deep supervision over the dose pyramid.
"""
import logging
from typing import Sequence

from rtcascade.autograd import ops, resample
from rtcascade.autograd.tensor import Tensor, as_tensor, no_grad
from rtcascade.core.exc import ConfigurationError, ContractError, DimensionError
from rtcascade.models.dose.config import LossWeights

logger = logging.getLogger(__name__)

LOSS_EPS = 1e-5
PROBABILITY_SLACK = 1e-6


def dice_ce_loss(probs: Tensor, onehot: Tensor, eps: float = LOSS_EPS) -> Tensor:
    """
    Soft Dice plus cross-entropy over a class axis.

    Parameters:
        probs: class probabilities [J, D, H, W] on the simplex
        onehot: per-voxel class indicator of the same shape
        eps: guard added to every Dice denominator and inside the logarithm
    Returns:
        scalar tensor 1 - (2/J) sum_j I_j / (Y_j + P_j + eps) - (1/K) sum Y log(P + eps)
        with I_j, Y_j, P_j the class-j sums of Y*P, Y^2, P^2 and K the voxel count
    """
    onehot = as_tensor(onehot)
    if probs.shape != onehot.shape:
        raise DimensionError(
            f"Probabilities {probs.shape} and targets {onehot.shape} do not agree"
        )
    low, high = float(probs.data.min()), float(probs.data.max())
    if low < -PROBABILITY_SLACK or high > 1.0 + PROBABILITY_SLACK:
        raise ContractError(
            f"Probabilities must lie in [0, 1], found values in [{low:g}, {high:g}]"
        )
    classes = probs.shape[0]
    voxels = probs.size // classes
    spatial = tuple(range(1, probs.ndim))
    intersection = ops.sum(ops.mul(onehot, probs), axis=spatial)
    squares = ops.add(
        ops.sum(ops.square(onehot), axis=spatial),
        ops.sum(ops.square(probs), axis=spatial),
    )
    fractions = ops.div(intersection, ops.add_scalar(squares, eps))
    dice_term = ops.mul_scalar(ops.sum(fractions), 2.0 / classes)
    cross_entropy = ops.mul_scalar(
        ops.sum(ops.mul(onehot, ops.log(probs, eps=eps))), -1.0 / voxels
    )
    one_minus_dice = ops.add_scalar(ops.mul_scalar(dice_term, -1.0), 1.0)
    return ops.add(one_minus_dice, cross_entropy)


def build_gt_pyramid(dose: Tensor, levels: int) -> list[Tensor]:
    """Ground-truth dose at the pyramid scales, coarse to fine.

    Level s of `levels` is the dose trilinearly resized by 1/2^(levels - s); the last
    level is the dose itself.
    """
    dose = as_tensor(dose)
    if levels < 1:
        raise ConfigurationError(
            f"A dose pyramid needs at least one level, got {levels}"
        )
    factor = 2 ** (levels - 1)
    if any(n % factor for n in dose.shape[1:]):
        raise ConfigurationError(
            f"Dose extents {dose.shape[1:]} are not divisible by {factor} for "
            f"{levels} pyramid levels"
        )
    pyramid = []
    with no_grad():
        for level in range(1, levels):
            scale = 2 ** (levels - level)
            shape = tuple(n // scale for n in dose.shape[1:])
            pyramid.append(resample.trilinear_resize(dose, shape).detach())
    pyramid.append(dose)
    return pyramid


def _mean_abs(pred: Tensor, target: Tensor) -> Tensor:
    return ops.mean(ops.abs(ops.sub(pred, as_tensor(target))))


def dose_loss_terms(
    pred: Sequence[Tensor], target: Sequence[Tensor], weights: LossWeights
) -> dict[str, Tensor]:
    """The full-resolution term `dose_out`, the deep-supervision term `dose_ds`, and
    their weighted sum `total`."""
    if len(pred) != len(target):
        raise DimensionError(
            f"Prediction has {len(pred)} pyramid levels, target has {len(target)}"
        )
    for level, (p, t) in enumerate(zip(pred, target), start=1):
        if p.shape != as_tensor(t).shape:
            raise DimensionError(
                f"Pyramid level {level}: prediction {p.shape} != target "
                f"{as_tensor(t).shape}"
            )
    levels = len(pred)
    if levels == 1 and weights.lambda2 > 0:
        raise ConfigurationError(
            "Deep supervision needs at least two pyramid levels when lambda2 > 0"
        )
    out = _mean_abs(pred[-1], target[-1])
    terms = {"dose_out": out}
    total = ops.mul_scalar(out, weights.lambda1)
    if levels > 1:
        coarse = [_mean_abs(p, t) for p, t in zip(pred[:-1], target[:-1])]
        ds = coarse[0]
        for term in coarse[1:]:
            ds = ops.add(ds, term)
        ds = ops.mul_scalar(ds, 1.0 / (levels - 1))
        terms["dose_ds"] = ds
        if weights.lambda2 > 0:
            total = ops.add(total, ops.mul_scalar(ds, weights.lambda2))
    terms["total"] = total
    return terms


def dose_loss(
    pred: Sequence[Tensor], target: Sequence[Tensor], weights: LossWeights
) -> Tensor:
    """lambda1 * L_out + lambda2 * L_ds over matching prediction and target pyramids."""
    return dose_loss_terms(pred, target, weights)["total"]

