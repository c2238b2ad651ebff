import numpy as np
import pytest

from rtcascade.autograd import Tensor, ops
from rtcascade.autograd.gradcheck import grad_check
from rtcascade.core.constants import NUM_CLASSES
from rtcascade.core.exc import ConfigurationError, ContractError, DimensionError
from rtcascade.models.dose import LossWeights
from rtcascade.models.losses import (
    LOSS_EPS,
    build_gt_pyramid,
    dice_ce_loss,
    dose_loss,
    dose_loss_terms,
)


def onehot_of(labels: np.ndarray) -> np.ndarray:
    classes = np.arange(NUM_CLASSES).reshape(-1, *([1] * labels.ndim))
    return (labels[None] == classes).astype(np.float64)


def every_class_labels() -> np.ndarray:
    labels = np.arange(4 * 4 * 4).reshape(4, 4, 4) % NUM_CLASSES
    return labels


def reference_dice_ce(probs: np.ndarray, onehot: np.ndarray) -> float:
    spatial = tuple(range(1, probs.ndim))
    intersection = (onehot * probs).sum(axis=spatial)
    denominator = (onehot**2).sum(axis=spatial) + (probs**2).sum(axis=spatial)
    dice = 2.0 / probs.shape[0] * (intersection / (denominator + LOSS_EPS)).sum()
    voxels = probs[0].size
    cross_entropy = -(onehot * np.log(probs + LOSS_EPS)).sum() / voxels
    return 1.0 - dice + cross_entropy


def test_perfect_prediction_near_zero() -> None:
    onehot = onehot_of(every_class_labels())
    loss = dice_ce_loss(Tensor(onehot), Tensor(onehot)).item()
    assert abs(loss) < 1e-4


def test_uniform_prediction_matches_reference() -> None:
    onehot = onehot_of(every_class_labels())
    probs = np.full_like(onehot, 1.0 / NUM_CLASSES)
    loss = dice_ce_loss(Tensor(probs), Tensor(onehot)).item()
    assert loss == pytest.approx(reference_dice_ce(probs, onehot), rel=1e-10)
    assert loss > np.log(NUM_CLASSES) - 1e-3


def test_random_prediction_matches_reference() -> None:
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((NUM_CLASSES, 3, 3, 3))
    probs = np.exp(logits) / np.exp(logits).sum(axis=0, keepdims=True)
    onehot = onehot_of(rng.integers(0, NUM_CLASSES, (3, 3, 3)))
    loss = dice_ce_loss(Tensor(probs), Tensor(onehot)).item()
    assert loss == pytest.approx(reference_dice_ce(probs, onehot), rel=1e-10)


def test_dice_ce_gradient() -> None:
    rng = np.random.default_rng(1)
    onehot = Tensor(onehot_of(rng.integers(0, NUM_CLASSES, (2, 2, 2))))

    def f(logits: Tensor) -> Tensor:
        return dice_ce_loss(ops.softmax(logits, axis=0), onehot)

    report = grad_check(
        f, [Tensor(rng.standard_normal((NUM_CLASSES, 2, 2, 2)))], floor=1e-6
    )
    assert report.passed, report.max_relative_error


def test_dice_ce_contract() -> None:
    onehot = onehot_of(every_class_labels())
    with pytest.raises(ContractError):
        dice_ce_loss(Tensor(onehot * 1.5), Tensor(onehot))
    with pytest.raises(ContractError):
        dice_ce_loss(Tensor(onehot - 0.1), Tensor(onehot))
    with pytest.raises(DimensionError):
        dice_ce_loss(Tensor(onehot[:, :2]), Tensor(onehot))


def test_gt_pyramid_scales() -> None:
    rng = np.random.default_rng(2)
    dose = Tensor(rng.uniform(0.0, 70.0, (1, 16, 16, 8)))
    pyramid = build_gt_pyramid(dose, 4)
    assert [level.shape for level in pyramid] == [
        (1, 2, 2, 1),
        (1, 4, 4, 2),
        (1, 8, 8, 4),
        (1, 16, 16, 8),
    ]
    assert pyramid[-1] is dose
    assert all(not level.requires_grad for level in pyramid[:-1])


def test_gt_pyramid_of_constant_dose() -> None:
    pyramid = build_gt_pyramid(Tensor(np.full((1, 8, 8, 8), 42.0)), 3)
    for level in pyramid:
        np.testing.assert_allclose(level.data, 42.0)


def test_gt_pyramid_errors() -> None:
    with pytest.raises(ConfigurationError):
        build_gt_pyramid(Tensor(np.zeros((1, 12, 12, 12))), 4)
    with pytest.raises(ConfigurationError):
        build_gt_pyramid(Tensor(np.zeros((1, 8, 8, 8))), 0)


def test_uniform_offset_costs_both_terms() -> None:
    rng = np.random.default_rng(3)
    target = build_gt_pyramid(Tensor(rng.uniform(0.0, 70.0, (1, 8, 8, 8))), 4)
    pred = [ops.add_scalar(t, -1.5) for t in target]
    weights = LossWeights()
    expected = (weights.lambda1 + weights.lambda2) * 1.5
    assert expected == pytest.approx(27.0)
    assert dose_loss(pred, target, weights).item() == pytest.approx(expected)


def test_dose_loss_terms() -> None:
    target = [Tensor(np.zeros((1, 2, 2, 2))), Tensor(np.zeros((1, 4, 4, 4)))]
    pred = [Tensor(np.full((1, 2, 2, 2), 2.0)), Tensor(np.full((1, 4, 4, 4), -1.0))]
    terms = dose_loss_terms(pred, target, LossWeights(lambda1=1.0, lambda2=0.5))
    assert terms["dose_out"].item() == pytest.approx(1.0)
    assert terms["dose_ds"].item() == pytest.approx(2.0)
    assert terms["total"].item() == pytest.approx(2.0)


def test_deep_supervision_needs_levels() -> None:
    level = [Tensor(np.zeros((1, 2, 2, 2)))]
    with pytest.raises(ConfigurationError):
        dose_loss(level, level, LossWeights())
    no_ds = LossWeights(lambda1=1.0, lambda2=0.0)
    assert dose_loss(level, level, no_ds).item() == 0.0


def test_dose_loss_shape_checks() -> None:
    a = [Tensor(np.zeros((1, 2, 2, 2))), Tensor(np.zeros((1, 4, 4, 4)))]
    with pytest.raises(DimensionError):
        dose_loss(a, a[:1], LossWeights())
    with pytest.raises(DimensionError):
        dose_loss(a, [a[0], Tensor(np.zeros((1, 4, 4, 2)))], LossWeights())


def test_dose_loss_gradient_is_sign() -> None:
    target = [Tensor(np.zeros((1, 2, 2, 2)))]
    values = np.array([1.0, -2.0, 3.0, -4.0, 0.5, 0.5, -0.5, 1.0])
    pred = Tensor(values.reshape(1, 2, 2, 2), requires_grad=True)
    dose_loss([pred], target, LossWeights(lambda1=8.0, lambda2=0.0)).backward()
    np.testing.assert_allclose(pred.grad, np.sign(pred.data))
