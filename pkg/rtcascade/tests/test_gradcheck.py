import numpy as np
import pytest

from rtcascade.autograd import Tensor, ops
from rtcascade.autograd.gradcheck import check_finite, grad_check, relative_error
from rtcascade.autograd.suites import OP_CASES, run_cases
from rtcascade.autograd.tensor import make_result
from rtcascade.core.constants import GRADCHECK_TOL
from rtcascade.core.exc import NumericalError
from rtcascade.models.suites import MODEL_FLOOR, SCOPES, run_scope


def wrong_square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), "wrong_square", lambda g: (g * x.data,))


def test_every_primitive_op_passes() -> None:
    reports = run_cases(OP_CASES, instances=10, seed=0)
    assert len(reports) == len(OP_CASES)
    failed = [(r.op_name, r.max_relative_error) for r in reports if not r.passed]
    assert failed == []


def test_op_scope_uses_at_least_ten_instances() -> None:
    reports = run_scope("op", instances=1, seed=4)
    assert all(r.passed for r in reports)
    assert {r.op_name for r in reports} == {case.name for case in OP_CASES}


def test_wrong_gradient_is_caught() -> None:
    report = grad_check(wrong_square, [Tensor(np.array([1.0, 2.0, -3.0]))])
    assert not report.passed
    assert report.max_relative_error == pytest.approx(1.0 / 3.0, rel=1e-4)
    assert report.element_count == 3


def test_grad_check_samples_elements() -> None:
    report = grad_check(
        ops.square, [Tensor(np.arange(20.0))], sample=5, rng=np.random.default_rng(1)
    )
    assert report.passed
    assert report.element_count == 5


def test_relative_error_floor() -> None:
    assert relative_error(np.array(0.0), np.array(1e-12))[()] == pytest.approx(1e-4)
    assert relative_error(np.array(1.0), np.array(1.0))[()] == 0.0


def test_model_floor_bounds_absolute_error() -> None:
    # near-zero gradients pass on an absolute error below GRADCHECK_TOL * MODEL_FLOOR
    bound = GRADCHECK_TOL * MODEL_FLOOR
    inside = relative_error(np.array(0.0), np.array(0.5 * bound), MODEL_FLOOR)
    outside = relative_error(np.array(0.0), np.array(2.0 * bound), MODEL_FLOOR)
    assert inside[()] < GRADCHECK_TOL < outside[()]


def test_check_finite_names_first_bad_op() -> None:
    x = Tensor(np.array([-1.0, 1.0]), requires_grad=True)
    with np.errstate(invalid="ignore"):
        out = ops.sum(ops.square(ops.log(x)))
    with pytest.raises(NumericalError, match="'log'"):
        check_finite(out)


def test_check_finite_accepts_finite_graph() -> None:
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    check_finite(ops.sum(ops.log(x)))


def test_unknown_scope() -> None:
    assert SCOPES == ("op", "seg", "dose", "e2e")
    with pytest.raises(ValueError):
        run_scope("vit")


@pytest.mark.slow
@pytest.mark.parametrize("scope", ["seg", "dose", "e2e"])
def test_model_scopes_pass(scope: str) -> None:
    reports = run_scope(scope, instances=1, seed=0)
    failed = [(r.op_name, r.max_relative_error) for r in reports if not r.passed]
    assert failed == []
