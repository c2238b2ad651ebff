import numpy as np
import pytest
from pydantic import ValidationError
from scipy import ndimage

from rtcascade.core.exc import PhantomGenerationError, UndefinedMetricError
from rtcascade.core.structure import SpacingGrid, Subject
from rtcascade.phantom import (
    ConfigPhantom,
    distance_to_set,
    generate,
    generator,
    reference_dose,
)
from rtcascade.tests.conftest import SMALL_PHANTOM


def test_subjects_are_reproducible(small_phantom_config: ConfigPhantom) -> None:
    a = generate(small_phantom_config, 1)
    b = generate(ConfigPhantom(**SMALL_PHANTOM), 1)
    for field in ("ct", "oar_masks", "ptv", "body", "dose"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.prescription == b.prescription
    assert a.extras == b.extras


def test_subjects_differ_by_index(small_phantom_config: ConfigPhantom) -> None:
    a = generate(small_phantom_config, 0)
    b = generate(small_phantom_config, 1)
    assert not np.array_equal(a.ct, b.ct)


def test_volumes_and_types(phantom_subject: Subject) -> None:
    n = SMALL_PHANTOM["resolution"]
    assert phantom_subject.shape == (n, n, n)
    assert phantom_subject.ct.dtype == np.float32
    assert phantom_subject.dose.dtype == np.float32
    assert phantom_subject.oar_masks.dtype == bool
    assert 0.0 <= phantom_subject.ct.min() and phantom_subject.ct.max() <= 1.0
    assert phantom_subject.spacing == SpacingGrid((3.0, 3.0, 3.0))
    assert phantom_subject.prescription in (70.0, 63.0, 56.0)
    assert phantom_subject.extras["anchor"] in generator.TEMPLATES


def test_structures_disjoint_and_inside_body(phantom_subject: Subject) -> None:
    organs = phantom_subject.oar_masks
    ptv = phantom_subject.ptv
    body = phantom_subject.body
    assert organs.sum(axis=0).max() <= 1
    assert not (ptv & organs.any(axis=0)).any()
    assert not (organs.any(axis=0) & ~body).any()
    assert not (ptv & ~body).any()
    assert all(organ.sum() >= generator.MIN_STRUCTURE_VOXELS for organ in organs)
    assert ptv.sum() >= generator.MIN_STRUCTURE_VOXELS


def test_ptv_touches_an_organ(phantom_subject: Subject) -> None:
    structure = ndimage.generate_binary_structure(3, 1)
    grown = ndimage.binary_dilation(phantom_subject.ptv, structure=structure)
    assert (grown & phantom_subject.oar_masks.any(axis=0)).any()


def test_dose_rules(phantom_subject: Subject) -> None:
    dose = phantom_subject.dose[0]
    prescription = phantom_subject.prescription
    np.testing.assert_allclose(dose[phantom_subject.ptv], prescription)
    assert (dose[~phantom_subject.body] == 0.0).all()
    inside = phantom_subject.body & ~phantom_subject.ptv
    assert (dose[inside] > 0.0).all()
    assert (dose[inside] < prescription).all()


def test_dose_decays_with_distance() -> None:
    ptv = np.zeros((1, 1, 6), dtype=bool)
    ptv[0, 0, 0] = True
    body = np.ones_like(ptv)
    body[0, 0, 5] = False
    dose = reference_dose(ptv, body, 60.0, 10.0, SpacingGrid((1.0, 1.0, 2.0)))
    expected = 60.0 * np.exp(-np.array([0.0, 2.0, 4.0, 6.0, 8.0]) / 10.0)
    np.testing.assert_allclose(dose[0, 0, :5], expected)
    assert dose[0, 0, 5] == 0.0


def test_distance_to_set() -> None:
    mask = np.zeros((3, 3, 3), dtype=bool)
    mask[0, 0, 0] = True
    distance = distance_to_set(mask, SpacingGrid((1.0, 2.0, 3.0)))
    assert distance[0, 0, 0] == 0.0
    assert distance[2, 1, 1] == pytest.approx(np.sqrt(4.0 + 4.0 + 9.0))
    with pytest.raises(UndefinedMetricError):
        distance_to_set(np.zeros((2, 2, 2), bool), SpacingGrid((1.0, 1.0, 1.0)))


def test_default_resolution_subject() -> None:
    subject = generate(ConfigPhantom(), 0)
    assert subject.shape == (32, 32, 32)
    assert subject.oar_masks.sum(axis=0).max() <= 1


def test_radius_scaling() -> None:
    assert ConfigPhantom(resolution=64).radius_range("brainstem") == (4.0, 5.6)
    assert ConfigPhantom(resolution=16).radius_range("spinal_cord") == (1.5, 1.5)


def test_config_errors() -> None:
    with pytest.raises(ValidationError):
        ConfigPhantom(resolution=24)
    with pytest.raises(ValidationError):
        ConfigPhantom(resolution=8)
    with pytest.raises(ValidationError):
        ConfigPhantom(prescriptions=(56.0, 70.0))
    with pytest.raises(ValidationError):
        ConfigPhantom(organ_radii={"brainstem": (2.0, 2.5)})
    with pytest.raises(ValidationError):
        ConfigPhantom(spacing=(3.0, 0.0, 3.0))
    with pytest.raises(ValidationError):
        ConfigPhantom(colour="blue")


def test_generation_gives_up(
    small_phantom_config: ConfigPhantom, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setattr(generator, "_layout_problem", lambda organs, ptv: "forced")
    cfg = small_phantom_config.model_copy(update={"max_retries": 3})
    with pytest.raises(PhantomGenerationError, match="after 3 attempts: forced"):
        generate(cfg, 0)
