from dataclasses import replace

import numpy as np
import pytest

from rtcascade.core.exc import ConfigurationError
from rtcascade.core.structure import SpacingGrid, Subject
from rtcascade.training import ConfigAugmentation, augment
from rtcascade.tests.conftest import blocky_subject

VOLUMES = ("ct", "oar_masks", "ptv", "body", "dose")


def only(**values: object) -> ConfigAugmentation:
    """Augmentation with every transform off except the given settings."""
    settings = {
        "intensity_shift_prob": 0.0,
        "flip_prob": 0.0,
        "rot90_prob": 0.0,
        "crop_size": None,
    }
    settings.update(values)
    return ConfigAugmentation(**settings)


def anisotropic_subject() -> Subject:
    return replace(blocky_subject(), spacing=SpacingGrid((1.0, 2.0, 3.0)))


def test_disabled_is_identity_copy() -> None:
    subject = blocky_subject()
    out = augment(subject, ConfigAugmentation.disabled(), np.random.default_rng(0))
    for key in VOLUMES:
        np.testing.assert_array_equal(getattr(out, key), getattr(subject, key))
        assert getattr(out, key) is not getattr(subject, key)
    assert out.spacing == subject.spacing
    assert out.index == subject.index


def test_draw_count_does_not_depend_on_outcome() -> None:
    subject = blocky_subject()
    off = np.random.default_rng(7)
    on = np.random.default_rng(7)
    augment(subject, ConfigAugmentation.disabled(), off)
    augment(
        subject,
        only(intensity_shift_prob=1.0, flip_prob=1.0, rot90_prob=1.0),
        on,
    )
    assert off.uniform() == on.uniform()


def test_same_generator_state_same_subject() -> None:
    subject = blocky_subject()
    cfg = ConfigAugmentation()
    a = augment(subject, cfg, np.random.default_rng(3))
    b = augment(subject, cfg, np.random.default_rng(3))
    for key in VOLUMES:
        np.testing.assert_array_equal(getattr(a, key), getattr(b, key))
    assert a.spacing == b.spacing


def test_flip_acts_on_every_volume() -> None:
    subject = anisotropic_subject()
    out = augment(
        subject, only(flip_axes=("x",), flip_prob=1.0), np.random.default_rng(0)
    )
    np.testing.assert_array_equal(out.ct, subject.ct[..., ::-1])
    np.testing.assert_array_equal(out.dose, subject.dose[..., ::-1])
    np.testing.assert_array_equal(out.oar_masks, subject.oar_masks[..., ::-1])
    np.testing.assert_array_equal(out.ptv, subject.ptv[..., ::-1])
    assert out.spacing == subject.spacing


def test_rotation_swaps_spacing_on_odd_turns() -> None:
    subject = anisotropic_subject()
    cfg = only(rot90_axes=(("y", "x"),), rot90_prob=1.0)
    for seed in range(6):
        out = augment(subject, cfg, np.random.default_rng(seed))
        replay = np.random.default_rng(seed)
        replay.uniform()
        replay.uniform(-cfg.intensity_shift_range, cfg.intensity_shift_range)
        for _ in cfg.flip_axes:
            replay.uniform()
        replay.uniform()
        turns = int(replay.integers(1, 4))
        np.testing.assert_array_equal(
            out.ptv, np.rot90(subject.ptv, k=turns, axes=(1, 2))
        )
        np.testing.assert_array_equal(
            out.ct, np.rot90(subject.ct, k=turns, axes=(2, 3))
        )
        expected = (1.0, 3.0, 2.0) if turns % 2 else (1.0, 2.0, 3.0)
        assert out.spacing.spacing == expected


def test_shift_changes_ct_only() -> None:
    subject = blocky_subject()
    cfg = only(intensity_shift_prob=1.0, intensity_shift_range=0.2)
    out = augment(subject, cfg, np.random.default_rng(1))
    delta = out.ct - subject.ct
    assert np.ptp(delta) < 1e-5
    assert 0.0 < abs(float(delta.mean())) <= 0.2
    np.testing.assert_array_equal(out.dose, subject.dose)
    np.testing.assert_array_equal(out.oar_masks, subject.oar_masks)
    assert out.ct.dtype == subject.ct.dtype


def test_crop_extent() -> None:
    subject = blocky_subject()
    out = augment(subject, only(crop_size=8), np.random.default_rng(2))
    assert out.shape == (8, 8, 8)
    assert out.ct.shape == (1, 8, 8, 8)
    assert out.oar_masks.shape == (7, 8, 8, 8)
    assert out.oar_masks.dtype == bool


def test_crop_must_fit() -> None:
    with pytest.raises(ConfigurationError):
        augment(blocky_subject(), only(crop_size=17), np.random.default_rng(0))


def test_augmentation_config_checks() -> None:
    with pytest.raises(ValueError):
        ConfigAugmentation(rot90_axes=(("x", "x"),))
    with pytest.raises(ValueError):
        ConfigAugmentation(crop_size=0)
    with pytest.raises(ValueError):
        ConfigAugmentation(flip_axes=("w",))
    with pytest.raises(ValueError):
        ConfigAugmentation(flip_prob=1.5)
