import numpy as np
import pytest

from rtcascade.core.exc import ConfigurationError, ManifestError, TrainingError
from rtcascade.core.structure import Subject
from rtcascade.core.utils import fingerprint
from rtcascade.models.dose import ConfigDose
from rtcascade.models.segmentation import ConfigSeg
from rtcascade.models.suites import toy_dose_config, toy_seg_config
from rtcascade.phantom import ConfigPhantom, generate
from rtcascade.training import (
    ConfigAugmentation,
    ConfigTrain,
    build_parameters,
    train,
)
from rtcascade.training.trainer import TRACE_COLUMNS, run_config
from rtcascade.tests.conftest import blocky_subject


def quick(mode: str, steps: int = 2, **values: object) -> ConfigTrain:
    settings = {
        "mode": mode,
        "steps": steps,
        "batch_size": 1,
        "lr": 1e-3,
        "augmentation": ConfigAugmentation.disabled(),
    }
    settings.update(values)
    return ConfigTrain(**settings)


def prefixed(state: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {name: array for name, array in state.items() if name.startswith(prefix)}


def assert_same_state(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> None:
    assert sorted(a) == sorted(b)
    for name in a:
        assert a[name].tobytes() == b[name].tobytes(), name


def test_trace_has_one_row_per_update_plus_final(
    toy_subjects: list[Subject], seg_config: ConfigSeg
) -> None:
    cfg = quick("seg", steps=2)
    result = train(toy_subjects, cfg, seg_cfg=seg_config)
    trace = result.trace
    assert list(trace.columns) == TRACE_COLUMNS
    assert list(trace["step"]) == [0, 1, 2]
    np.testing.assert_array_equal(trace["total"], trace["seg_loss"])
    assert trace["dose_out"].isna().all()
    assert np.isfinite(trace["total"]).all()
    assert result.checkpoint.step == 2
    assert result.checkpoint.optim.step == 2
    assert result.checkpoint.fingerprint == fingerprint(
        run_config(cfg, seg_config, None)
    )
    assert all(name.startswith("seg.") for name in result.checkpoint.params)


def test_zero_steps_only_evaluates(
    toy_subjects: list[Subject], seg_config: ConfigSeg
) -> None:
    result = train(toy_subjects, quick("seg", steps=0), seg_cfg=seg_config)
    assert len(result.trace) == 1
    fresh = build_parameters("seg", seg_cfg=seg_config).state()
    assert_same_state(result.params.state(), fresh)


def test_runs_are_reproducible(
    toy_subjects: list[Subject], seg_config: ConfigSeg
) -> None:
    # default augmentation exercises the seeded generator
    cfg = quick("seg", steps=2, augmentation=ConfigAugmentation())
    a = train(toy_subjects, cfg, seg_cfg=seg_config)
    b = train(toy_subjects, cfg, seg_cfg=seg_config)
    np.testing.assert_array_equal(a.trace["total"], b.trace["total"])
    assert_same_state(a.params.state(), b.params.state())


def test_stage_one_training_leaves_stage_two_untouched(
    toy_subjects: list[Subject], dose_config: ConfigDose
) -> None:
    result = train(toy_subjects, quick("dose_stage1", steps=1), dose_cfg=dose_config)
    fresh = build_parameters("dose_stage1", dose_cfg=dose_config).state()
    trained = result.params.state()
    assert_same_state(
        prefixed(trained, "dose.stage2."), prefixed(fresh, "dose.stage2.")
    )
    changed = [
        name
        for name in prefixed(trained, "dose.stage1.")
        if not np.array_equal(trained[name], fresh[name])
    ]
    assert changed
    trace = result.trace
    # one pyramid level, so no deep supervision
    assert trace["dose_ds"].isna().all()
    assert trace["seg_loss"].isna().all()
    np.testing.assert_allclose(trace["total"], 10.0 * trace["dose_out"], rtol=1e-5)


def test_stage_two_keeps_stage_one_frozen(
    toy_subjects: list[Subject], dose_config: ConfigDose
) -> None:
    stage1 = train(toy_subjects, quick("dose_stage1", steps=1), dose_cfg=dose_config)
    stored = prefixed(stage1.checkpoint.params, "dose.stage1.")
    result = train(
        toy_subjects,
        quick("dose_stage2", steps=1),
        dose_cfg=dose_config,
        init=[stage1.checkpoint],
    )
    assert_same_state(prefixed(result.params.state(), "dose.stage1."), stored)
    assert np.isfinite(result.trace["dose_ds"]).all()


def test_stage_two_needs_stage_one(
    toy_subjects: list[Subject], dose_config: ConfigDose
) -> None:
    with pytest.raises(ManifestError, match="dose.stage1"):
        train(toy_subjects, quick("dose_stage2"), dose_cfg=dose_config)


def test_end_to_end_with_frozen_segmentation(
    toy_subjects: list[Subject], seg_config: ConfigSeg, dose_config: ConfigDose
) -> None:
    seg = train(toy_subjects, quick("seg", steps=0), seg_cfg=seg_config)
    dose1 = train(toy_subjects, quick("dose_stage1", steps=0), dose_cfg=dose_config)
    result = train(
        toy_subjects,
        quick("end_to_end", steps=1, freeze_seg=True),
        seg_cfg=seg_config,
        dose_cfg=dose_config,
        init=[seg.checkpoint, dose1.checkpoint],
    )
    trained = result.params.state()
    assert_same_state(prefixed(trained, "seg."), seg.checkpoint.params)
    assert_same_state(
        prefixed(trained, "dose.stage1."),
        prefixed(dose1.checkpoint.params, "dose.stage1."),
    )
    row = result.trace.iloc[0]
    expected = row["seg_loss"] + 10.0 * row["dose_out"] + 8.0 * row["dose_ds"]
    assert row["total"] == pytest.approx(expected, rel=1e-4)


def test_end_to_end_trains_segmentation_through_hard_masks(
    toy_subjects: list[Subject], seg_config: ConfigSeg
) -> None:
    dose_config = toy_dose_config(cascade_input="hard")
    seg = train(toy_subjects, quick("seg", steps=0), seg_cfg=seg_config)
    dose1 = train(toy_subjects, quick("dose_stage1", steps=0), dose_cfg=dose_config)
    result = train(
        toy_subjects,
        quick("end_to_end", steps=1, freeze_seg=False),
        seg_cfg=seg_config,
        dose_cfg=dose_config,
        init=[seg.checkpoint, dose1.checkpoint],
    )
    trained = result.params.state()
    # the segmentation loss alone moves the segmentation network
    changed = [
        name
        for name, array in seg.checkpoint.params.items()
        if not np.array_equal(trained[name], array)
    ]
    assert changed
    assert_same_state(
        prefixed(trained, "dose.stage1."),
        prefixed(dose1.checkpoint.params, "dose.stage1."),
    )
    assert np.isfinite(result.trace[["total", "seg_loss", "dose_out"]]).all().all()


def test_missing_configuration(toy_subjects: list[Subject]) -> None:
    with pytest.raises(ConfigurationError, match="segmentation"):
        train(toy_subjects, quick("seg"))
    with pytest.raises(ConfigurationError, match="dose"):
        train(toy_subjects, quick("dose_stage1"))


def test_shape_mismatch(toy_subjects: list[Subject], seg_config: ConfigSeg) -> None:
    crop = ConfigAugmentation.disabled().model_copy(update={"crop_size": 8})
    cropped = quick("seg", augmentation=crop)
    with pytest.raises(ConfigurationError, match="expect"):
        train(toy_subjects, cropped, seg_cfg=seg_config)
    with pytest.raises(ConfigurationError, match="at least one"):
        train([], quick("seg"), seg_cfg=seg_config)


def test_non_finite_loss_stops_training(seg_config: ConfigSeg) -> None:
    subject = blocky_subject()
    subject.ct[0, 4, 4, 4] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        train([subject], quick("seg"), seg_cfg=seg_config)


@pytest.mark.slow
def test_segmentation_overfits_one_subject(seg_config: ConfigSeg) -> None:
    cfg = quick("seg", steps=30, lr=1e-2)
    trace = train([blocky_subject()], cfg, seg_cfg=seg_config).trace
    assert trace["total"].iloc[-1] < trace["total"].iloc[0]


@pytest.mark.slow
def test_small_step_descends(toy_subjects: list[Subject]) -> None:
    # one update on the full batch, so both trace rows score the same subjects
    cfg = quick(
        "seg", steps=1, batch_size=2, lr=1e-5, weight_decay=0.0, dtype="float64"
    )
    descended = 0
    for trial in range(20):
        trace = train(toy_subjects, cfg, seg_cfg=toy_seg_config(seed=trial)).trace
        descended += int(trace["total"].iloc[1] <= trace["total"].iloc[0])
    assert descended >= 18


@pytest.mark.slow
def test_segmentation_descends_on_two_phantoms(
    small_phantom_config: ConfigPhantom, seg_config: ConfigSeg
) -> None:
    subjects = [generate(small_phantom_config, i) for i in range(2)]
    cfg = quick("seg", steps=200, batch_size=2)
    trace = train(subjects, cfg, seg_cfg=seg_config).trace
    assert len(trace) == 201
    assert trace["total"].iloc[-1] < trace["total"].iloc[0]
