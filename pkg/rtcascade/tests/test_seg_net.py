import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rtcascade.autograd import Tensor, no_grad
from rtcascade.core.constants import NUM_CLASSES
from rtcascade.core.exc import ConfigurationError
from rtcascade.models import segmentation
from rtcascade.models.params import ParameterSet
from rtcascade.models.segmentation import ConfigSeg
from rtcascade.models.suites import toy_seg_config
from rtcascade.tests.conftest import blocky_subject


def build(cfg: ConfigSeg) -> ParameterSet:
    params = ParameterSet()
    segmentation.init_seg_net(cfg, params)
    return params


def test_probabilities_per_voxel(seg_config: ConfigSeg) -> None:
    params = build(seg_config)
    ct = Tensor(blocky_subject().ct)
    with no_grad():
        out = segmentation.forward(ct, seg_config, params)
    assert out.logits.shape == (NUM_CLASSES, 16, 16, 16)
    assert out.probs.shape == (NUM_CLASSES, 16, 16, 16)
    assert np.all(out.probs.data >= 0)
    np.testing.assert_allclose(out.probs.data.sum(axis=0), 1.0, atol=1e-5)


def test_masks_partition_volume(seg_config: ConfigSeg) -> None:
    params = build(seg_config)
    with no_grad():
        out = segmentation.forward(Tensor(blocky_subject().ct), seg_config, params)
    masks = segmentation.predict_masks(out.probs.data)
    assert masks.dtype == bool
    assert masks.shape == (NUM_CLASSES, 16, 16, 16)
    np.testing.assert_array_equal(masks.sum(axis=0), 1)


def test_masks_invariant_to_monotone_transform() -> None:
    rng = np.random.default_rng(0)
    scores = rng.uniform(0.01, 1.0, (NUM_CLASSES, 3, 4, 5))
    probs = scores / scores.sum(axis=0, keepdims=True)
    np.testing.assert_array_equal(
        segmentation.predict_masks(probs),
        segmentation.predict_masks(np.log(probs) * 3.0 + 1.0),
    )


def test_mask_ties_go_to_lower_class() -> None:
    probs = np.zeros((NUM_CLASSES, 1, 1, 2))
    probs[2] = 0.5
    probs[5] = 0.5
    masks = segmentation.predict_masks(probs)
    assert masks[2].all()
    assert not masks[5].any()


def test_init_is_seeded() -> None:
    a = build(toy_seg_config(seed=1)).state()
    b = build(toy_seg_config(seed=1)).state()
    c = build(toy_seg_config(seed=2)).state()
    assert a.keys() == b.keys() == c.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert any(not np.array_equal(a[n], c[n]) for n in a)


def test_parameter_layout(seg_config: ConfigSeg) -> None:
    params = build(seg_config)
    assert params["head.weight"].shape == (NUM_CLASSES, 2, 1, 1, 1)
    assert any(name.startswith("encoder.layers.") for name in params.names())
    assert any(name.startswith("decoder.") for name in params.names())
    assert all(t.requires_grad for _, t in params.items())


def test_wrong_resolution_rejected(seg_config: ConfigSeg) -> None:
    params = build(seg_config)
    with pytest.raises(ConfigurationError):
        segmentation.forward(Tensor(np.zeros((1, 32, 32, 32))), seg_config, params)


def test_relu_variant(caplog: pytest.LogCaptureFixture) -> None:
    cfg = toy_seg_config(activation="relu")
    assert "relu" in caplog.text
    params = build(cfg)
    with no_grad():
        out = segmentation.forward(Tensor(blocky_subject().ct), cfg, params)
    np.testing.assert_allclose(out.probs.data.sum(axis=0), 1.0, atol=1e-5)


def test_seg_config_rejects_multichannel_input() -> None:
    cfg = toy_seg_config()
    with pytest.raises(ValueError):
        ConfigSeg(
            encoder=cfg.encoder.model_copy(update={"in_channels": 2}),
            decoder_channels=cfg.decoder_channels,
        )


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.int64, (2, 3, 4), elements=st.integers(0, NUM_CLASSES - 1)),
    arrays(np.float64, (NUM_CLASSES, 2, 3, 4), elements=st.floats(0.0, 0.4)),
)
def test_masks_recover_dominant_class(labels: np.ndarray, noise: np.ndarray) -> None:
    onehot = labels[None] == np.arange(NUM_CLASSES).reshape(-1, 1, 1, 1)
    masks = segmentation.predict_masks(onehot + noise)
    np.testing.assert_array_equal(np.argmax(masks, axis=0), labels)
