import numpy as np
import pytest
from pydantic import ValidationError

from rtcascade.autograd import Tensor
from rtcascade.core.exc import ConfigurationError, DimensionError
from rtcascade.core.utils import make_rng
from rtcascade.models.encoder import (
    ConfigEncoder,
    encode,
    init_encoder,
    patchify,
    reshape_tap,
    unpatchify,
)
from rtcascade.models.encoder.encoder import multi_head_attention
from rtcascade.models.params import ParameterSet


def full_size_config(num_layers: int = 12) -> ConfigEncoder:
    return ConfigEncoder(
        resolution=128,
        patch=16,
        in_channels=1,
        embed_dim=768,
        num_layers=num_layers,
        num_heads=12,
    )


def test_full_size_patch_grid() -> None:
    cfg = full_size_config()
    assert cfg.grid == (8, 8, 8)
    assert cfg.num_tokens == 512
    assert cfg.token_length == 16**3
    assert cfg.upsampling_stages == 4
    assert cfg.tap_layers == (3, 6, 9, 12)


def test_tap_layers_follow_depth() -> None:
    assert full_size_config(num_layers=8).tap_layers == (2, 4, 6, 8)


def test_encoder_config_errors() -> None:
    with pytest.raises(ValidationError):
        full_size_config(num_layers=6)
    with pytest.raises(ValidationError):
        ConfigEncoder(
            resolution=128,
            patch=16,
            in_channels=1,
            embed_dim=64,
            num_layers=8,
            num_heads=4,
            tap_layers=(1, 2, 3, 8),
        )
    with pytest.raises(ValidationError):
        ConfigEncoder(
            resolution=120,
            patch=16,
            in_channels=1,
            embed_dim=64,
            num_layers=4,
            num_heads=4,
        )
    with pytest.raises(ValidationError):
        ConfigEncoder(
            resolution=32,
            patch=8,
            in_channels=1,
            embed_dim=10,
            num_layers=4,
            num_heads=4,
        )


def test_non_cubic_resolution() -> None:
    cfg = ConfigEncoder(
        resolution=(16, 32, 8),
        patch=8,
        in_channels=2,
        embed_dim=4,
        num_layers=4,
        num_heads=2,
    )
    assert cfg.grid == (2, 4, 1)
    assert cfg.num_tokens == 8


def test_patch_token_order() -> None:
    volume = np.arange(2 * 4 * 4 * 4, dtype=np.float64).reshape(2, 4, 4, 4)
    tokens = patchify(Tensor(volume), 2).data
    assert tokens.shape == (8, 16)
    np.testing.assert_array_equal(tokens[0], volume[:, :2, :2, :2].reshape(-1))
    np.testing.assert_array_equal(tokens[1], volume[:, :2, :2, 2:].reshape(-1))
    np.testing.assert_array_equal(tokens[2], volume[:, :2, 2:, :2].reshape(-1))
    np.testing.assert_array_equal(tokens[4], volume[:, 2:, :2, :2].reshape(-1))


def test_unpatchify_inverts_patchify() -> None:
    rng = np.random.default_rng(0)
    volume = rng.standard_normal((3, 8, 4, 12))
    tokens = patchify(Tensor(volume), 4)
    back = unpatchify(tokens, 3, (2, 1, 3), 4)
    np.testing.assert_array_equal(back.data, volume)


def test_patchify_rejects_indivisible_volume() -> None:
    with pytest.raises(ConfigurationError):
        patchify(Tensor(np.zeros((1, 6, 8, 8))), 4)
    with pytest.raises(DimensionError):
        patchify(Tensor(np.zeros((8, 8, 8))), 4)


def toy_encoder() -> tuple[ConfigEncoder, ParameterSet]:
    cfg = ConfigEncoder(
        resolution=16, patch=8, in_channels=2, embed_dim=6, num_layers=4, num_heads=2
    )
    params = ParameterSet()
    init_encoder(cfg, params, make_rng(0, 9))
    return cfg, params


def test_encode_keeps_tap_layers() -> None:
    cfg, params = toy_encoder()
    volume = Tensor(np.random.default_rng(1).standard_normal((2, 16, 16, 16)))
    taps = encode(volume, cfg, params)
    assert sorted(taps) == [1, 2, 3, 4]
    for feature in taps.values():
        assert feature.shape == (8, 6)
        assert np.all(np.isfinite(feature.data))
    assert not np.allclose(taps[1].data, taps[4].data)


def test_encoder_parameter_names() -> None:
    cfg, params = toy_encoder()
    names = params.names()
    assert "patch_embed.weight" in names
    assert params["pos_embed"].shape == (8, 6)
    assert params["patch_embed.weight"].shape == (2 * 8**3, 6)
    assert params["layers.04.mlp.fc1.weight"].shape == (6, cfg.mlp_width)
    assert "layers.05.norm1.gain" not in names


def test_encode_rejects_wrong_shape() -> None:
    cfg, params = toy_encoder()
    with pytest.raises(ConfigurationError):
        encode(Tensor(np.zeros((1, 16, 16, 16))), cfg, params)


def test_attention_weights_on_simplex() -> None:
    cfg, params = toy_encoder()
    x = Tensor(np.random.default_rng(2).standard_normal((8, 6)))
    out, weights = multi_head_attention(x, params.scope("layers.01.attn"), 2)
    assert out.shape == (8, 6)
    assert len(weights) == 2
    for w in weights:
        assert w.shape == (8, 8)
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, rtol=1e-5)


def test_reshape_tap_grid_layout() -> None:
    cfg, _ = toy_encoder()
    feature = np.arange(8 * 6, dtype=np.float64).reshape(8, 6)
    volume = reshape_tap(Tensor(feature), cfg).data
    assert volume.shape == (6, 2, 2, 2)
    assert volume[3, 1, 0, 1] == feature[4 + 1, 3]
    with pytest.raises(DimensionError):
        reshape_tap(Tensor(np.zeros((4, 6))), cfg)
