from rtcascade.models.encoder.config import ConfigEncoder
from rtcascade.models.encoder.encoder import (
    TapFeatures,
    embed,
    encode,
    init_encoder,
    patchify,
    reshape_tap,
    transformer_layer,
    unpatchify,
)

__all__ = [
    "ConfigEncoder",
    "TapFeatures",
    "embed",
    "encode",
    "init_encoder",
    "patchify",
    "reshape_tap",
    "transformer_layer",
    "unpatchify",
]
