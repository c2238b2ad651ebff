"""
VOL1 volume files.

Layout: the magic line `VOL1\\n`, one line of sorted-key JSON header
{shape, channels, spacing_mm, dtype, kind, names}, then C*D*H*W little-endian float32
values, channel-major and row-major over (z, y, x) within a channel.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from rtcascade.core.constants import VOL1_KINDS, VOL1_MAGIC
from rtcascade.core.exc import FormatError
from rtcascade.core.structure import SpacingGrid

logger = logging.getLogger(__name__)

_DTYPE_NAME = "f32le"
_PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Volume:
    """A multi-channel volume [C, D, H, W] with its voxel spacing."""

    data: np.ndarray
    spacing: SpacingGrid
    kind: str
    names: Optional[list[str]] = None

    def __post_init__(self) -> None:
        if self.data.ndim != 4:
            raise FormatError(
                "A VOL1 volume is [C, D, H, W], got an array of shape "
                f"{self.data.shape}"
            )
        if self.kind not in VOL1_KINDS:
            raise FormatError(f"Unknown VOL1 kind '{self.kind}'")
        if self.names is not None and len(self.names) != self.data.shape[0]:
            raise FormatError(
                f"{len(self.names)} channel names for {self.data.shape[0]} channels"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[1:])  # type: ignore[return-value]


def encode_volume(volume: Volume) -> bytes:
    data = np.ascontiguousarray(volume.data, dtype=_PAYLOAD_DTYPE)
    if volume.kind == "mask" and not np.isin(data, (0.0, 1.0)).all():
        raise FormatError("Mask volumes may only hold 0 and 1")
    header = {
        "shape": list(volume.shape),
        "channels": int(data.shape[0]),
        "spacing_mm": list(volume.spacing.spacing),
        "dtype": _DTYPE_NAME,
        "kind": volume.kind,
        "names": volume.names,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":"))
    return VOL1_MAGIC + encoded.encode("utf-8") + b"\n" + data.tobytes()


def decode_volume(raw: bytes) -> Volume:
    if not raw.startswith(VOL1_MAGIC):
        raise FormatError("Not a VOL1 file: bad magic line")
    body = raw[len(VOL1_MAGIC) :]
    newline = body.find(b"\n")
    if newline < 0:
        raise FormatError("VOL1 header line is not terminated")
    try:
        header = json.loads(body[:newline].decode("utf-8"))
        shape = tuple(int(n) for n in header["shape"])
        channels = int(header["channels"])
        spacing = SpacingGrid(tuple(header["spacing_mm"]))
        kind = header["kind"]
        dtype = header["dtype"]
    except Exception as e:
        raise FormatError(f"Malformed VOL1 header: {e}") from e
    if dtype != _DTYPE_NAME:
        raise FormatError(f"Unsupported VOL1 dtype '{dtype}'")
    if len(shape) != 3 or channels < 1 or any(n < 1 for n in shape):
        raise FormatError(f"Invalid VOL1 extents: {channels} x {shape}")
    payload = body[newline + 1 :]
    expected = _PAYLOAD_DTYPE.itemsize * channels * int(np.prod(shape))
    if len(payload) != expected:
        raise FormatError(
            f"VOL1 payload holds {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(channels, *shape)
    if kind == "mask" and not np.isin(data, (0.0, 1.0)).all():
        raise FormatError("Mask volume holds values other than 0 and 1")
    return Volume(
        data=data.astype(np.float32),
        spacing=spacing,
        kind=kind,
        names=header.get("names"),
    )


def write_volume(path: Path, volume: Volume) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_volume(volume))
    logger.debug("Wrote %s volume %s to %s", volume.kind, volume.data.shape, path)


def read_volume(path: Path, kind: Optional[str] = None) -> Volume:
    """Read a VOL1 file, optionally insisting on its kind."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read volume {path}: {e}") from e
    try:
        volume = decode_volume(raw)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e
    if kind is not None and volume.kind != kind:
        raise FormatError(f"{path} holds a '{volume.kind}' volume, expected '{kind}'")
    return volume


def mask_volume(
    masks: np.ndarray, spacing: SpacingGrid, names: Sequence[str]
) -> Volume:
    """Boolean masks [C, D, H, W] as a mask volume."""
    return Volume(
        data=np.asarray(masks, dtype=np.float32),
        spacing=spacing,
        kind="mask",
        names=list(names),
    )
