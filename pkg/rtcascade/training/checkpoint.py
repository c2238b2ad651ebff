"""
CKPT1 checkpoint files.

Layout: the magic line `CKPT1\\n`, one line of sorted-key JSON manifest, then the
payload of little-endian float32 values. The payload holds every parameter in name
order, followed by the optimizer first and second moments in name order. The manifest
records names, shapes and byte offsets of each array, the step, a configuration
fingerprint, the configuration itself and the sha256 of the payload.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from rtcascade.core.constants import CKPT1_MAGIC
from rtcascade.core.exc import FormatError, ManifestError
from rtcascade.models.params import ParameterSet
from rtcascade.training.optim import OptimState

logger = logging.getLogger(__name__)

_PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    optim: Optional[OptimState] = None
    step: int = 0
    fingerprint: str = ""
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.params.values()))


class _PayloadWriter:
    def __init__(self: "_PayloadWriter") -> None:
        self.chunks: list[bytes] = []
        self.offset = 0

    def append(self: "_PayloadWriter", array: np.ndarray) -> int:
        start = self.offset
        chunk = np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE).tobytes()
        self.chunks.append(chunk)
        self.offset += len(chunk)
        return start


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    writer = _PayloadWriter()
    names = sorted(checkpoint.params)
    offsets = [writer.append(checkpoint.params[n]) for n in names]
    optim = None
    if checkpoint.optim is not None:
        moment_names = checkpoint.optim.names()
        optim = {
            "step": checkpoint.optim.step,
            "names": moment_names,
            "m_offsets": [writer.append(checkpoint.optim.m[n]) for n in moment_names],
            "v_offsets": [writer.append(checkpoint.optim.v[n]) for n in moment_names],
        }
    payload = b"".join(writer.chunks)
    manifest = {
        "names": names,
        "shapes": [list(np.shape(checkpoint.params[n])) for n in names],
        "offsets": offsets,
        "parameter_count": checkpoint.parameter_count,
        "optim": optim,
        "step": checkpoint.step,
        "fingerprint": checkpoint.fingerprint,
        "config": checkpoint.config,
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return CKPT1_MAGIC + header.encode("utf-8") + b"\n" + payload


def _read_array(
    payload: bytes, offset: int, shape: Sequence[int], name: str
) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64))
    end = offset + count * _PAYLOAD_DTYPE.itemsize
    if offset < 0 or end > len(payload):
        raise FormatError(f"Array {name} lies outside the checkpoint payload")
    array = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE, count=count, offset=offset)
    return array.reshape(shape).astype(np.float32)


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if not raw.startswith(CKPT1_MAGIC):
        raise FormatError("Not a CKPT1 file: bad magic line")
    body = raw[len(CKPT1_MAGIC) :]
    newline = body.find(b"\n")
    if newline < 0:
        raise FormatError("CKPT1 manifest line is not terminated")
    try:
        manifest = json.loads(body[:newline].decode("utf-8"))
        names = list(manifest["names"])
        shapes = [tuple(s) for s in manifest["shapes"]]
        offsets = list(manifest["offsets"])
        checksum = manifest["checksum"]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"Malformed CKPT1 manifest: {e}") from e
    if not len(names) == len(shapes) == len(offsets):
        raise FormatError("CKPT1 manifest lists differ in length")
    payload = body[newline + 1 :]
    if hashlib.sha256(payload).hexdigest() != checksum:
        raise FormatError("CKPT1 payload checksum mismatch")

    params = {
        name: _read_array(payload, offset, shape, name)
        for name, shape, offset in zip(names, shapes, offsets)
    }
    if manifest.get("parameter_count", sum(a.size for a in params.values())) != sum(
        a.size for a in params.values()
    ):
        raise FormatError("CKPT1 parameter count disagrees with the stored shapes")

    optim = None
    stored = manifest.get("optim")
    if stored is not None:
        optim = OptimState(step=int(stored["step"]))
        for name, m_offset, v_offset in zip(
            stored["names"], stored["m_offsets"], stored["v_offsets"]
        ):
            if name not in params:
                raise FormatError(f"Optimizer state for unknown parameter {name}")
            shape = params[name].shape
            optim.m[name] = _read_array(payload, m_offset, shape, name)
            optim.v[name] = _read_array(payload, v_offset, shape, name)
    return Checkpoint(
        params=params,
        optim=optim,
        step=int(manifest.get("step", 0)),
        fingerprint=str(manifest.get("fingerprint", "")),
        config=dict(manifest.get("config") or {}),
    )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info(
        "Wrote checkpoint %s with %d parameters at step %d",
        path,
        checkpoint.parameter_count,
        checkpoint.step,
    )


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(raw)


def restore(
    params: ParameterSet,
    checkpoints: Sequence[Checkpoint],
    required: Sequence[str] = (),
) -> None:
    """
    Copy stored parameters into `params`.

    Later checkpoints override earlier ones on shared names.

    Parameters:
        params: the model parameters to fill
        checkpoints: checkpoints whose parameters must all exist in `params`
        required: name prefixes that must be covered by the checkpoints
    Raises:
        ManifestError: a stored name is unknown or mis-shaped, or a required
            parameter is not covered
    """
    merged: dict[str, np.ndarray] = {}
    for checkpoint in checkpoints:
        merged.update(checkpoint.params)
    own = dict(params.items())
    unexpected = sorted(set(merged) - set(own))
    if unexpected:
        raise ManifestError(
            "Checkpoint parameters not present in the model: " + ", ".join(unexpected)
        )
    missing = sorted(
        name
        for name in own
        if name not in merged and any(name.startswith(p) for p in required)
    )
    if missing:
        raise ManifestError(
            "Model parameters missing from the checkpoints: " + ", ".join(missing)
        )
    covered = {name: own[name] for name in merged}
    ParameterSet(covered).load_state(merged)
    logger.info("Restored %d of %d parameters", len(merged), len(own))
