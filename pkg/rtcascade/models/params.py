"""
Named trainable parameters shared by the segmentation and dose networks.

A `ParameterSet` is a flat, ordered map from dotted names
("seg.encoder.layers.00.attn.qkv.weight") to leaf tensors. `scope` returns a view
that prefixes every name it touches, so a sub-network can be built and run against
its own namespace while the optimizer and the checkpoint see one flat map.
"""
from __future__ import annotations

import logging
from typing import Any, Iterator, Optional

import numpy as np

from rtcascade.autograd.tensor import Tensor, get_default_dtype
from rtcascade.core.exc import ConfigurationError, ManifestError

logger = logging.getLogger(__name__)


class ParameterSet:
    def __init__(
        self: "ParameterSet",
        tensors: Optional[dict[str, Tensor]] = None,
        prefix: str = "",
    ) -> None:
        self._tensors: dict[str, Tensor] = {} if tensors is None else tensors
        self._prefix = prefix

    def __repr__(self: "ParameterSet") -> str:
        return f"ParameterSet(prefix={self._prefix!r}, tensors={len(self)})"

    def _full(self: "ParameterSet", name: str) -> str:
        return f"{self._prefix}{name}"

    def _own(self: "ParameterSet") -> Iterator[tuple[str, Tensor]]:
        for full in sorted(self._tensors):
            if full.startswith(self._prefix):
                yield full[len(self._prefix) :], self._tensors[full]

    def scope(self: "ParameterSet", name: str) -> "ParameterSet":
        return ParameterSet(self._tensors, self._full(name) + ".")

    def add(self: "ParameterSet", name: str, data: np.ndarray) -> Tensor:
        full = self._full(name)
        if full in self._tensors:
            raise ConfigurationError(f"Parameter {full} is defined twice")
        tensor = Tensor(
            np.asarray(data, dtype=get_default_dtype()), requires_grad=True
        )
        self._tensors[full] = tensor
        return tensor

    def __getitem__(self: "ParameterSet", name: str) -> Tensor:
        try:
            return self._tensors[self._full(name)]
        except KeyError:
            raise ConfigurationError(
                f"Parameter {self._full(name)} does not exist"
            ) from None

    def __contains__(self: "ParameterSet", name: str) -> bool:
        return self._full(name) in self._tensors

    def __len__(self: "ParameterSet") -> int:
        return sum(1 for _ in self._own())

    def names(self: "ParameterSet") -> list[str]:
        """Names relative to this scope, in lexicographic order."""
        return [name for name, _ in self._own()]

    def items(self: "ParameterSet") -> list[tuple[str, Tensor]]:
        return list(self._own())

    def trainable(self: "ParameterSet") -> list[tuple[str, Tensor]]:
        return [(name, t) for name, t in self._own() if t.requires_grad]

    def parameter_count(self: "ParameterSet") -> int:
        return sum(t.size for _, t in self._own())

    def freeze(self: "ParameterSet") -> None:
        """Exclude every parameter in this scope from gradients and updates."""
        for _, tensor in self._own():
            tensor.requires_grad = False
            tensor.grad = None
        logger.debug("Froze %d parameters under '%s'", len(self), self._prefix)

    def unfreeze(self: "ParameterSet") -> None:
        for _, tensor in self._own():
            tensor.requires_grad = True

    def zero_grad(self: "ParameterSet") -> None:
        for _, tensor in self._own():
            tensor.grad = None

    def astype(self: "ParameterSet", dtype: Any) -> None:
        """Cast every parameter in place."""
        for _, tensor in self._own():
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None

    def state(self: "ParameterSet") -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._own()}

    def load_state(self: "ParameterSet", state: dict[str, np.ndarray]) -> None:
        """Copy stored arrays into the parameters of this scope.

        Raises ManifestError listing missing, unexpected and mis-shaped names when the
        stored set does not match this scope exactly.
        """
        own = dict(self._own())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        mismatched = sorted(
            f"{name} (stored {tuple(np.shape(state[name]))}, "
            f"expected {own[name].shape})"
            for name in set(own) & set(state)
            if tuple(np.shape(state[name])) != own[name].shape
        )
        if missing or unexpected or mismatched:
            problems = []
            if missing:
                problems.append("missing: " + ", ".join(missing))
            if unexpected:
                problems.append("unexpected: " + ", ".join(unexpected))
            if mismatched:
                problems.append("shape mismatch: " + ", ".join(mismatched))
            raise ManifestError(
                "Stored parameters do not match the model; " + "; ".join(problems)
            )
        for name, tensor in own.items():
            tensor.data = np.array(state[name], dtype=tensor.dtype)
            tensor.grad = None


def init_affine(
    params: ParameterSet, name: str, fan_in: int, fan_out: int, rng: np.random.Generator
) -> None:
    """Weight (fan_in, fan_out) from N(0, 1/fan_in), zero bias."""
    scope = params.scope(name)
    scope.add("weight", rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)))
    scope.add("bias", np.zeros(fan_out))


def init_conv(
    params: ParameterSet,
    name: str,
    c_in: int,
    c_out: int,
    k: int,
    rng: np.random.Generator,
) -> None:
    """Kernel [c_out, c_in, k, k, k] with He-normal scale, zero bias."""
    scope = params.scope(name)
    std = np.sqrt(2.0 / (c_in * k**3))
    scope.add("weight", rng.normal(0.0, std, (c_out, c_in, k, k, k)))
    scope.add("bias", np.zeros(c_out))


def init_conv_transpose(
    params: ParameterSet,
    name: str,
    c_in: int,
    c_out: int,
    k: int,
    rng: np.random.Generator,
) -> None:
    """Kernel [c_in, c_out, k, k, k]; a stride-k transpose conv feeds every output
    from c_in inputs."""
    scope = params.scope(name)
    std = np.sqrt(2.0 / c_in)
    scope.add("weight", rng.normal(0.0, std, (c_in, c_out, k, k, k)))
    scope.add("bias", np.zeros(c_out))


def init_norm(params: ParameterSet, name: str, width: int) -> None:
    scope = params.scope(name)
    scope.add("gain", np.ones(width))
    scope.add("shift", np.zeros(width))
