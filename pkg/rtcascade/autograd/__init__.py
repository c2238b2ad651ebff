from rtcascade.autograd.tensor import (
    Tensor,
    as_tensor,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "Tensor",
    "as_tensor",
    "default_dtype",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
]
