"""Minimal dense-tensor autodiff used by every model in this package.

- tensor: Tensor, Function and the primitive ops
- nn: Parameter, Module, Linear, LayerNorm
- gradcheck: central finite-difference checks
- checkpoint: single-file parameter checkpoints
"""

from .checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint
from .gradcheck import GradCheckEntry, GradCheckReport, grad_check, relative_error
from .nn import LayerNorm, Linear, Module, Parameter
from .tensor import (
    Function,
    Tensor,
    as_tensor,
    concat,
    constant,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    masked_mean,
    no_grad,
    tensor,
)

__all__ = [
    "Function",
    "GradCheckEntry",
    "GradCheckReport",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "as_tensor",
    "concat",
    "constant",
    "default_dtype",
    "get_default_dtype",
    "grad_check",
    "is_grad_enabled",
    "load_checkpoint",
    "masked_mean",
    "no_grad",
    "read_checkpoint_meta",
    "relative_error",
    "save_checkpoint",
    "tensor",
]
