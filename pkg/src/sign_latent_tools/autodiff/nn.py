"""Parameters, modules and the two layers every model here is built from."""

from collections.abc import Iterator

import numpy as np

from ..errors import ArchitectureMismatchError
from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that requires grad and carries a dotted name path."""

    def __init__(self, data: np.ndarray, name: str = ""):
        super().__init__(np.array(data, copy=True), requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


class Module:
    """Base class for anything that owns parameters.

    Parameters are discovered from instance attributes: ``Parameter`` values,
    nested ``Module`` values, and lists/dicts of modules. Names are the dotted
    attribute path, prefixed with ``param_prefix`` for top-level models.
    """

    param_prefix = ""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str | None = None) -> list[tuple[str, Parameter]]:
        prefix = self.param_prefix if prefix is None else prefix
        named: list[tuple[str, Parameter]] = []
        for key, value in vars(self).items():
            path = f"{prefix}.{key}" if prefix else key
            named.extend(_collect(value, path))
        return named

    def parameters(self) -> list[Parameter]:
        return [param for _, param in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(param.data.size for param in self.parameters())

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy arrays into parameters; shape or name disagreements are architecture mismatches."""
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if strict and (missing or unexpected):
            raise ArchitectureMismatchError(f"checkpoint does not match model: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, param in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ArchitectureMismatchError(f"parameter {name}: checkpoint shape {value.shape} != model shape {param.shape}")
            param.data = value.astype(param.dtype, copy=True)


def _collect(value: object, path: str) -> Iterator[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        value.name = path
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path)
    elif isinstance(value, list | tuple):
        for index, item in enumerate(value):
            if isinstance(item, Module | Parameter):
                yield from _collect(item, f"{path}.{index}")
    elif isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, Module | Parameter):
                yield from _collect(item, f"{path}.{key}")


class Linear(Module):
    """``y = x @ W + b`` with Glorot-uniform W and zero b."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype: str | np.dtype = "float64", bias: bool = True):
        limit = np.sqrt(6.0 / (in_features + out_features))
        self.weight = Parameter(rng.uniform(-limit, limit, size=(in_features, out_features)).astype(dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None
        self.in_features = in_features
        self.out_features = out_features

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    """Layer norm over the last axis with learnable gain and shift."""

    def __init__(self, features: int, dtype: str | np.dtype = "float64"):
        self.gain = Parameter(np.ones(features, dtype=dtype))
        self.shift = Parameter(np.zeros(features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return x.layer_norm() * self.gain + self.shift
