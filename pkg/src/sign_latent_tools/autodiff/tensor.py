"""Dense tensors with tape-based reverse-mode automatic differentiation.

Each primitive is a ``Function`` subclass with a ``forward`` over NumPy arrays
and a ``backward`` that maps the output adjoint to one adjoint per input.
``Function.apply`` runs the forward pass and, when any input requires a
gradient, records the function on the output tensor; ``Tensor.backward``
walks that tape in reverse topological order.

Broadcasting is limited to leading batch axes: two operands are compatible
when their shapes are equal or one shape is a suffix of the other (a 0-d
scalar is a suffix of everything).
"""

import contextlib
import math
from collections.abc import Iterator, Sequence

import numpy as np

from ..errors import BackwardError, DomainError, ShapeError

LAYER_NORM_EPS = 1e-5

# Process-wide switches, shared by every thread. Enter no_grad/default_dtype
# before fanning work out to a pool and leave them after it joins.
_DEFAULT_DTYPE: np.dtype = np.dtype(np.float64)
_GRAD_ENABLED = True


@contextlib.contextmanager
def default_dtype(dtype: str | np.dtype | type) -> Iterator[None]:
    """Temporarily change the dtype used for tensors built from Python data."""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


def get_default_dtype() -> np.dtype:
    """Return the dtype used for tensors built from Python data."""
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording (inference on frozen parameters).

    The switch is process-wide, not per thread: worker threads started inside
    the block run without a tape, and one thread leaving the block re-enables
    recording for all of them. Wrap a whole thread pool, never a single task.
    """
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_array(data: object, dtype: np.dtype | None) -> np.ndarray:
    if isinstance(data, np.ndarray) and dtype is None and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the leading axes that broadcasting added."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _check_suffix(op: str, left: tuple[int, ...], right: tuple[int, ...]) -> None:
    if left == right:
        return
    shorter, longer = (left, right) if len(left) <= len(right) else (right, left)
    if longer[len(longer) - len(shorter) :] != shorter:
        raise ShapeError(op, left, right, "broadcasting is only allowed over leading batch axes")


class Function:
    """Base class for differentiable primitives."""

    name = "function"

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, _creator=fn if requires_grad else None)


class Tensor:
    """A NumPy array plus the bookkeeping needed for reverse-mode autodiff."""

    def __init__(
        self,
        data: "np.ndarray | float | int | Sequence",
        requires_grad: bool = False,
        dtype: str | np.dtype | type | None = None,
        _creator: Function | None = None,
    ):
        self.data = _as_array(data, np.dtype(dtype) if dtype is not None else None)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._creator = _creator

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- differentiation --------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(t) into ``t.grad`` for every reachable tensor t.

        Gradients accumulate additively, so calling backward twice through the
        same graph doubles every gradient.
        """
        if self.data.size != 1:
            raise BackwardError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise BackwardError("backward() called on a tensor that does not require grad")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            grad = grad.astype(node.dtype, copy=False)
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            fn = node._creator
            if fn is None:
                continue
            for parent, parent_grad in zip(fn.inputs, fn.backward(grad), strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    # -- operators --------------------------------------------------------

    def _lift(self, other: "Tensor | float | int | np.ndarray") -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return Add.apply(self, self._lift(other))

    def __radd__(self, other):
        return Add.apply(self._lift(other), self)

    def __sub__(self, other):
        return Sub.apply(self, self._lift(other))

    def __rsub__(self, other):
        return Sub.apply(self._lift(other), self)

    def __mul__(self, other):
        return Mul.apply(self, self._lift(other))

    def __rmul__(self, other):
        return Mul.apply(self._lift(other), self)

    def __truediv__(self, other):
        return Div.apply(self, self._lift(other))

    def __rtruediv__(self, other):
        return Div.apply(self._lift(other), self)

    def __matmul__(self, other):
        return MatMul.apply(self, self._lift(other))

    def __neg__(self):
        return Neg.apply(self)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def gelu(self) -> "Tensor":
        return Gelu.apply(self)

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def softmax(self) -> "Tensor":
        return Softmax.apply(self)

    def layer_norm(self) -> "Tensor":
        return LayerNormOp.apply(self)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, mask: np.ndarray | None = None) -> "Tensor":
        if mask is not None:
            return MaskedMean.apply(self, mask=mask)
        return Mean.apply(self, axis=axis)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple | list):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes: int) -> "Tensor":
        return Transpose.apply(self, axes=axes)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return Transpose.apply(self, axes=tuple(axes))

    def slice(self, axis: int, start: int, stop: int) -> "Tensor":
        return Slice.apply(self, axis=axis, start=start, stop=stop)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Post-order of the tape reachable from ``root`` (inputs before outputs)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._creator is not None:
            for parent in node._creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def tensor(data: "np.ndarray | float | Sequence", requires_grad: bool = False, dtype=None) -> Tensor:
    """Build a tensor, copying ``data``."""
    return Tensor(np.array(data, dtype=np.dtype(dtype) if dtype is not None else _DEFAULT_DTYPE), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# Elementwise binary ops
# ---------------------------------------------------------------------------


class _Binary(Function):
    def _shapes(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.inputs[0].shape, self.inputs[1].shape


class Add(_Binary):
    name = "add"

    def forward(self, a, b):
        _check_suffix(self.name, a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self._shapes()
        return _unbroadcast(grad, sa), _unbroadcast(grad, sb)


class Sub(_Binary):
    name = "sub"

    def forward(self, a, b):
        _check_suffix(self.name, a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self._shapes()
        return _unbroadcast(grad, sa), _unbroadcast(-grad, sb)


class Mul(_Binary):
    name = "mul"

    def forward(self, a, b):
        _check_suffix(self.name, a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        sa, sb = self._shapes()
        return _unbroadcast(grad * self.b, sa), _unbroadcast(grad * self.a, sb)


class Div(_Binary):
    name = "div"

    def forward(self, a, b):
        _check_suffix(self.name, a.shape, b.shape)
        if np.any(b == 0):
            raise DomainError("div: division by zero")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        sa, sb = self._shapes()
        return _unbroadcast(grad / self.b, sa), _unbroadcast(-grad * self.a / (self.b * self.b), sb)


class MatMul(Function):
    """``a @ b`` with a of shape (..., m, k) and b of shape (k, n) or (..., k, n)."""

    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(self.name, a.shape, b.shape)
        if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(self.name, a.shape, b.shape, "batched operands need identical leading axes")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        a, b = self.a, self.b
        grad_a = grad @ np.swapaxes(b, -1, -2)
        if b.ndim == 2:
            grad_b = a.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, grad.shape[-1])
        else:
            grad_b = np.swapaxes(a, -1, -2) @ grad
        return grad_a, grad_b


# ---------------------------------------------------------------------------
# Elementwise unary ops
# ---------------------------------------------------------------------------


class Neg(Function):
    name = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Exp(Function):
    name = "exp"

    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    name = "log"

    def forward(self, a):
        if np.any(a <= 0):
            raise DomainError("log: input has non-positive entries")
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Tanh(Function):
    name = "tanh"

    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Relu(Function):
    name = "relu"

    def forward(self, a):
        self.positive = a > 0
        return np.where(self.positive, a, 0.0).astype(a.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.positive,)


class Sigmoid(Function):
    name = "sigmoid"

    def forward(self, a):
        # exp(-|a|) never overflows
        e = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


_GELU_C = math.sqrt(2.0 / math.pi)


class Gelu(Function):
    """GELU, tanh approximation."""

    name = "gelu"

    def forward(self, a):
        self.a = a
        self.inner = np.tanh(_GELU_C * (a + 0.044715 * a**3))
        return 0.5 * a * (1.0 + self.inner)

    def backward(self, grad):
        a, t = self.a, self.inner
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * a * a)
        return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)


class Abs(Function):
    """Absolute value; the subgradient at 0 is 0."""

    name = "abs"

    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return (grad * self.sign,)


# ---------------------------------------------------------------------------
# Normalizations
# ---------------------------------------------------------------------------


class Softmax(Function):
    """Softmax over the last axis."""

    name = "softmax"

    def forward(self, a):
        shifted = a - a.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=-1, keepdims=True)),)


class LayerNormOp(Function):
    """Layer normalization over the last axis without affine terms."""

    name = "layer_norm"

    def forward(self, a):
        mean = a.mean(axis=-1, keepdims=True)
        centered = a - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        self.out = centered * self.inv_std
        return self.out

    def backward(self, grad):
        y = self.out
        g_mean = grad.mean(axis=-1, keepdims=True)
        gy_mean = (grad * y).mean(axis=-1, keepdims=True)
        return (self.inv_std * (grad - g_mean - y * gy_mean),)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


class Sum(Function):
    name = "sum"

    def forward(self, a, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    name = "mean"

    def forward(self, a, axis=None):
        self.shape, self.axis = a.shape, axis
        self.count = a.size if axis is None else a.shape[axis]
        return np.asarray(a.mean(axis=axis))

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class MaskedMean(Function):
    """Mean over the entries selected by a boolean mask.

    The mask covers a prefix of the input's axes (e.g. (B, T) for a (B, T, D)
    input) and is broadcast over the remaining trailing axes.
    """

    name = "masked_mean"

    def forward(self, a, mask=None):
        mask = np.asarray(mask, dtype=bool)
        if a.shape[: mask.ndim] != mask.shape:
            raise ShapeError(self.name, a.shape, mask.shape, "mask must cover leading axes")
        weights = mask.reshape(mask.shape + (1,) * (a.ndim - mask.ndim))
        count = int(mask.sum()) * int(np.prod(a.shape[mask.ndim :], dtype=np.int64))
        if count == 0:
            raise DomainError("masked_mean: mask selects no entries")
        self.weights = np.broadcast_to(weights, a.shape).astype(a.dtype) / count
        return np.asarray((a * self.weights).sum(), dtype=a.dtype)

    def backward(self, grad):
        return (grad * self.weights,)


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------


class Reshape(Function):
    name = "reshape"

    def forward(self, a, shape=()):
        self.in_shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError as err:
            raise ShapeError(self.name, a.shape, tuple(shape)) from err

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, a, axes=()):
        self.axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Slice(Function):
    name = "slice"

    def forward(self, a, axis=0, start=0, stop=None):
        axis = axis % a.ndim
        stop = a.shape[axis] if stop is None else stop
        if not 0 <= start < stop <= a.shape[axis]:
            raise ShapeError(self.name, a.shape, None, f"slice [{start}:{stop}) out of range on axis {axis}")
        self.in_shape, self.axis, self.start, self.stop = a.shape, axis, start, stop
        index = [slice(None)] * a.ndim
        index[axis] = slice(start, stop)
        self.index = tuple(index)
        return a[self.index]

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays, axis=0):
        ndim = arrays[0].ndim
        axis = axis % ndim
        for other in arrays[1:]:
            if other.ndim != ndim or other.shape[:axis] + other.shape[axis + 1 :] != arrays[0].shape[:axis] + arrays[0].shape[axis + 1 :]:
                raise ShapeError(self.name, arrays[0].shape, other.shape, f"concat along axis {axis}")
        self.axis = axis
        self.bounds = np.cumsum([0] + [a.shape[axis] for a in arrays])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        parts = []
        for start, stop in zip(self.bounds[:-1], self.bounds[1:], strict=True):
            index = [slice(None)] * grad.ndim
            index[self.axis] = slice(int(start), int(stop))
            parts.append(grad[tuple(index)])
        return tuple(parts)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis``."""
    return Concat.apply(*tensors, axis=axis)


def masked_mean(x: Tensor, mask: np.ndarray | None) -> Tensor:
    """Mean of ``x`` over entries whose leading-axis mask is true (all entries if None)."""
    if mask is None:
        return Mean.apply(x, axis=None)
    return MaskedMean.apply(x, mask=mask)


def constant(data: "np.ndarray | float | Sequence", like: Tensor | None = None) -> Tensor:
    """A tensor that never requires grad, in ``like``'s dtype when given."""
    dtype = like.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False)


def as_tensor(data: "Tensor | np.ndarray | float | Sequence", dtype: str | np.dtype | type | None = None) -> Tensor:
    """Return ``data`` as a tensor of ``dtype``; tensors already in that dtype pass through unchanged."""
    target = np.dtype(dtype) if dtype is not None else None
    if isinstance(data, Tensor):
        if target is None or data.dtype == target:
            return data
        return Tensor(data.data.astype(target), requires_grad=False)
    return Tensor(np.asarray(data, dtype=target or _DEFAULT_DTYPE), requires_grad=False)
