"""Central finite-difference check of tape gradients."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor, no_grad

# Denominator floor for the relative error; below it the comparison is effectively absolute.
REL_ERROR_FLOOR = 1e-7
ZERO_THRESHOLD = 1e-12


@dataclass
class GradCheckEntry:
    """One checked coordinate."""

    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    """Result of a gradient check: passes iff the worst relative error is below ``tol``."""

    label: str
    tol: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((entry.rel_error for entry in self.entries), default=0.0)

    @property
    def worst(self) -> GradCheckEntry | None:
        return max(self.entries, key=lambda entry: entry.rel_error, default=None)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    @property
    def checked(self) -> int:
        return len(self.entries)


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, floor); 0 when both sides are below 1e-12."""
    a, n = abs(analytic), abs(numeric)
    if a < ZERO_THRESHOLD and n < ZERO_THRESHOLD:
        return 0.0
    return abs(analytic - numeric) / max(a, n, REL_ERROR_FLOOR)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    names: Sequence[str] | None = None,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
    label: str = "",
) -> GradCheckReport:
    """Compare autodiff gradients of ``f()`` w.r.t. ``params`` to central differences.

    Args:
        f: Zero-argument function returning a scalar tensor built from ``params``.
        params: Tensors to differentiate against (float64 only).
        h: Finite-difference step.
        tol: Pass threshold on the maximum relative error.
        names: Display names, defaulting to each tensor's ``name`` attribute.
        max_coords_per_tensor: Check a seeded random subset of this many
            coordinates per tensor; ``None`` checks every coordinate.
        rng: Generator used for the coordinate subset.
        label: Name recorded on the report.

    Returns:
        A GradCheckReport listing every checked coordinate.
    """
    for param in params:
        if param.dtype != np.float64:
            raise ConfigError(f"gradient checks need float64 tensors, got {param.dtype}")
    rng = rng or np.random.default_rng(0)
    names = list(names) if names is not None else [getattr(p, "name", "") or f"param{i}" for i, p in enumerate(params)]

    for param in params:
        param.grad = None
    loss = f()
    if loss.requires_grad:
        loss.backward()
    analytic = [param.grad if param.grad is not None else np.zeros_like(param.data) for param in params]

    report = GradCheckReport(label=label, tol=tol)
    with no_grad():
        for name, param, grad in zip(names, params, analytic, strict=True):
            size = param.data.size
            if max_coords_per_tensor is None or size <= max_coords_per_tensor:
                indices = np.arange(size)
            else:
                indices = np.sort(rng.choice(size, size=max_coords_per_tensor, replace=False))
            flat = param.data.reshape(-1)
            for index in indices:
                original = flat[index]
                flat[index] = original + h
                plus = f().item()
                flat[index] = original - h
                minus = f().item()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * h)
                value = float(grad.reshape(-1)[index])
                report.entries.append(GradCheckEntry(name, int(index), value, numeric, relative_error(value, numeric)))
    for param in params:
        param.grad = None
    return report
