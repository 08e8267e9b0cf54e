"""Optimizer, learning-rate plateau scheduler, early stopping and hand-weight boosting."""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import Parameter
from .config import BoostConfig
from .errors import BoostInvariantError, CheckpointError, DomainError
from .pose.models import Articulator


class Adam:
    """Adam with bias correction and decoupled weight decay.

    Args:
        params: Parameters to update; their ``name`` keys the saved state.
        lr: Learning rate (mutable, the scheduler lowers it).
        betas: First and second moment decay.
        eps: Denominator floor.
        weight_decay: Decoupled decay applied as ``p -= lr * wd * p``.
    """

    def __init__(self, params: Sequence[Parameter], lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None

    def step(self) -> None:
        self.step_count += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1**self.step_count
        correction2 = 1.0 - beta2**self.step_count
        for param, m, v in zip(self.params, self.m, self.v, strict=True):
            if param.grad is None:
                continue
            grad = param.grad
            if self.weight_decay:
                param.data -= (self.lr * self.weight_decay * param.data).astype(param.dtype)
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param.data -= update.astype(param.dtype)

    def state_dict(self) -> tuple[dict[str, np.ndarray], dict[str, float | int]]:
        """Moment arrays keyed ``optimizer.m.<param>`` / ``optimizer.v.<param>`` plus scalar state."""
        arrays = {}
        for param, m, v in zip(self.params, self.m, self.v, strict=True):
            arrays[f"optimizer.m.{param.name}"] = m
            arrays[f"optimizer.v.{param.name}"] = v
        return arrays, {"step": self.step_count, "lr": self.lr}

    def load_state_dict(self, arrays: dict[str, np.ndarray], scalars: dict[str, float | int]) -> None:
        for index, param in enumerate(self.params):
            for slot, store in (("m", self.m), ("v", self.v)):
                key = f"optimizer.{slot}.{param.name}"
                if key not in arrays:
                    raise CheckpointError(f"optimizer state missing {key}")
                if arrays[key].shape != param.shape:
                    raise CheckpointError(f"optimizer state {key} has shape {arrays[key].shape}, parameter has {param.shape}")
                store[index] = np.array(arrays[key], dtype=param.dtype)
        self.step_count = int(scalars["step"])
        self.lr = float(scalars["lr"])


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``; returns the norm before clipping."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for param in params:
            if param.grad is not None:
                param.grad = param.grad * scale
    return total


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` evaluations without improvement.

    An evaluation improves when it beats the best loss by more than
    ``min_delta``; the first evaluation always does. The counter resets on
    every improvement and after every reduction.
    """

    def __init__(self, optimizer: Adam, factor: float = 0.9, patience: int = 40, min_delta: float = 0.0):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.best: float | None = None
        self.bad_evals = 0
        self.reductions = 0

    def step(self, val_loss: float) -> float:
        if self.best is None or val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.bad_evals = 0
        else:
            self.bad_evals += 1
            if self.bad_evals >= self.patience:
                self.optimizer.lr *= self.factor
                self.reductions += 1
                self.bad_evals = 0
        return self.optimizer.lr

    def state_dict(self) -> dict[str, float | int | None]:
        return {"best": self.best, "bad_evals": self.bad_evals, "reductions": self.reductions}

    def load_state_dict(self, state: dict) -> None:
        self.best = state["best"]
        self.bad_evals = int(state["bad_evals"])
        self.reductions = int(state["reductions"])


def plateau_step(scheduler: PlateauScheduler, val_loss: float) -> float:
    """Feed one validation loss to the scheduler and return the (possibly reduced) learning rate."""
    return scheduler.step(val_loss)


class EarlyStopping:
    """Signal a stop after ``patience`` evaluations without an improvement larger than ``min_delta``."""

    def __init__(self, patience: int = 100, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best: float | None = None
        self.bad_evals = 0

    def step(self, val_loss: float) -> bool:
        """Record a validation loss; returns True when training should stop."""
        if self.best is None or val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.bad_evals = 0
            return False
        self.bad_evals += 1
        return self.bad_evals >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad_evals == 0

    def state_dict(self) -> dict[str, float | int | None]:
        return {"best": self.best, "bad_evals": self.bad_evals}

    def load_state_dict(self, state: dict) -> None:
        self.best = state["best"]
        self.bad_evals = int(state["bad_evals"])


@dataclass(frozen=True)
class DynamicWeightState:
    """Hand-weight boost: lambda_RH = base_rh * s and lambda_LH = base_lh * s with 1 <= s <= s_max."""

    s: float = 1.0
    ema_hand: float = 0.0
    ema_other: float = 0.0
    alpha: float = 0.5
    s_max: float = 4.0
    base_rh: float = 3.5
    base_lh: float = 2.5
    rho: float = 0.99
    epsilon: float = 1e-8
    mode: str = "dynamic"

    @classmethod
    def from_config(cls, cfg: BoostConfig) -> "DynamicWeightState":
        return cls(
            s=cfg.s_max if cfg.mode == "fixed" else 1.0,
            alpha=cfg.alpha,
            s_max=cfg.s_max,
            base_rh=cfg.base_rh,
            base_lh=cfg.base_lh,
            rho=cfg.ema_decay,
            epsilon=cfg.epsilon,
            mode=cfg.mode,
        )

    @property
    def lambda_rh(self) -> float:
        return self.base_rh * self.s

    @property
    def lambda_lh(self) -> float:
        return self.base_lh * self.s

    @property
    def effective_cap(self) -> tuple[float, float]:
        return self.base_rh * self.s_max, self.base_lh * self.s_max

    def hand_weights(self) -> dict[Articulator, float]:
        return {Articulator.RIGHT_HAND: self.lambda_rh, Articulator.LEFT_HAND: self.lambda_lh}

    def check(self) -> None:
        """Raise BoostInvariantError unless 1 <= s <= s_max."""
        if not 1.0 <= self.s <= self.s_max:
            raise BoostInvariantError(f"boost factor s={self.s} outside [1, {self.s_max}]")

    def to_dict(self) -> dict[str, float | str]:
        return asdict(self)


def update_boost(state: DynamicWeightState, hand_loss: float, other_loss: float) -> DynamicWeightState:
    """Advance the EMAs by one step and rescale s by (ema_hand / ema_other) ** alpha, clipped to [1, s_max].

    In ``fixed`` mode the EMAs still advance but s stays at s_max.
    """
    if hand_loss < 0 or other_loss < 0:
        raise DomainError(f"boost losses must be non-negative, got hand={hand_loss}, other={other_loss}")
    ema_hand = state.rho * state.ema_hand + (1.0 - state.rho) * hand_loss
    ema_other = state.rho * state.ema_other + (1.0 - state.rho) * other_loss
    if state.mode == "fixed":
        s = state.s_max
    else:
        ratio = ema_hand / (ema_other + state.epsilon)
        s = float(np.clip(state.s * ratio**state.alpha, 1.0, state.s_max))
    updated = replace(state, s=s, ema_hand=ema_hand, ema_other=ema_other)
    updated.check()
    return updated
