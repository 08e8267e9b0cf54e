"""Generator-side objectives: latent L1, Gaussian KL and length supervision.

All reductions are masked means over valid frames, so appending padded
frames to a batch never changes a loss value.
"""

import numpy as np

from .autodiff import Tensor, as_tensor, masked_mean
from .generator import PredictedLatents
from .pose.models import HAND_ARTICULATORS, LATENT_ORDER, Articulator
from .vae import LatentDistribution


def _moments(x: PredictedLatents | LatentDistribution) -> tuple[Tensor, Tensor]:
    if isinstance(x, PredictedLatents):
        return x.mu_hat, x.logvar_hat
    return x.mu, x.logvar


def latent_l1_components(
    pred: PredictedLatents | LatentDistribution,
    target: LatentDistribution,
    mask: np.ndarray | None = None,
) -> dict[Articulator, Tensor]:
    """Unweighted per-articulator term: masked MAE on mu plus masked MAE on logvar."""
    mu_hat, logvar_hat = _moments(pred)
    mu_err = (mu_hat - target.mu).abs()
    logvar_err = (logvar_hat - target.logvar).abs()
    components = {}
    for articulator in LATENT_ORDER:
        part = target.slices[articulator]
        mu_term = masked_mean(mu_err.slice(-1, part.start, part.stop), mask)
        logvar_term = masked_mean(logvar_err.slice(-1, part.start, part.stop), mask)
        components[articulator] = mu_term + logvar_term
    return components


def weighted_sum(components: dict[Articulator, Tensor], weights: dict[Articulator, float]) -> Tensor:
    total = None
    for articulator, term in components.items():
        weighted = term * weights.get(articulator, 1.0)
        total = weighted if total is None else total + weighted
    return total


def latent_l1_loss(
    pred: PredictedLatents | LatentDistribution,
    target: LatentDistribution,
    weights: dict[Articulator, float] | None = None,
    mask: np.ndarray | None = None,
) -> Tensor:
    """sum_a weight_a * (|mu_hat - mu|_1 + |logvar_hat - logvar|_1) over each articulator's slice."""
    return weighted_sum(latent_l1_components(pred, target, mask), weights or {})


def split_hand_other(components: dict[Articulator, Tensor]) -> tuple[float, float]:
    """Unweighted hand (RH + LH) and other (body + face) loss streams for the boost update."""
    hand = sum(components[a].item() for a in HAND_ARTICULATORS)
    other = sum(term.item() for a, term in components.items() if a not in HAND_ARTICULATORS)
    return hand, other


def kl_gaussians(
    pred: PredictedLatents | LatentDistribution,
    target: LatentDistribution,
    mask: np.ndarray | None = None,
) -> Tensor:
    """KL(predicted || target) for diagonal Gaussians, summed over dims, mean over valid frames."""
    mu_hat, logvar_hat = _moments(pred)
    inv_var = (-target.logvar).exp()
    diff = mu_hat - target.mu
    per_dim = (target.logvar - logvar_hat) * 0.5 + (logvar_hat.exp() + diff * diff) * inv_var * 0.5 - 0.5
    return masked_mean(per_dim.sum(axis=-1), mask)


def length_targets(lengths: list[int] | np.ndarray, t_max: int) -> np.ndarray:
    return np.asarray(lengths, dtype=np.float64) / float(t_max)


def length_loss(ratio: Tensor, lengths: list[int] | np.ndarray, t_max: int) -> Tensor:
    """Mean absolute error between predicted ratios and T / T_max."""
    target = as_tensor(length_targets(lengths, t_max), ratio.dtype)
    return (ratio - target).abs().mean()
