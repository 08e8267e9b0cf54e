"""Articulator-wise variational autoencoder.

Each articulator (body, right hand, left hand, face) has its own residual MLP
encoder, its own mean/log-variance heads and its own mirrored decoder. The
decoder of a region reads only that region's latent slice, so the regions are
disentangled by construction. The ``entangled`` layout replaces the four
branches with one encoder/decoder over the whole frame and is kept as a
comparison baseline.
"""

import logging
from dataclasses import dataclass
from itertools import pairwise

import numpy as np

from .autodiff import Linear, Module, Tensor, as_tensor, concat, constant, masked_mean
from .config import VaeConfig
from .errors import ShapeError, TrainingDivergenceError
from .pose.models import COORDS, DEFAULT_PARTITION, JOINT_ORDER, LATENT_ORDER, NUM_JOINTS, Articulator, PoseSequence

logger = logging.getLogger(__name__)

FRAME_WIDTH = NUM_JOINTS * COORDS
ENTANGLED = "all"


class ResidualMLP(Module):
    """Linear layers joined by tanh, with a skip from input to output.

    The skip is the identity when the first and last widths agree and a
    bias-free projection otherwise.
    """

    def __init__(self, widths: list[int], rng: np.random.Generator, dtype: str = "float64"):
        if len(widths) < 2:
            raise ValueError(f"ResidualMLP needs at least two widths, got {widths}")
        self.layers = [Linear(w_in, w_out, rng, dtype=dtype) for w_in, w_out in pairwise(widths)]
        self.skip = None if widths[0] == widths[-1] else Linear(widths[0], widths[-1], rng, dtype=dtype, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for index, layer in enumerate(self.layers):
            h = layer(h)
            if index < len(self.layers) - 1:
                h = h.tanh()
        return h + (x if self.skip is None else self.skip(x))


@dataclass
class LatentDistribution:
    """Per-frame diagonal Gaussian over the 80-dim latent, in latent order."""

    mu: Tensor  # (..., T, 80)
    logvar: Tensor  # (..., T, 80)
    slices: dict[Articulator, slice]

    def region(self, articulator: Articulator) -> tuple[Tensor, Tensor]:
        part = self.slices[articulator]
        return self.mu.slice(-1, part.start, part.stop), self.logvar.slice(-1, part.start, part.stop)

    def detach(self) -> "LatentDistribution":
        return LatentDistribution(self.mu.detach(), self.logvar.detach(), self.slices)


@dataclass
class LatentSample:
    """Concatenated regional samples, same shape as the source distribution."""

    z: Tensor


def latent_slices(cfg: VaeConfig) -> dict[Articulator, slice]:
    """Contiguous slices of the latent vector, in latent order."""
    slices = {}
    cursor = 0
    for articulator in LATENT_ORDER:
        width = cfg.latent_dims.of(articulator)
        slices[articulator] = slice(cursor, cursor + width)
        cursor += width
    return slices


def frame_slices() -> dict[Articulator, slice]:
    """Slices of a flattened 534-value frame occupied by each region."""
    slices = {}
    for articulator in JOINT_ORDER:
        start, stop = DEFAULT_PARTITION.range_of(articulator)
        slices[articulator] = slice(start * COORDS, stop * COORDS)
    return slices


class DisentangledVAE(Module):
    """Frame-wise VAE with one branch per articulator (or one shared branch when entangled)."""

    param_prefix = "vae"

    def __init__(self, cfg: VaeConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.latent_slices = latent_slices(cfg)
        self.frame_slices = frame_slices()
        self.encoders: dict[str, ResidualMLP] = {}
        self.mu_heads: dict[str, Linear] = {}
        self.logvar_heads: dict[str, Linear] = {}
        self.decoders: dict[str, ResidualMLP] = {}

        if cfg.layout == "entangled":
            branches = [(ENTANGLED, FRAME_WIDTH, cfg.latent_dim, list(cfg.entangled_hidden))]
        else:
            branches = [
                (a.value, DEFAULT_PARTITION.flat_width(a), cfg.latent_dims.of(a), list(cfg.hidden[a.value]))
                for a in LATENT_ORDER
            ]
        for key, width, latent, hidden in branches:
            self.encoders[key] = ResidualMLP([width, *hidden, hidden[-1]], rng, cfg.dtype)
            self.mu_heads[key] = Linear(hidden[-1], latent, rng, dtype=cfg.dtype)
            self.logvar_heads[key] = Linear(hidden[-1], latent, rng, dtype=cfg.dtype)
            self.decoders[key] = ResidualMLP([latent, *reversed(hidden), width], rng, cfg.dtype)

    @property
    def entangled(self) -> bool:
        return self.cfg.layout == "entangled"

    def encode(self, frames: Tensor | np.ndarray) -> LatentDistribution:
        """Encode (..., T, 178, 3) normalized frames into a per-frame posterior."""
        x = as_tensor(frames, self.dtype)
        if x.shape[-2:] != (NUM_JOINTS, COORDS):
            raise ShapeError("vae_encode", x.shape, None, f"expected trailing ({NUM_JOINTS}, {COORDS})")
        flat = x.reshape(*x.shape[:-2], FRAME_WIDTH)

        if self.entangled:
            features = self.encoders[ENTANGLED](flat).tanh()
            mu, logvar = self.mu_heads[ENTANGLED](features), self.logvar_heads[ENTANGLED](features)
        else:
            mus, logvars = [], []
            for articulator in LATENT_ORDER:
                part = self.frame_slices[articulator]
                key = articulator.value
                features = self.encoders[key](flat.slice(-1, part.start, part.stop)).tanh()
                mus.append(self.mu_heads[key](features))
                logvars.append(self.logvar_heads[key](features))
            mu, logvar = concat(mus, axis=-1), concat(logvars, axis=-1)

        if not (np.all(np.isfinite(mu.data)) and np.all(np.isfinite(logvar.data))):
            raise TrainingDivergenceError("VAE encoder produced non-finite activations", {"mu_finite": bool(np.all(np.isfinite(mu.data)))})
        return LatentDistribution(mu, logvar, self.latent_slices)

    def decode(self, z: Tensor | np.ndarray) -> Tensor:
        """Decode (..., T, 80) latents into (..., T, 178, 3) frames."""
        z = as_tensor(z, self.dtype)
        if z.shape[-1] != self.cfg.latent_dim:
            raise ShapeError("vae_decode", z.shape, None, f"expected latent width {self.cfg.latent_dim}")

        if self.entangled:
            flat = self.decoders[ENTANGLED](z)
        else:
            regions = {}
            for articulator in LATENT_ORDER:
                part = self.latent_slices[articulator]
                regions[articulator] = self.decoders[articulator.value](z.slice(-1, part.start, part.stop))
            flat = concat([regions[a] for a in JOINT_ORDER], axis=-1)
        return flat.reshape(*z.shape[:-1], NUM_JOINTS, COORDS)

    def forward(self, frames: Tensor | np.ndarray, eps: np.ndarray | None = None) -> tuple[Tensor, LatentDistribution]:
        dist = self.encode(frames)
        return self.decode(reparameterize(dist, eps).z), dist


def vae_encode(pose: PoseSequence | np.ndarray | Tensor, vae: DisentangledVAE) -> LatentDistribution:
    """Encode one pose sequence (or a batch of frames) into a latent posterior."""
    frames = pose.frames if isinstance(pose, PoseSequence) else pose
    return vae.encode(frames)


def reparameterize(dist: LatentDistribution, eps: np.ndarray | np.random.Generator | None = None) -> LatentSample:
    """z = mu + exp(logvar / 2) * eps.

    ``eps`` may be an explicit noise array, a generator to draw it from, or
    None for eps = 0 (the posterior mean). Gradients reach mu and logvar,
    never eps.
    """
    if eps is None:
        return LatentSample(dist.mu)
    if isinstance(eps, np.random.Generator):
        eps = eps.standard_normal(dist.mu.shape)
    noise = np.asarray(eps, dtype=dist.mu.dtype)
    if noise.shape != dist.mu.shape:
        raise ShapeError("reparameterize", dist.mu.shape, noise.shape)
    return LatentSample(dist.mu + (dist.logvar * 0.5).exp() * constant(noise, like=dist.mu))


def vae_decode(sample: LatentSample | Tensor | np.ndarray, vae: DisentangledVAE) -> PoseSequence:
    """Decode a (T, 80) latent sample into a pose sequence."""
    z = sample.z if isinstance(sample, LatentSample) else sample
    frames = vae.decode(z)
    if frames.ndim != 3:
        raise ShapeError("vae_decode", frames.shape, None, "expected a single (T, 80) sequence")
    return PoseSequence(np.array(frames.data, dtype=np.float64))


def kl_to_standard_normal(dist: LatentDistribution, mask: np.ndarray | None = None) -> Tensor:
    """Mean over valid frames of sum_dims -1/2 (1 + logvar - mu^2 - exp(logvar))."""
    mu, logvar = dist.mu, dist.logvar
    per_dim = (1.0 + logvar - mu * mu - logvar.exp()) * -0.5
    return masked_mean(per_dim.sum(axis=-1), mask)


def vae_loss(
    target: Tensor | np.ndarray,
    recon: Tensor,
    dist: LatentDistribution,
    cfg: VaeConfig,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted per-region absolute error plus beta * KL.

    Each region term is the summed absolute error over that region's
    coordinates and valid frames, divided by (valid frames x 534), so the four
    unweighted terms add up to the plain masked mean absolute error.

    Returns:
        The total loss and a dict of float components: one per region,
        ``recon``, ``kl`` and ``total``.
    """
    target = as_tensor(target, recon.dtype)
    if target.shape != recon.shape:
        raise ShapeError("vae_loss", target.shape, recon.shape)
    error = (recon - target).abs()

    recon_total = None
    components: dict[str, float] = {}
    for articulator in JOINT_ORDER:
        start, stop = DEFAULT_PARTITION.range_of(articulator)
        share = (stop - start) * COORDS / FRAME_WIDTH
        term = masked_mean(error.slice(-2, start, stop), mask) * share
        components[articulator.value] = term.item()
        weighted = term * cfg.recon_weights.of(articulator)
        recon_total = weighted if recon_total is None else recon_total + weighted

    kl = kl_to_standard_normal(dist, mask)
    total = recon_total + kl * cfg.beta
    components["recon"] = recon_total.item()
    components["kl"] = kl.item()
    components["total"] = total.item()
    if not np.isfinite(components["total"]):
        raise TrainingDivergenceError("VAE loss is not finite", components)
    return total, components


def build_vae(cfg: VaeConfig, rng: np.random.Generator) -> DisentangledVAE:
    vae = DisentangledVAE(cfg, rng)
    logger.debug("built %s/%s VAE with %d parameters", cfg.layout, cfg.variant, vae.num_parameters())
    return vae
