"""Gradient suite: every training objective checked against finite differences.

Each case builds a tiny float64 instance, with L1 targets pushed well away
from the predictions so no finite-difference step crosses a kink.
"""

import logging
from collections.abc import Callable

import numpy as np

from .autodiff import GradCheckReport, Parameter, constant, grad_check, no_grad
from .config import BoostConfig, GeneratorConfig, GlossAttentionConfig, VaeConfig
from .generator import Generator, TextBatch
from .losses import kl_gaussians, latent_l1_loss, length_loss
from .optim import DynamicWeightState
from .pose.models import COORDS, NUM_JOINTS, TEXT_EMBEDDING_DIM, Articulator
from .seeding import stream_key
from .vae import DisentangledVAE, LatentDistribution, kl_to_standard_normal, latent_slices, reparameterize, vae_loss

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-4
DEFAULT_STEP = 1e-5
# Minimum distance between an L1 prediction and its target.
KINK_MARGIN = 0.25

TINY_GENERATOR = GeneratorConfig(d_model=16, encoder_layers=1, decoder_layers=2, ff_dim=32, length_hidden=8, t_max=4, dtype="float64")
TINY_GLOSS = GlossAttentionConfig(window=3, query_mode="attention", fusion="weighted_local_global")


def _away_from(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    signs = np.where(rng.random(values.shape) < 0.5, -1.0, 1.0)
    return values + signs * (KINK_MARGIN + np.abs(rng.standard_normal(values.shape)))


def _frame_mask(batch: int, frames: int) -> np.ndarray:
    mask = np.ones((batch, frames), dtype=bool)
    mask[-1, -1] = False
    return mask


def _training_weights() -> dict[Articulator, float]:
    boost = DynamicWeightState.from_config(BoostConfig())
    return {Articulator.BODY: 1.0, Articulator.FACE: 2.0, **boost.hand_weights()}


def check_latent_l1(rng: np.random.Generator, tol: float, h: float) -> GradCheckReport:
    slices = latent_slices(VaeConfig())
    shape = (2, 3, 80)
    mu_hat = Parameter(rng.standard_normal(shape), "mu_hat")
    logvar_hat = Parameter(rng.standard_normal(shape), "logvar_hat")
    target = LatentDistribution(constant(_away_from(mu_hat.data, rng)), constant(_away_from(logvar_hat.data, rng)), slices)
    pred = LatentDistribution(mu_hat, logvar_hat, slices)
    mask = _frame_mask(*shape[:2])
    weights = _training_weights()
    return grad_check(lambda: latent_l1_loss(pred, target, weights, mask), [mu_hat, logvar_hat], h=h, tol=tol, label="latent_l1")


def check_kl_gaussians(rng: np.random.Generator, tol: float, h: float) -> GradCheckReport:
    slices = latent_slices(VaeConfig())
    shape = (2, 3, 80)
    params = [Parameter(rng.standard_normal(shape) * scale, name) for name, scale in (("mu_hat", 1.0), ("logvar_hat", 0.5), ("mu", 1.0), ("logvar", 0.5))]
    pred = LatentDistribution(params[0], params[1], slices)
    target = LatentDistribution(params[2], params[3], slices)
    mask = _frame_mask(*shape[:2])
    return grad_check(lambda: kl_gaussians(pred, target, mask), params, h=h, tol=tol, label="kl_gaussians")


def check_kl_standard_normal(rng: np.random.Generator, tol: float, h: float) -> GradCheckReport:
    shape = (2, 3, 80)
    mu = Parameter(rng.standard_normal(shape), "mu")
    logvar = Parameter(rng.standard_normal(shape) * 0.5, "logvar")
    dist = LatentDistribution(mu, logvar, latent_slices(VaeConfig()))
    return grad_check(lambda: kl_to_standard_normal(dist, _frame_mask(*shape[:2])), [mu, logvar], h=h, tol=tol, label="kl_standard_normal")


def check_length_loss(rng: np.random.Generator, tol: float, h: float) -> GradCheckReport:
    logits = Parameter(rng.uniform(-1.0, 1.0, 4), "length_logits")
    # sigmoid outputs stay within (0.27, 0.73) here, far from targets 0.1 and 1.0
    lengths = [1, 10, 10, 1]
    return grad_check(lambda: length_loss(logits.sigmoid(), lengths, 10), [logits], h=h, tol=tol, label="length")


def check_vae_loss(rng: np.random.Generator, tol: float, h: float, max_coords: int | None = 3) -> GradCheckReport:
    """Full VAE objective (per-region reconstruction + beta * KL) on a 2-frame batch."""
    cfg = VaeConfig(dtype="float64", beta=0.1)
    vae = DisentangledVAE(cfg, rng)
    frames = rng.standard_normal((2, NUM_JOINTS, COORDS)) * 0.5
    eps = rng.standard_normal((2, cfg.latent_dim))
    with no_grad():
        start = vae.decode(reparameterize(vae.encode(frames), eps).z).data
    target = _away_from(start, rng)

    def objective():
        dist = vae.encode(frames)
        return vae_loss(target, vae.decode(reparameterize(dist, eps).z), dist, cfg)[0]

    named = vae.named_parameters()
    return grad_check(
        objective,
        [p for _, p in named],
        h=h,
        tol=tol,
        names=[n for n, _ in named],
        max_coords_per_tensor=max_coords,
        rng=rng,
        label="vae_loss",
    )


def check_generator(rng: np.random.Generator, tol: float, h: float, max_coords: int | None = 2, kl_weight: float = 1e-2) -> GradCheckReport:
    """Phase-2 objective (weighted latent L1 + length + KL) through the whole generator."""
    generator = Generator(TINY_GENERATOR, TINY_GLOSS, rng)
    table = rng.standard_normal((5, TEXT_EMBEDDING_DIM)) / np.sqrt(TEXT_EMBEDDING_DIM)
    text = TextBatch.from_tokens([[0, 1, 2], [3, 4]], table)
    lengths = [4, 1]
    with no_grad():
        start = generator(text, lengths=lengths)
    slices = latent_slices(VaeConfig())
    target = LatentDistribution(
        constant(_away_from(start.mu_hat.data, rng)),
        constant(_away_from(start.logvar_hat.data, rng)),
        slices,
    )
    weights = _training_weights()

    def objective():
        pred = generator(text, lengths=lengths)
        latent = latent_l1_loss(pred, target, weights, pred.frame_mask)
        return latent + length_loss(pred.length_ratio, lengths, generator.t_max) + kl_gaussians(pred, target, pred.frame_mask) * kl_weight

    named = generator.named_parameters()
    return grad_check(
        objective,
        [p for _, p in named],
        h=h,
        tol=tol,
        names=[n for n, _ in named],
        max_coords_per_tensor=max_coords,
        rng=rng,
        label="generator",
    )


GRADIENT_CASES: dict[str, Callable[[np.random.Generator, float, float], GradCheckReport]] = {
    "latent_l1": check_latent_l1,
    "kl_gaussians": check_kl_gaussians,
    "kl_standard_normal": check_kl_standard_normal,
    "length": check_length_loss,
    "vae_loss": check_vae_loss,
    "generator": check_generator,
}


def gradient_suite(tol: float = DEFAULT_TOL, seed: int = 0, h: float = DEFAULT_STEP, cases: list[str] | None = None) -> list[GradCheckReport]:
    """Run the named gradient checks (all by default), each with its own seeded generator."""
    reports = []
    for name in cases or list(GRADIENT_CASES):
        report = GRADIENT_CASES[name](np.random.default_rng([seed, stream_key(name)]), tol, h)
        logger.info("grad-check %s: %d coordinates, max rel. error %.3e", name, report.checked, report.max_rel_error)
        reports.append(report)
    return reports
