"""Text to pose: predict latents, sample them, decode with the VAE."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import no_grad
from .config import worker_count
from .evaluation import latent_region_stats
from .generator import Generator, TextBatch
from .pose.io import POSE_SUFFIX, save_pose
from .pose.models import PoseSequence
from .seeding import EPSILON, child_seed
from .training import check_vae_compatible
from .vae import DisentangledVAE, LatentDistribution, reparameterize, vae_decode

logger = logging.getLogger(__name__)


def sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    """Noise generator for one sample, independent of how samples are scheduled."""
    return np.random.default_rng(child_seed(seed, f"{EPSILON}/synthesize/{sample_id}"))


def synthesize_one(
    sample_id: str,
    tokens: list[int],
    embeddings: np.ndarray,
    generator: Generator,
    vae: DisentangledVAE,
    seed: int,
    deterministic: bool = False,
) -> PoseSequence:
    """Generate one pose sequence at the predicted length.

    Raises:
        UnknownTokenError: When a token id is outside the embedding table.
    """
    pred = generator(TextBatch.from_tokens([tokens], embeddings))
    frames = pred.lengths[0]
    mu = pred.mu_hat.slice(1, 0, frames).reshape(frames, pred.mu_hat.shape[-1])
    logvar = pred.logvar_hat.slice(1, 0, frames).reshape(frames, pred.logvar_hat.shape[-1])
    dist = LatentDistribution(mu, logvar, vae.latent_slices)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("%s: %d frames, latent stats %s", sample_id, frames, latent_region_stats(dist))
    sample = reparameterize(dist, None if deterministic else sample_rng(seed, sample_id))
    return vae_decode(sample, vae)


def synthesize(
    sentences: dict[str, list[int]],
    embeddings: np.ndarray,
    generator: Generator,
    vae: DisentangledVAE,
    seed: int,
    deterministic: bool = False,
    workers: int | None = None,
) -> dict[str, PoseSequence]:
    """Generate every sentence, fanning out across threads; results are keyed by sample id."""
    check_vae_compatible(vae)
    ids = sorted(sentences)
    with no_grad(), ThreadPoolExecutor(max_workers=workers or worker_count()) as executor:
        poses = list(executor.map(lambda i: synthesize_one(i, sentences[i], embeddings, generator, vae, seed, deterministic), ids))
    return dict(zip(ids, poses, strict=True))


def write_poses(poses: dict[str, PoseSequence], out_dir: Path | str) -> list[Path]:
    """Write ``<id>.a2vp`` files into a flat directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sample_id, pose in poses.items():
        path = out_dir / f"{sample_id}{POSE_SUFFIX}"
        save_pose(path, pose)
        paths.append(path)
    return paths
