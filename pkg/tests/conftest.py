"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest

from sign_latent_tools.config import GeneratorConfig, GeneratorTrainingConfig, RunConfig, VaeTrainingConfig
from sign_latent_tools.pose import PoseSequence, export_corpus, generate_synthetic_corpus, rest_pose

# Width-reduced generator used wherever a full model is needed in tests
TINY_GENERATOR = GeneratorConfig(d_model=16, encoder_layers=1, encoder_heads=2, decoder_layers=2, decoder_heads=2, ff_dim=32, length_hidden=8)


def make_pose(rng: np.random.Generator, length: int, scale: float = 0.1) -> PoseSequence:
    """Rest pose plus Gaussian jitter, one frame per time step."""
    frames = rest_pose()[None] + rng.standard_normal((length, 178, 3)) * scale
    return PoseSequence(frames)


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    """Six sentences of one or two tokens over a four-token vocabulary."""
    return generate_synthetic_corpus(vocab_size=4, n_samples=6, max_tokens=2, seed=3)


@pytest.fixture
def corpus_dir(tmp_path, small_corpus):
    """The small corpus exported to a temporary directory."""
    out = tmp_path / "corpus"
    export_corpus(small_corpus, out)
    return out


@pytest.fixture
def tiny_config():
    """Run config with a tiny generator and a couple of epochs per stage."""
    return RunConfig(
        seed=5,
        generator=TINY_GENERATOR,
        vae_training=VaeTrainingConfig(epochs=2, batch_size=4),
        generator_training=GeneratorTrainingConfig(epochs=2, batch_size=4, validation_fraction=0.2),
    )
