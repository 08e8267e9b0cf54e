"""Tests for VAE and generator training, and their checkpoints."""

import csv

import numpy as np
import pytest

from sign_latent_tools.autodiff import no_grad
from sign_latent_tools.config import EarlyStoppingConfig, GeneratorConfig, RunConfig, VaeConfig, VaeTrainingConfig
from sign_latent_tools.errors import ArchitectureMismatchError, CheckpointError, ConfigError
from sign_latent_tools.evaluation import evaluate_pairs, shuffled_pairing_baseline
from sign_latent_tools.generator import TextBatch
from sign_latent_tools.pose import PoseSequence, generate_synthetic_corpus
from sign_latent_tools.pose.normalize import normalize_frames
from sign_latent_tools.synthesis import synthesize
from sign_latent_tools.training import (
    LossRecord,
    batch_indices,
    load_generator,
    load_vae,
    pad_sequences,
    save_generator,
    save_vae,
    train_generator,
    train_vae,
    validation_split,
    write_loss_curves,
)


@pytest.fixture
def trained_vae(small_corpus, tiny_config):
    """A VAE after two epochs on the small corpus."""
    return train_vae(small_corpus, tiny_config).vae


class TestBatching:
    """Padding, batching and the validation split."""

    def test_pad_sequences(self):
        """Test sequences are zero-padded with a matching validity mask."""
        padded, mask = pad_sequences([np.ones((2, 3)), np.ones((4, 3))])
        assert padded.shape == (2, 4, 3)
        np.testing.assert_array_equal(mask, [[True, True, False, False], [True, True, True, True]])
        assert padded[0, 2:].sum() == 0.0

    def test_batch_indices_cover_everything(self, rng):
        """Test shuffled batches partition the sample indices."""
        batches = batch_indices(10, 4, rng)
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_validation_split(self):
        """Test the split is disjoint, complete and reproducible."""
        train, val = validation_split(10, 0.2, seed=1)
        assert len(val) == 2
        assert sorted(train + val) == list(range(10))
        assert validation_split(10, 0.2, seed=1) == (train, val)

    @pytest.mark.parametrize(("count", "fraction"), [(10, 0.0), (1, 0.5)])
    def test_no_holdout(self, count, fraction):
        """Test a zero fraction or a single sample validates on the training set."""
        train, val = validation_split(count, fraction, seed=0)
        assert train == val == list(range(count))

    def test_loss_curves_csv(self, tmp_path):
        """Test loss curves are written as epoch,component,value rows."""
        path = write_loss_curves(tmp_path / "curves" / "loss.csv", [LossRecord(1, "total", 0.5), LossRecord(2, "total", 0.25)])
        with path.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows == [["epoch", "component", "value"], ["1", "total", "0.5"], ["2", "total", "0.25"]]


class TestTrainVae:
    """VAE training loop and checkpoints."""

    def test_curves_have_every_component(self, small_corpus, tiny_config):
        """Test each epoch logs region terms, reconstruction, KL and total."""
        result = train_vae(small_corpus, tiny_config)
        components = {record.component for record in result.curves}
        assert components == {"body", "lh", "rh", "face", "recon", "kl", "total"}
        assert len(result.epoch_losses()) == 2

    def test_deterministic(self, small_corpus, tiny_config):
        """Test the same seed reproduces the same loss curve."""
        first = train_vae(small_corpus, tiny_config, epochs=1)
        second = train_vae(small_corpus, tiny_config, epochs=1)
        assert first.curves == second.curves

    def test_checkpoint_round_trip(self, tmp_path, trained_vae, small_corpus):
        """Test a reloaded VAE encodes and decodes identically."""
        save_vae(tmp_path / "vae.ckpt", trained_vae)
        loaded = load_vae(tmp_path / "vae.ckpt", expected=trained_vae.cfg)
        frames = normalize_frames(small_corpus.samples[0].pose.frames)
        with no_grad():
            np.testing.assert_array_equal(loaded.encode(frames).mu.data, trained_vae.encode(frames).mu.data)
            z = trained_vae.encode(frames).mu
            np.testing.assert_array_equal(loaded.decode(z).data, trained_vae.decode(z).data)

    def test_architecture_mismatch(self, tmp_path, trained_vae):
        """Test loading with a different architecture is refused."""
        save_vae(tmp_path / "vae.ckpt", trained_vae)
        with pytest.raises(ArchitectureMismatchError, match="variant"):
            load_vae(tmp_path / "vae.ckpt", expected=VaeConfig(variant="deep"))

    def test_objective_weights_are_not_architecture(self, tmp_path, trained_vae):
        """Test a different beta still loads."""
        save_vae(tmp_path / "vae.ckpt", trained_vae)
        assert load_vae(tmp_path / "vae.ckpt", expected=VaeConfig(beta=0.5)).cfg.beta == trained_vae.cfg.beta


class TestTrainGenerator:
    """Two-phase generator training and resuming."""

    def test_phase_one_then_two(self, tmp_path, small_corpus, trained_vae, tiny_config):
        """Test a phase-1 checkpoint resumes into phase 2 with the KL term."""
        first = train_generator(small_corpus, trained_vae, tiny_config, phase=1)
        assert first.epochs_run == 2
        assert "val/kl" not in {r.component for r in first.curves}
        save_generator(tmp_path / "gen.ckpt", first)

        checkpoint = load_generator(tmp_path / "gen.ckpt", expected=tiny_config.generator, expected_gloss=tiny_config.gloss_attention)
        assert checkpoint.meta["phase"] == 1
        second = train_generator(small_corpus, trained_vae, tiny_config, phase=2, resume=checkpoint)
        components = {r.component for r in second.curves}
        assert {"train/total", "train/kl", "val/total", "val/kl", "boost/s", "lr"} <= components
        # a new phase restarts the epoch count
        assert second.epochs_run == 2

    def test_resume_same_phase_continues(self, tmp_path, small_corpus, trained_vae, tiny_config):
        """Test resuming within a phase continues the epoch count."""
        save_generator(tmp_path / "gen.ckpt", train_generator(small_corpus, trained_vae, tiny_config, phase=1))
        resumed = train_generator(small_corpus, trained_vae, tiny_config, phase=1, epochs=1, resume=load_generator(tmp_path / "gen.ckpt"))
        assert resumed.epochs_run == 3
        assert min(r.epoch for r in resumed.curves) == 3

    def test_resume_without_improvement_keeps_checkpoint(self, tmp_path, small_corpus, trained_vae, tiny_config):
        """Test a same-phase resume that never beats the saved best returns the saved parameters and moments."""
        save_generator(tmp_path / "gen.ckpt", train_generator(small_corpus, trained_vae, tiny_config, phase=1, epochs=1))
        checkpoint = load_generator(tmp_path / "gen.ckpt")
        saved = {name: value.copy() for name, value in checkpoint.generator.state_dict().items()}

        strict = tiny_config.with_updates(generator_training=tiny_config.generator_training.model_copy(update={"early_stopping": EarlyStoppingConfig(min_delta=1e6)}))
        resumed = train_generator(small_corpus, trained_vae, strict, phase=1, epochs=2, resume=checkpoint)
        assert resumed.epochs_run == 3
        assert resumed.best_val == checkpoint.meta["best_val"]
        for name, value in resumed.generator.state_dict().items():
            np.testing.assert_array_equal(value, saved[name])
        assert resumed.optimizer.step_count == checkpoint.meta["optimizer"]["step"]
        arrays, _ = resumed.optimizer.state_dict()
        for name, value in arrays.items():
            np.testing.assert_array_equal(value, checkpoint.optimizer_arrays[name])

    def test_best_epoch_restores_matching_moments(self, small_corpus, trained_vae, tiny_config):
        """Test the best epoch's optimizer state comes back together with its parameters."""
        strict = tiny_config.with_updates(generator_training=tiny_config.generator_training.model_copy(update={"early_stopping": EarlyStoppingConfig(min_delta=1e6)}))
        one = train_generator(small_corpus, trained_vae, strict, phase=1, epochs=1)
        two = train_generator(small_corpus, trained_vae, strict, phase=1, epochs=2)
        assert two.epochs_run == 2
        for name, value in two.generator.state_dict().items():
            np.testing.assert_array_equal(value, one.generator.state_dict()[name])
        assert two.optimizer.step_count == one.optimizer.step_count
        for m_two, m_one in zip(two.optimizer.m, one.optimizer.m, strict=True):
            np.testing.assert_array_equal(m_two, m_one)

    def test_checkpoint_reproduces_predictions(self, tmp_path, small_corpus, trained_vae, tiny_config):
        """Test a reloaded generator predicts exactly what the trained one did."""
        result = train_generator(small_corpus, trained_vae, tiny_config, epochs=1)
        save_generator(tmp_path / "gen.ckpt", result)
        loaded = load_generator(tmp_path / "gen.ckpt").generator
        text = TextBatch.from_tokens([list(s.tokens) for s in small_corpus.samples[:2]], small_corpus.embeddings)
        with no_grad():
            expected, actual = result.generator(text), loaded(text)
        np.testing.assert_array_equal(actual.mu_hat.data, expected.mu_hat.data)
        assert actual.lengths == expected.lengths
        assert loaded.t_max == small_corpus.max_length

    def test_boost_stays_bounded(self, small_corpus, trained_vae, tiny_config):
        """Test the boost factor never leaves [1, s_max] during training."""
        result = train_generator(small_corpus, trained_vae, tiny_config)
        assert result.boost_history
        assert all(1.0 <= s <= 4.0 for s in result.boost_history)

    def test_vae_stays_frozen(self, small_corpus, trained_vae, tiny_config):
        """Test generator training never changes the VAE."""
        before = {name: value.copy() for name, value in trained_vae.state_dict().items()}
        train_generator(small_corpus, trained_vae, tiny_config, epochs=1)
        for name, value in trained_vae.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_invalid_phase(self, small_corpus, trained_vae, tiny_config):
        """Test only phases 1 and 2 exist."""
        with pytest.raises(ConfigError, match="phase"):
            train_generator(small_corpus, trained_vae, tiny_config, phase=3)

    def test_t_max_too_small(self, small_corpus, trained_vae, tiny_config):
        """Test a configured t_max shorter than the corpus is rejected."""
        config = tiny_config.with_updates(generator=tiny_config.generator.model_copy(update={"t_max": 5}))
        with pytest.raises(ConfigError, match="t_max"):
            train_generator(small_corpus, trained_vae, config)

    def test_wrong_checkpoint_kind(self, tmp_path, trained_vae):
        """Test a VAE checkpoint is not accepted as a generator."""
        save_vae(tmp_path / "vae.ckpt", trained_vae)
        with pytest.raises(CheckpointError, match="not a generator"):
            load_generator(tmp_path / "vae.ckpt")

    def test_generator_architecture_mismatch(self, tmp_path, small_corpus, trained_vae, tiny_config):
        """Test resuming with a different width is refused."""
        save_generator(tmp_path / "gen.ckpt", train_generator(small_corpus, trained_vae, tiny_config, epochs=1))
        with pytest.raises(ArchitectureMismatchError, match="d_model"):
            load_generator(tmp_path / "gen.ckpt", expected=tiny_config.generator.model_copy(update={"d_model": 32}))


@pytest.mark.slow
class TestDeskScale:
    """Desk-scale training runs on the default synthetic corpus."""

    def test_vae_converges(self):
        """Test the base VAE cuts its loss 5x and reconstructs within 10% of the data variance."""
        corpus = generate_synthetic_corpus(vocab_size=20, n_samples=200, max_tokens=4, seed=0)
        config = RunConfig(seed=0, vae_training=VaeTrainingConfig(epochs=300))
        result = train_vae(corpus, config)
        losses = result.epoch_losses()
        assert losses[-1] * 5 <= losses[0]

        frames = np.concatenate([normalize_frames(s.pose.frames) for s in corpus.samples])
        with no_grad():
            recon = result.vae.decode(result.vae.encode(frames).mu).data
        mse = np.mean((recon - frames) ** 2)
        assert mse < 0.1 * np.mean(frames.var(axis=0))

    def test_generator_learns(self, tmp_path):
        """Test both phases: latent L1 falls 5x, samples beat a shuffled pairing 3x and lengths land within 10%."""
        corpus = generate_synthetic_corpus(vocab_size=20, n_samples=200, max_tokens=4, seed=0)
        config = RunConfig(seed=0, generator=GeneratorConfig(d_model=64, encoder_heads=4, decoder_heads=4, ff_dim=128, length_hidden=32))
        vae = train_vae(corpus, config, epochs=100).vae
        phase_one = train_generator(corpus, vae, config, phase=1, epochs=100)
        curve = phase_one.epoch_losses("val/latent_l1")
        assert min(curve) < 0.2 * curve[0]

        save_generator(tmp_path / "gen1.ckpt", phase_one)
        phase_two = train_generator(corpus, vae, config, phase=2, epochs=100, resume=load_generator(tmp_path / "gen1.ckpt"))
        assert phase_two.epoch_losses("val/kl")

        sentences = {s.sample_id: list(s.tokens) for s in corpus.samples}
        references = {s.sample_id: PoseSequence(normalize_frames(s.pose.frames)) for s in corpus.samples}
        generated = synthesize(sentences, corpus.embeddings, phase_two.generator, vae, seed=0)
        report = evaluate_pairs(generated, references)
        baseline = shuffled_pairing_baseline(generated, references, np.random.default_rng(0))
        assert report.aggregate * 3 <= baseline.aggregate

        length_errors = [abs(generated[i].length - references[i].length) / references[i].length for i in sentences]
        assert np.median(length_errors) < 0.1
