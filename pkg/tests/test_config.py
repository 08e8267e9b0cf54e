"""Tests for the run configuration."""

import orjson
import pytest
from conftest import TINY_GENERATOR
from pydantic import ValidationError

from sign_latent_tools.config import (
    GeneratorConfig,
    RegionSizes,
    RunConfig,
    VaeConfig,
    load_run_config,
    save_run_config,
    worker_count,
)
from sign_latent_tools.errors import ConfigError


class TestDefaults:
    """Default hyperparameters."""

    def test_vae_defaults(self):
        """Test the default VAE is the disentangled base variant."""
        cfg = RunConfig().vae
        assert cfg.layout == "disentangled"
        assert cfg.beta == 1e-6
        assert cfg.latent_dim == 80
        assert cfg.hidden["rh"] == [56]
        assert (cfg.recon_weights.rh, cfg.recon_weights.lh, cfg.recon_weights.face, cfg.recon_weights.body) == (10.0, 14.0, 2.0, 1.0)

    def test_deep_variant_defaults(self):
        """Test the deep variant fills its own beta and hidden widths."""
        cfg = VaeConfig(variant="deep")
        assert cfg.beta == 1e-7
        assert cfg.hidden["face"] == [48, 32]

    def test_explicit_beta_wins(self):
        """Test an explicit beta is not overwritten by the variant."""
        assert VaeConfig(variant="deep", beta=0.5).beta == 0.5

    def test_training_defaults(self):
        """Test the generator schedule defaults."""
        training = RunConfig().generator_training
        assert training.boost.base_rh == 3.5
        assert training.boost.base_lh == 2.5
        assert training.boost.s_max == 4.0
        assert training.scheduler.factor == 0.9
        assert training.scheduler.patience == 40
        assert training.early_stopping.patience == 100


class TestValidation:
    """Schema checks."""

    def test_unknown_key_rejected(self):
        """Test unknown keys fail at every level."""
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"bogus": 1})
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"vae": {"bogus": 1}})

    def test_latent_widths_must_sum_to_80(self):
        """Test region latent widths are checked against the latent total."""
        with pytest.raises(ValidationError, match="sum to 80"):
            VaeConfig(latent_dims=RegionSizes(body=10))

    def test_negative_beta(self):
        """Test beta must be non-negative."""
        with pytest.raises(ValidationError):
            VaeConfig(beta=-0.1)

    def test_heads_divide_model_width(self):
        """Test d_model must split evenly across heads."""
        with pytest.raises(ValidationError):
            GeneratorConfig(d_model=10, encoder_heads=4)

    def test_frozen(self):
        """Test config sections cannot be mutated in place."""
        with pytest.raises(ValidationError):
            RunConfig().seed = 3  # ty: ignore[invalid-assignment]


class TestLoading:
    """Reading configs from disk."""

    def test_none_gives_defaults(self):
        """Test no path means the default config."""
        assert load_run_config(None) == RunConfig()

    def test_round_trip(self, tmp_path):
        """Test a saved config loads back equal."""
        config = RunConfig(seed=9, generator=TINY_GENERATOR)
        save_run_config(config, tmp_path / "run.json")
        assert load_run_config(tmp_path / "run.json") == config

    def test_partial_document(self, tmp_path):
        """Test omitted sections take their defaults."""
        path = tmp_path / "run.json"
        path.write_bytes(orjson.dumps({"seed": 4, "vae": {"variant": "deep"}}))
        config = load_run_config(path)
        assert config.seed == 4
        assert config.vae.beta == 1e-7
        assert config.generator == GeneratorConfig()

    def test_missing_file(self, tmp_path):
        """Test a missing file is a ConfigError."""
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        """Test malformed JSON is a ConfigError."""
        path = tmp_path / "run.json"
        path.write_text("{seed: ", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_run_config(path)

    def test_json_keys_sorted(self):
        """Test the printed config has sorted keys."""
        document = orjson.loads(RunConfig().to_json())
        assert list(document) == sorted(document)
        assert list(document["vae"]) == sorted(document["vae"])

    def test_with_updates(self):
        """Test section updates are revalidated into a new config."""
        config = RunConfig().with_updates(seed=7, generator=TINY_GENERATOR)
        assert config.seed == 7
        assert config.generator.d_model == 16
        with pytest.raises(ValidationError):
            RunConfig().with_updates(vae={"beta": -1.0})


class TestWorkerCount:
    """Thread fan-out from the environment."""

    def test_default(self, monkeypatch):
        """Test the default worker count is 4."""
        monkeypatch.delenv("A2V_THREADS", raising=False)
        assert worker_count() == 4

    def test_from_environment(self, monkeypatch):
        """Test A2V_THREADS overrides the default."""
        monkeypatch.setenv("A2V_THREADS", "2")
        assert worker_count() == 2

    @pytest.mark.parametrize("value", ["0", "-3", "many"])
    def test_invalid(self, value, monkeypatch):
        """Test non-positive or non-numeric values are rejected."""
        monkeypatch.setenv("A2V_THREADS", value)
        with pytest.raises(ConfigError):
            worker_count()
