"""Run configuration: one JSON document covering every stage of the pipeline.

Unknown keys are rejected everywhere. Defaults reproduce the published
hyperparameters; ``RunConfig().to_json()`` is what ``--print-config`` prints.
"""

import os
from pathlib import Path
from typing import Any, Literal

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError
from .pose.models import Articulator

LATENT_TOTAL = 80

Dtype = Literal["float32", "float64"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RegionSizes(_Section):
    """Latent width per articulator."""

    body: int = Field(8, ge=1)
    rh: int = Field(28, ge=1)
    lh: int = Field(28, ge=1)
    face: int = Field(16, ge=1)

    def of(self, articulator: Articulator) -> int:
        return getattr(self, articulator.value)

    @property
    def total(self) -> int:
        return self.body + self.rh + self.lh + self.face


class RegionWeights(_Section):
    """Per-articulator reconstruction weights (w_RH, w_LH, w_F, w_B)."""

    rh: float = Field(10.0, ge=0)
    lh: float = Field(14.0, ge=0)
    face: float = Field(2.0, ge=0)
    body: float = Field(1.0, ge=0)

    def of(self, articulator: Articulator) -> float:
        return getattr(self, articulator.value)


BASE_HIDDEN = {"body": [16], "rh": [56], "lh": [56], "face": [32]}
DEEP_HIDDEN = {"body": [24], "rh": [84, 56], "lh": [84, 56], "face": [48, 32]}
ENTANGLED_HIDDEN = {"base": [160], "deep": [240, 160]}
DEFAULT_BETA = {"base": 1e-6, "deep": 1e-7}


class VaeConfig(_Section):
    """Articulator-wise VAE architecture and objective weights."""

    layout: Literal["disentangled", "entangled"] = "disentangled"
    variant: Literal["base", "deep"] = "base"
    latent_dims: RegionSizes = RegionSizes()
    # Encoder hidden widths per region; decoders mirror them. Filled from ``variant`` when omitted.
    hidden: dict[str, list[int]] = Field(default_factory=dict)
    # Entangled layout only; filled from ``variant`` when omitted.
    entangled_hidden: list[int] = Field(default_factory=list)
    beta: float = Field(-1.0)
    recon_weights: RegionWeights = RegionWeights()
    dtype: Dtype = "float32"

    @model_validator(mode="before")
    @classmethod
    def _variant_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        variant = data.get("variant", "base")
        if variant not in DEFAULT_BETA:
            return data
        if data.get("beta") is None:
            data["beta"] = DEFAULT_BETA[variant]
        if not data.get("hidden"):
            data["hidden"] = {k: list(v) for k, v in (DEEP_HIDDEN if variant == "deep" else BASE_HIDDEN).items()}
        if not data.get("entangled_hidden"):
            data["entangled_hidden"] = list(ENTANGLED_HIDDEN[variant])
        return data

    @model_validator(mode="after")
    def _check(self) -> "VaeConfig":
        if self.latent_dims.total != LATENT_TOTAL:
            raise ValueError(f"latent dims must sum to {LATENT_TOTAL}, got {self.latent_dims.total}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if set(self.hidden) != {a.value for a in Articulator}:
            raise ValueError(f"hidden must name every articulator, got {sorted(self.hidden)}")
        if any(not widths or min(widths) < 1 for widths in self.hidden.values()):
            raise ValueError("hidden widths must be non-empty positive lists")
        return self

    @property
    def latent_dim(self) -> int:
        return self.latent_dims.total


class GlossAttentionConfig(_Section):
    """Decoder self-attention window, query construction and local-global fusion."""

    window: int = Field(3, ge=1)
    query_mode: Literal["none", "mean", "attention"] = "none"
    query_span: int = Field(3, ge=1)
    fusion: Literal["local_only", "weighted_local_global", "global_only"] = "local_only"

    @field_validator("window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"window must be odd, got {value}")
        return value


class GeneratorConfig(_Section):
    """Text-conditioned non-autoregressive transformer."""

    d_model: int = Field(512, ge=1)
    encoder_layers: int = Field(3, ge=1)
    encoder_heads: int = Field(4, ge=1)
    decoder_layers: int = Field(6, ge=1)
    decoder_heads: int = Field(8, ge=1)
    ff_dim: int = Field(1024, ge=1)
    length_hidden: int = Field(128, ge=1)
    # Maximum target frames; taken from the corpus at training time when unset.
    t_max: int | None = Field(None, ge=1)
    trainable_time_queries: bool = True
    dtype: Dtype = "float32"

    @model_validator(mode="after")
    def _check_heads(self) -> "GeneratorConfig":
        for heads in (self.encoder_heads, self.decoder_heads):
            if self.d_model % heads:
                raise ValueError(f"d_model {self.d_model} is not divisible by {heads} heads")
        return self


class VaeTrainingConfig(_Section):
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(2e-4, gt=0)
    betas: tuple[float, float] = (0.5, 0.9)
    weight_decay: float = Field(0.0, ge=0)
    grad_clip: float | None = Field(None, gt=0)


class BoostConfig(_Section):
    """Hand-weight schedule: base weights scaled by a bounded boost factor."""

    mode: Literal["dynamic", "fixed"] = "dynamic"
    base_rh: float = Field(3.5, gt=0)
    base_lh: float = Field(2.5, gt=0)
    s_max: float = Field(4.0, ge=1)
    alpha: float = Field(0.5, ge=0)
    ema_decay: float = Field(0.99, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)


class SchedulerConfig(_Section):
    factor: float = Field(0.9, gt=0, lt=1)
    patience: int = Field(40, ge=1)
    min_delta: float = Field(0.0, ge=0)


class EarlyStoppingConfig(_Section):
    patience: int = Field(100, ge=1)
    min_delta: float = Field(1e-5, ge=0)


class GeneratorTrainingConfig(_Section):
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(2e-4, gt=0)
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = Field(1e-4, ge=0)
    kl_weight: float = Field(1e-2, gt=0)
    face_weight: float = Field(2.0, ge=0)
    body_weight: float = Field(1.0, ge=0)
    length_weight: float = Field(1.0, ge=0)
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    grad_clip: float | None = Field(None, gt=0)
    boost: BoostConfig = BoostConfig()
    scheduler: SchedulerConfig = SchedulerConfig()
    early_stopping: EarlyStoppingConfig = EarlyStoppingConfig()


class PathsConfig(_Section):
    corpus: str = "corpus"
    vae_checkpoint: str = "vae.ckpt"
    generator_checkpoint: str = "gen.ckpt"
    output: str = "out"


class RunConfig(_Section):
    """Everything a run needs, as one document."""

    seed: int = 0
    vae: VaeConfig = VaeConfig()
    generator: GeneratorConfig = GeneratorConfig()
    gloss_attention: GlossAttentionConfig = GlossAttentionConfig()
    vae_training: VaeTrainingConfig = VaeTrainingConfig()
    generator_training: GeneratorTrainingConfig = GeneratorTrainingConfig()
    paths: PathsConfig = PathsConfig()

    def to_json(self) -> bytes:
        return orjson.dumps(self.model_dump(mode="json"), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    def with_updates(self, **sections: Any) -> "RunConfig":
        """Return a copy with top-level sections replaced (revalidated)."""
        data = self.model_dump(mode="json")
        for key, value in sections.items():
            data[key] = value.model_dump(mode="json") if isinstance(value, BaseModel) else value
        return RunConfig.model_validate(data)


def load_run_config(path: Path | str | None) -> RunConfig:
    """Read and validate a JSON run config; ``None`` gives the defaults.

    Raises:
        ConfigError: When the file is missing or not valid JSON.
        pydantic.ValidationError: When the document violates the schema.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    return RunConfig.model_validate(data)


def save_run_config(config: RunConfig, path: Path | str) -> None:
    Path(path).write_bytes(config.to_json())


# Default fan-out for per-sample work (synthesize, eval)
DEFAULT_WORKERS = 4
THREADS_ENV = "A2V_THREADS"


def worker_count() -> int:
    """Worker threads for per-sample fan-out, capped by ``A2V_THREADS``."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return DEFAULT_WORKERS
    try:
        value = int(raw)
    except ValueError as err:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from err
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


__all__ = [
    "BoostConfig",
    "EarlyStoppingConfig",
    "GeneratorConfig",
    "GeneratorTrainingConfig",
    "GlossAttentionConfig",
    "PathsConfig",
    "RegionSizes",
    "RegionWeights",
    "RunConfig",
    "SchedulerConfig",
    "VaeConfig",
    "VaeTrainingConfig",
    "load_run_config",
    "save_run_config",
    "worker_count",
]
