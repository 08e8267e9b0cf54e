"""Text-conditioned non-autoregressive latent generator.

Pipeline for a batch of sentences:

1. ``embed_project``: 768-dim token embeddings -> d_model, plus sinusoidal
   positions.
2. ``encode_text``: pre-norm transformer encoder with global self-attention.
3. ``predict_length``: masked mean-pool -> small MLP -> sigmoid length ratio.
4. ``init_time_queries``: reference pose -> d_model, replicated over frames,
   plus an optional learned per-frame table and sinusoidal positions.
5. ``decode_latents``: decoder layers (gloss self-attention, global
   cross-attention to the text, feed-forward), then a linear head emitting
   (mu, logvar) for every frame in one parallel pass.
"""

from dataclasses import dataclass

import numpy as np

from .attention import GlossAttention, MultiHeadAttention, build_global_mask, key_mask, with_self_allowance
from .autodiff import LayerNorm, Linear, Module, Parameter, Tensor, as_tensor, constant
from .config import GeneratorConfig, GlossAttentionConfig
from .errors import ConfigError, ShapeError, UnknownTokenError
from .pose.models import COORDS, NUM_JOINTS, TEXT_EMBEDDING_DIM
from .pose.synthetic import rest_pose

LATENT_DIM = 80
HEAD_WIDTH = 2 * LATENT_DIM


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Fixed (length, d_model) positional encoding: sin on even, cos on odd channels."""
    position = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, d_model, 2, dtype=np.float64) / d_model))
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(position * rates)
    pe[:, 1::2] = np.cos(position * rates[: d_model // 2])
    return pe


def decoded_length(ratio: float, t_max: int) -> int:
    """clamp(round_half_up(ratio * t_max), 1, t_max)."""
    return int(min(max(np.floor(ratio * t_max + 0.5), 1), t_max))


@dataclass
class TextBatch:
    """Padded batch of sentences as pseudo text embeddings."""

    embeddings: np.ndarray  # (B, S, 768)
    tokens: np.ndarray  # (B, S), -1 at padding
    mask: np.ndarray  # (B, S) valid tokens

    def __post_init__(self):
        if self.embeddings.ndim != 3 or self.embeddings.shape[-1] != TEXT_EMBEDDING_DIM:
            raise ShapeError("text_batch", self.embeddings.shape, None, f"expected (B, S, {TEXT_EMBEDDING_DIM})")
        if self.tokens.shape != self.embeddings.shape[:2] or self.mask.shape != self.tokens.shape:
            raise ShapeError("text_batch", self.tokens.shape, self.mask.shape, "tokens and mask must be (B, S)")
        if not self.mask.any(axis=1).all():
            raise ConfigError("every sentence needs at least one token")

    @classmethod
    def from_tokens(cls, sentences: list[list[int]], table: np.ndarray) -> "TextBatch":
        """Look up and pad token id sequences against a (vocab, 768) embedding table."""
        vocab = table.shape[0]
        width = max((len(s) for s in sentences), default=0)
        if width == 0:
            raise ConfigError("every sentence needs at least one token")
        tokens = np.full((len(sentences), width), -1, dtype=np.int64)
        for row, sentence in enumerate(sentences):
            bad = [t for t in sentence if not 0 <= t < vocab]
            if bad:
                raise UnknownTokenError(f"token ids {bad} outside vocabulary of size {vocab}")
            tokens[row, : len(sentence)] = sentence
        mask = tokens >= 0
        embeddings = np.where(mask[..., None], table[np.clip(tokens, 0, None)], 0.0)
        return cls(embeddings=embeddings, tokens=tokens, mask=mask)

    @property
    def batch_size(self) -> int:
        return int(self.tokens.shape[0])


@dataclass
class PredictedLatents:
    """Per-frame predicted posterior plus the length ratio, for a batch."""

    mu_hat: Tensor  # (B, T, 80)
    logvar_hat: Tensor  # (B, T, 80)
    length_ratio: Tensor  # (B,)
    frame_mask: np.ndarray  # (B, T)
    lengths: list[int]


class FeedForward(Module):
    def __init__(self, d_model: int, hidden: int, rng: np.random.Generator, dtype: str):
        self.inner = Linear(d_model, hidden, rng, dtype=dtype)
        self.outer = Linear(hidden, d_model, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.outer(self.inner(x).gelu())


class EncoderLayer(Module):
    """Pre-norm block: global self-attention then feed-forward, each with a residual."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.norm_attn = LayerNorm(cfg.d_model, cfg.dtype)
        self.attention = MultiHeadAttention(cfg.d_model, cfg.encoder_heads, rng, cfg.dtype)
        self.norm_ff = LayerNorm(cfg.d_model, cfg.dtype)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, rng, cfg.dtype)

    def forward(self, x: Tensor, allowed: np.ndarray) -> Tensor:
        h = self.norm_attn(x)
        x = x + self.attention(h, h, allowed)
        return x + self.ff(self.norm_ff(x))


class DecoderLayer(Module):
    """Pre-norm block: gloss self-attention, global cross-attention, feed-forward."""

    def __init__(self, cfg: GeneratorConfig, gloss: GlossAttentionConfig, rng: np.random.Generator):
        self.norm_self = LayerNorm(cfg.d_model, cfg.dtype)
        self.self_attention = GlossAttention(gloss, cfg.d_model, cfg.decoder_heads, rng, cfg.dtype)
        self.norm_cross = LayerNorm(cfg.d_model, cfg.dtype)
        self.cross_attention = MultiHeadAttention(cfg.d_model, cfg.decoder_heads, rng, cfg.dtype)
        self.norm_ff = LayerNorm(cfg.d_model, cfg.dtype)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, rng, cfg.dtype)

    def forward(self, x: Tensor, memory: Tensor, frame_mask: np.ndarray, cross_allowed: np.ndarray) -> Tensor:
        x = x + self.self_attention(self.norm_self(x), frame_mask)
        x = x + self.cross_attention(self.norm_cross(x), memory, cross_allowed)
        return x + self.ff(self.norm_ff(x))


class TextEncoder(Module):
    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.d_model = cfg.d_model
        self.projection = Linear(TEXT_EMBEDDING_DIM, cfg.d_model, rng, dtype=cfg.dtype)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.encoder_layers)]
        self.norm = LayerNorm(cfg.d_model, cfg.dtype)

    def embed(self, embeddings: Tensor) -> Tensor:
        projected = self.projection(embeddings)
        return projected + constant(sinusoidal_encoding(embeddings.shape[1], self.d_model), like=projected)

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        allowed = with_self_allowance(build_global_mask(x.shape[1], mask))
        for layer in self.layers:
            x = layer(x, allowed)
        return self.norm(x)


class LengthPredictor(Module):
    """Masked mean-pool -> Linear -> GELU -> Linear -> sigmoid."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.hidden = Linear(cfg.d_model, cfg.length_hidden, rng, dtype=cfg.dtype)
        self.out = Linear(cfg.length_hidden, 1, rng, dtype=cfg.dtype)

    def forward(self, memory: Tensor, mask: np.ndarray) -> Tensor:
        weights = np.asarray(mask, dtype=np.float64)
        weights = (weights / weights.sum(axis=1, keepdims=True))[:, None, :]
        pooled = (constant(weights, like=memory) @ memory).reshape(memory.shape[0], memory.shape[2])
        return self.out(self.hidden(pooled).gelu()).sigmoid().reshape(memory.shape[0])


class TimeQueries(Module):
    """Per-frame decoder inputs built from a stationary reference pose.

    Each row is the projected reference pose plus the frame's sinusoidal
    position. With ``trainable_time_queries`` a learned (t_max, d_model)
    table is added as well; it starts at zero, so an untrained table leaves
    the queries equal to projection plus position until training moves it.
    """

    def __init__(self, cfg: GeneratorConfig, t_max: int, reference_pose: np.ndarray, rng: np.random.Generator):
        reference = np.asarray(reference_pose, dtype=np.float64)
        if reference.shape != (NUM_JOINTS, COORDS):
            raise ShapeError("reference_pose", reference.shape, (NUM_JOINTS, COORDS))
        self.d_model = cfg.d_model
        self.t_max = t_max
        self.reference = reference.reshape(1, NUM_JOINTS * COORDS)
        self.pose_projection = Linear(NUM_JOINTS * COORDS, cfg.d_model, rng, dtype=cfg.dtype)
        # zero-initialized, so training starts from the pure reference-pose queries
        self.table = Parameter(np.zeros((t_max, cfg.d_model), dtype=cfg.dtype)) if cfg.trainable_time_queries else None

    def forward(self, length: int) -> Tensor:
        if not 1 <= length <= self.t_max:
            raise ConfigError(f"requested {length} time queries, supported range is 1..{self.t_max}")
        base = self.pose_projection(constant(self.reference, like=self.pose_projection.weight))
        queries = constant(np.ones((length, 1)), like=base) @ base
        if self.table is not None:
            queries = queries + self.table.slice(0, 0, length)
        return queries + constant(sinusoidal_encoding(length, self.d_model), like=queries)


class Generator(Module):
    """Text encoder, length predictor, time queries and latent decoder."""

    param_prefix = "generator"

    def __init__(
        self,
        cfg: GeneratorConfig,
        gloss: GlossAttentionConfig,
        rng: np.random.Generator,
        t_max: int | None = None,
        reference_pose: np.ndarray | None = None,
    ):
        t_max = t_max or cfg.t_max
        if t_max is None:
            raise ConfigError("generator needs t_max (set generator.t_max or pass it from the corpus)")
        self.cfg = cfg
        self.gloss = gloss
        self.t_max = int(t_max)
        self.dtype = np.dtype(cfg.dtype)
        self.text_encoder = TextEncoder(cfg, rng)
        self.length_predictor = LengthPredictor(cfg, rng)
        self.time_queries = TimeQueries(cfg, self.t_max, rest_pose() if reference_pose is None else reference_pose, rng)
        self.layers = [DecoderLayer(cfg, gloss, rng) for _ in range(cfg.decoder_layers)]
        self.norm = LayerNorm(cfg.d_model, cfg.dtype)
        self.head = Linear(cfg.d_model, HEAD_WIDTH, rng, dtype=cfg.dtype)

    def forward(self, text: TextBatch, lengths: list[int] | None = None) -> PredictedLatents:
        """Predict latents; ``lengths`` are the ground-truth lengths, predicted ones are used when None."""
        memory = encode_text(embed_project(text, self), self, text.mask)
        ratio = predict_length(memory, self, text.mask)
        if lengths is None:
            lengths = [decoded_length(r, self.t_max) for r in ratio.data.tolist()]
        frames = max(lengths)
        frame_mask = np.arange(frames)[None, :] < np.asarray(lengths)[:, None]
        queries = init_time_queries(frames, self)
        batched = constant(np.zeros((text.batch_size, frames, self.cfg.d_model)), like=queries) + queries
        mu_hat, logvar_hat = decode_latents(batched, memory, self, frame_mask, text.mask)
        return PredictedLatents(mu_hat, logvar_hat, ratio, frame_mask, list(lengths))


def embed_project(text: TextBatch, generator: Generator) -> Tensor:
    """(B, S, 768) embeddings -> (B, S, d_model) with positional encoding."""
    return generator.text_encoder.embed(as_tensor(text.embeddings, generator.dtype))


def encode_text(x: Tensor, generator: Generator, mask: np.ndarray) -> Tensor:
    """Contextualize projected tokens with global self-attention over valid tokens."""
    return generator.text_encoder(x, mask)


def predict_length(memory: Tensor, generator: Generator, mask: np.ndarray) -> Tensor:
    """Length ratio in (0, 1) per sentence."""
    return generator.length_predictor(memory, mask)


def init_time_queries(length: int, generator: Generator) -> Tensor:
    """(T, d_model) decoder inputs for T frames."""
    return generator.time_queries(length)


def decode_latents(queries: Tensor, memory: Tensor, generator: Generator, frame_mask: np.ndarray, text_mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Run the decoder stack over all frames at once and split the head into (mu_hat, logvar_hat)."""
    cross_allowed = key_mask(queries.shape[1], text_mask)
    x = queries
    for layer in generator.layers:
        x = layer(x, memory, frame_mask, cross_allowed)
    out = generator.head(generator.norm(x))
    return out.slice(-1, 0, LATENT_DIM), out.slice(-1, LATENT_DIM, HEAD_WIDTH)
