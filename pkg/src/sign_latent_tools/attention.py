"""Multi-head attention with local temporal windows ("gloss attention").

Decoder self-attention is restricted to a centred window of N frames instead
of the whole sequence. Queries can first be aggregated over a small
neighbourhood (mean pooling or a learned single-head attention), and the
local output can be blended with a global one through a learnable weight.

Masks are boolean ``allowed[..., query, key]`` arrays. Disallowed logits get
a -1e9 bias before the softmax; their weights underflow to exactly zero, so
frames outside the window cannot influence the output at all.
"""

import numpy as np

from .autodiff import Linear, Module, Parameter, Tensor, constant
from .config import GlossAttentionConfig
from .errors import ConfigError, ShapeError

MASK_BIAS = -1e9


def build_local_mask(length: int, window: int, pad_mask: np.ndarray | None = None) -> np.ndarray:
    """``allowed[t, u]`` iff |t - u| <= (window - 1) / 2 and both frames are valid.

    Args:
        length: Number of frames T.
        window: Odd window size N (total frames, not radius).
        pad_mask: Frame validity, shape (T,) or (B, T); all valid when None.

    Returns:
        Boolean array of shape (T, T), or (B, T, T) for a batched pad mask.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"attention window must be an odd positive integer, got {window}")
    radius = (window - 1) // 2
    index = np.arange(length)
    allowed = np.abs(index[:, None] - index[None, :]) <= radius
    if pad_mask is None:
        return allowed
    valid = _validity(pad_mask, length)
    return allowed & valid[..., :, None] & valid[..., None, :]


def build_global_mask(length: int, pad_mask: np.ndarray | None = None) -> np.ndarray:
    """Every valid frame may attend to every valid frame."""
    return build_local_mask(length, 2 * length - 1, pad_mask)


def key_mask(query_length: int, key_valid: np.ndarray) -> np.ndarray:
    """Cross-attention mask: every query may attend to every valid key, shape (B, Tq, Tk)."""
    key_valid = np.asarray(key_valid, dtype=bool)
    return np.broadcast_to(key_valid[..., None, :], (*key_valid.shape[:-1], query_length, key_valid.shape[-1])).copy()


def with_self_allowance(allowed: np.ndarray) -> np.ndarray:
    """Let every query attend to itself, so no row is fully masked (padded rows included)."""
    allowed = allowed.copy()
    diagonal = np.arange(allowed.shape[-1])
    allowed[..., diagonal, diagonal] = True
    return allowed


def _validity(pad_mask: np.ndarray, length: int) -> np.ndarray:
    valid = np.asarray(pad_mask, dtype=bool)
    if valid.shape[-1] != length:
        raise ShapeError("pad_mask", valid.shape, (length,))
    return valid


def neighbourhood_mask(length: int, span: int, pad_mask: np.ndarray | None = None) -> np.ndarray:
    """Frames t - (span-1)//2 ... t + span//2 around each t, clipped and restricted to valid frames."""
    index = np.arange(length)
    offset = index[None, :] - index[:, None]
    allowed = (offset >= -((span - 1) // 2)) & (offset <= span // 2)
    if pad_mask is None:
        return allowed
    valid = _validity(pad_mask, length)
    return allowed & valid[..., None, :]


def _attend(
    q_proj: Linear,
    k_proj: Linear,
    v_proj: Linear,
    out_proj: Linear,
    heads: int,
    query: Tensor,
    memory: Tensor,
    allowed: np.ndarray,
) -> tuple[Tensor, Tensor]:
    batch, q_len, d_model = query.shape
    k_len = memory.shape[1]
    head_dim = d_model // heads

    def split(x: Tensor, length: int) -> Tensor:
        return x.reshape(batch, length, heads, head_dim).transpose(0, 2, 1, 3)

    q = split(q_proj(query), q_len)
    k = split(k_proj(memory), k_len)
    v = split(v_proj(memory), k_len)
    logits = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(head_dim))

    allowed = np.broadcast_to(np.asarray(allowed, dtype=bool), (batch, q_len, k_len))
    if not allowed.any(axis=-1).all():
        raise AssertionError("attention mask has a fully masked query row")
    bias = np.where(allowed, 0.0, MASK_BIAS)[:, None, :, :]
    bias = np.broadcast_to(bias, (batch, heads, q_len, k_len))
    weights = (logits + constant(bias, like=logits)).softmax()
    out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, q_len, d_model)
    return out_proj(out), weights


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``heads`` heads over (B, T, d) inputs."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, dtype: str = "float64"):
        if d_model % heads:
            raise ConfigError(f"d_model {d_model} is not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(d_model, d_model, rng, dtype=dtype)
        self.k_proj = Linear(d_model, d_model, rng, dtype=dtype)
        self.v_proj = Linear(d_model, d_model, rng, dtype=dtype)
        self.out_proj = Linear(d_model, d_model, rng, dtype=dtype)

    def forward(self, query: Tensor, memory: Tensor, allowed: np.ndarray) -> Tensor:
        return self.attend(query, memory, allowed)[0]

    def attend(self, query: Tensor, memory: Tensor, allowed: np.ndarray) -> tuple[Tensor, Tensor]:
        """Return the attention output and the (B, heads, Tq, Tk) weights."""
        if query.ndim != 3 or memory.ndim != 3 or query.shape[-1] != memory.shape[-1]:
            raise ShapeError("attention", query.shape, memory.shape, "expected (B, T, d) inputs")
        return _attend(self.q_proj, self.k_proj, self.v_proj, self.out_proj, self.heads, query, memory, allowed)


def aggregate_queries(
    x: Tensor,
    mode: str,
    span: int,
    pad_mask: np.ndarray | None = None,
    aggregator: MultiHeadAttention | None = None,
) -> Tensor:
    """Build attention queries from (B, T, d) frames.

    ``none`` returns ``x`` itself; ``mean`` averages each frame's span-sized
    neighbourhood over valid frames; ``attention`` runs ``aggregator`` (a
    single-head attention) restricted to the same neighbourhood.
    """
    if mode == "none":
        return x
    if span < 1:
        raise ConfigError(f"query span must be >= 1, got {span}")
    batch, length = x.shape[0], x.shape[1]
    valid = np.ones((batch, length), dtype=bool) if pad_mask is None else np.broadcast_to(_validity(pad_mask, length), (batch, length))
    near = with_self_allowance(neighbourhood_mask(length, span, valid))

    if mode == "mean":
        pooling = near / near.sum(axis=-1, keepdims=True)
        return constant(pooling, like=x) @ x
    if mode == "attention":
        if aggregator is None:
            raise ConfigError("query_mode 'attention' needs an aggregator module")
        return aggregator(x, x, near)
    raise ConfigError(f"unknown query mode {mode!r}")


class GlossAttention(Module):
    """Decoder self-attention over frames with a local window and optional global fusion.

    Local and global outputs share the same projections; in
    ``weighted_local_global`` mode they are blended as
    ``lam * local + (1 - lam) * global`` with ``lam = sigmoid(fusion_logit)``.
    """

    def __init__(self, cfg: GlossAttentionConfig, d_model: int, heads: int, rng: np.random.Generator, dtype: str = "float64"):
        self.cfg = cfg
        self.attention = MultiHeadAttention(d_model, heads, rng, dtype)
        self.query_aggregator = MultiHeadAttention(d_model, 1, rng, dtype) if cfg.query_mode == "attention" else None
        # sigmoid(0) = 0.5
        self.fusion_logit = Parameter(np.zeros((), dtype=dtype)) if cfg.fusion == "weighted_local_global" else None

    @property
    def fusion_weight(self) -> float | None:
        return None if self.fusion_logit is None else float(1.0 / (1.0 + np.exp(-self.fusion_logit.data)))

    def forward(self, x: Tensor, pad_mask: np.ndarray | None = None) -> Tensor:
        if x.ndim != 3:
            raise ShapeError("gloss_attention", x.shape, None, "expected (B, T, d)")
        batch, length = x.shape[0], x.shape[1]
        valid = np.ones((batch, length), dtype=bool) if pad_mask is None else np.broadcast_to(_validity(pad_mask, length), (batch, length))
        queries = aggregate_queries(x, self.cfg.query_mode, self.cfg.query_span, valid, self.query_aggregator)

        if self.cfg.fusion == "global_only":
            return self.attention(queries, x, with_self_allowance(build_global_mask(length, valid)))
        local = self.attention(queries, x, with_self_allowance(build_local_mask(length, self.cfg.window, valid)))
        if self.cfg.fusion == "local_only":
            return local
        glob = self.attention(queries, x, with_self_allowance(build_global_mask(length, valid)))
        lam = self.fusion_logit.sigmoid()
        return local * lam + glob * (1.0 - lam)
