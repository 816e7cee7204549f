"""Signal-digesting channels.

Two encoders describe the drive waveform before it reaches the reservoir: a
temporal channel patches the series and runs it through a small frozen
transformer (only the final linear is trainable), and a spatial channel
cross-attends the temporal tokens against embeddings of pulse-landscape
vocabulary ("picket", "peak", ...). Their per-token concatenation is the
reservoir's augmented input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ArgumentError, ConfigurationError

DEFAULT_CONTEXT_TERMS = ("pulse", "picket", "ramp", "peak", "compression", "trailing")


@dataclass(frozen=True)
class PatchConfig:
    """Windowing and token-width settings for the temporal channel."""

    window_len: int = 400
    horizon: int = 400
    patch_size: int = 32
    stride: int = 32
    d_tmp: int = 32
    positional: bool = True

    def __post_init__(self):
        for name in ("window_len", "horizon", "patch_size", "stride", "d_tmp"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.stride > self.patch_size:
            raise ConfigurationError("stride > patch_size would leave gaps")


@dataclass(frozen=True)
class TemporalTokens:
    tokens: np.ndarray     # (n_patches, d_tmp)
    positions: np.ndarray  # patch start indices in original coordinates


@dataclass(frozen=True)
class SpatialTokens:
    tokens: np.ndarray     # (n_patches, d_tmp)


@dataclass(frozen=True)
class AugmentedInput:
    """Per-token concatenation [temporal; spatial], width exactly 2 * d_tmp."""

    tokens: np.ndarray

    def __post_init__(self):
        if self.tokens.ndim != 2 or self.tokens.shape[1] % 2 != 0:
            raise ArgumentError("augmented tokens must be (n, 2*d_tmp)")


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * phi


def window_patch(series: np.ndarray, cfg: PatchConfig) -> tuple[np.ndarray, np.ndarray]:
    """Split a series into ceil(T/stride) patches of patch_size steps.

    The series is left-padded with its edge value so every patch is full;
    returned positions are patch starts in original coordinates (the first
    may be negative by the pad amount).
    """
    arr = np.asarray(series, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ArgumentError("cannot patch an empty series")
    n = -(-arr.size // cfg.stride)  # ceil
    needed = max(n * cfg.stride, (n - 1) * cfg.stride + cfg.patch_size)
    pad = needed - arr.size
    padded = np.concatenate([np.full(pad, arr[0]), arr])
    starts = np.arange(n) * cfg.stride
    patches = np.stack([padded[s: s + cfg.patch_size] for s in starts])
    return patches, starts - pad


def sinusoid_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(dim)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * (i // 2) / dim)
    enc = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return enc


def _layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _self_attention(x: np.ndarray, wq, wk, wv, wo) -> np.ndarray:
    d = x.shape[1]
    q, k, v = x @ wq, x @ wk, x @ wv
    logits = q @ k.T / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return (weights @ v) @ wo


class TemporalEncoder:
    """Two frozen pre-norm transformer blocks over linear patch embeddings.

    All weights are a deterministic function of the seed; only `w_last` /
    `b_last` (the final linear) are trainable by contract. Biases start at
    zero.
    """

    N_BLOCKS = 2

    def __init__(self, cfg: PatchConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E]))
        d = cfg.d_tmp

        def mat(rows, cols, scale=None):
            scale = scale if scale is not None else 1.0 / np.sqrt(rows)
            return rng.normal(0.0, scale, (rows, cols))

        self.w_embed = mat(cfg.patch_size, d)
        self.b_embed = np.zeros(d)
        self.blocks = []
        for _ in range(self.N_BLOCKS):
            self.blocks.append({
                "wq": mat(d, d), "wk": mat(d, d), "wv": mat(d, d), "wo": mat(d, d),
                "w1": mat(d, 4 * d), "b1": np.zeros(4 * d),
                "w2": mat(4 * d, d), "b2": np.zeros(d),
            })
        self.w_last = mat(d, d)
        self.b_last = np.zeros(d)

    def encode(self, patches: np.ndarray, positions: np.ndarray) -> TemporalTokens:
        if patches.ndim != 2 or patches.shape[1] != self.cfg.patch_size:
            raise ConfigurationError(
                f"patches have width {patches.shape[-1]}, encoder expects {self.cfg.patch_size}"
            )
        x = patches @ self.w_embed + self.b_embed
        if self.cfg.positional:
            x = x + sinusoid_positions(len(x), self.cfg.d_tmp)
        for blk in self.blocks:
            x = x + _self_attention(_layer_norm(x), blk["wq"], blk["wk"], blk["wv"], blk["wo"])
            h = gelu(_layer_norm(x) @ blk["w1"] + blk["b1"])
            x = x + h @ blk["w2"] + blk["b2"]
        tokens = x @ self.w_last + self.b_last
        return TemporalTokens(tokens=tokens, positions=np.asarray(positions))


def temporal_encode(series: np.ndarray, encoder: TemporalEncoder) -> TemporalTokens:
    """Patch a raw series and encode it in one call."""
    patches, positions = window_patch(series, encoder.cfg)
    return encoder.encode(patches, positions)


def cross_attend(queries: np.ndarray, keys: np.ndarray,
                 values: np.ndarray) -> np.ndarray:
    """Single-head scaled dot-product attention; rows of weights sum to 1."""
    if len(keys) == 0:
        raise ArgumentError("attention requires at least one key")
    if keys.shape != values.shape or queries.shape[1] != keys.shape[1]:
        raise ArgumentError("query/key/value widths must agree")
    d = queries.shape[1]
    logits = queries @ keys.T / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ values


def cross_attend_backward(queries, keys, values, d_out):
    """Analytic gradients of cross_attend w.r.t. queries, keys, values."""
    d = queries.shape[1]
    logits = queries @ keys.T / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    d_weights = d_out @ values.T
    d_values = weights.T @ d_out
    # softmax Jacobian per row
    inner = (d_weights * weights).sum(axis=1, keepdims=True)
    d_logits = weights * (d_weights - inner)
    d_queries = d_logits @ keys / np.sqrt(d)
    d_keys = d_logits.T @ queries / np.sqrt(d)
    return d_queries, d_keys, d_values


class SpatialEncoder:
    """Projects context-term embeddings to key/value space and attends.

    The key and value maps from the (service-provided) term embeddings are
    trainable linears; queries are the temporal tokens unchanged.
    """

    def __init__(self, term_dim: int, d_tmp: int, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
        scale = 1.0 / np.sqrt(term_dim)
        self.w_key = rng.normal(0.0, scale, (term_dim, d_tmp))
        self.w_value = rng.normal(0.0, scale, (term_dim, d_tmp))

    def encode(self, temporal: TemporalTokens, term_vectors: np.ndarray) -> SpatialTokens:
        return SpatialTokens(tokens=spatial_encode(
            temporal, term_vectors @ self.w_key, term_vectors @ self.w_value).tokens)


def spatial_encode(temporal: TemporalTokens, keys: np.ndarray,
                   values: np.ndarray | None = None) -> SpatialTokens:
    """Cross-attention with keys/values from context terms, queries temporal."""
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or len(keys) == 0:
        raise ArgumentError("need at least one projected context term")
    values = keys if values is None else np.asarray(values, dtype=np.float64)
    return SpatialTokens(tokens=cross_attend(temporal.tokens, keys, values))


def fuse_channels(temporal: TemporalTokens, spatial: SpatialTokens) -> AugmentedInput:
    """Per-token concatenation, temporal half first."""
    if len(temporal.tokens) != len(spatial.tokens):
        raise ArgumentError(
            f"token count mismatch: {len(temporal.tokens)} temporal vs "
            f"{len(spatial.tokens)} spatial"
        )
    return AugmentedInput(tokens=np.concatenate([temporal.tokens, spatial.tokens], axis=1))
