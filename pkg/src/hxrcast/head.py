"""Prediction head: patch-conv input projection and the post-reservoir MLP.

Forward/backward passes are written out analytically in float64 numpy; no
autograd. The projection (non-overlapping patch convolution, batch norm,
GELU) turns a raw series or pre-fused tokens into service-width vectors; the
post head maps mean-pooled reservoir states to the full-length prediction
through one GELU hidden layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError, NumericError, StateError
from .sdc import gelu, gelu_grad

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the experimental recipe."""

    epochs: int = 100
    batch_size: int = 5
    lr: float = 0.0004
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.lr < 0 or self.eps <= 0:
            raise ConfigurationError("invalid optimizer constants")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("betas must lie in [0, 1)")


@dataclass
class HeadParams:
    """All head tensors. Conv kernel spans kernel_steps rows of in_width."""

    conv_w: np.ndarray   # (kernel_steps * in_width, hidden_dim)
    conv_b: np.ndarray   # (hidden_dim,)
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray  # running statistics (eval mode)
    bn_var: np.ndarray
    post_w1: np.ndarray  # (hidden_dim, head_dim)
    post_b1: np.ndarray
    post_w2: np.ndarray  # (head_dim, pred_len)
    post_b2: np.ndarray
    kernel_steps: int
    in_width: int

    @property
    def hidden_dim(self) -> int:
        return self.conv_w.shape[1]

    @property
    def head_dim(self) -> int:
        return self.post_w1.shape[1]

    @property
    def pred_len(self) -> int:
        return self.post_w2.shape[1]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {
            "conv_w": self.conv_w, "conv_b": self.conv_b,
            "bn_gamma": self.bn_gamma, "bn_beta": self.bn_beta,
            "bn_mean": self.bn_mean, "bn_var": self.bn_var,
            "post_w1": self.post_w1, "post_b1": self.post_b1,
            "post_w2": self.post_w2, "post_b2": self.post_b2,
        }

    def trainable(self) -> dict[str, np.ndarray]:
        """Parameters the optimizer may update (running stats excluded)."""
        d = self.named_tensors()
        d.pop("bn_mean")
        d.pop("bn_var")
        return d

    def copy(self) -> "HeadParams":
        return HeadParams(
            **{k: v.copy() for k, v in self.named_tensors().items()},
            kernel_steps=self.kernel_steps, in_width=self.in_width,
        )


def init_head_params(in_width: int, hidden_dim: int, pred_len: int,
                     head_dim: int = 128, kernel_steps: int = 32,
                     seed: int = 0) -> HeadParams:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD]))
    fan = kernel_steps * in_width
    return HeadParams(
        conv_w=rng.normal(0.0, 1.0 / np.sqrt(fan), (fan, hidden_dim)),
        conv_b=np.zeros(hidden_dim),
        bn_gamma=np.ones(hidden_dim),
        bn_beta=np.zeros(hidden_dim),
        bn_mean=np.zeros(hidden_dim),
        bn_var=np.ones(hidden_dim),
        post_w1=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (hidden_dim, head_dim)),
        post_b1=np.zeros(head_dim),
        post_w2=rng.normal(0.0, 1.0 / np.sqrt(head_dim), (head_dim, pred_len)),
        post_b2=np.zeros(pred_len),
        kernel_steps=kernel_steps,
        in_width=in_width,
    )


# --- input projection: patch conv + batch norm + GELU -------------------

def _patchify(x: np.ndarray, kernel_steps: int) -> tuple[np.ndarray, int]:
    """Group rows into non-overlapping kernel windows, edge-padding on the left."""
    n = -(-len(x) // kernel_steps)
    pad = n * kernel_steps - len(x)
    if pad:
        x = np.concatenate([np.repeat(x[:1], pad, axis=0), x])
    return x.reshape(n, kernel_steps * x.shape[1]), pad


def project_input(x: np.ndarray, params: HeadParams, train_mode: bool = False,
                  cache: dict | None = None,
                  update_running: bool | None = None) -> np.ndarray:
    """Conv over non-overlapping patches, then batch norm and GELU.

    Train mode normalizes with the current batch statistics (and by default
    updates the running ones); eval mode applies the stored running
    statistics, making the map a fixed per-token affine.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != params.in_width:
        raise ConfigurationError(
            f"input width {x.shape[-1] if x.ndim == 2 else x.shape} does not match "
            f"configured in_width {params.in_width}"
        )
    flat, pad = _patchify(x, params.kernel_steps)
    u = flat @ params.conv_w + params.conv_b
    if train_mode:
        mean = u.mean(axis=0)
        var = u.var(axis=0)
        if update_running is None or update_running:
            params.bn_mean[...] = (1 - BN_MOMENTUM) * params.bn_mean + BN_MOMENTUM * mean
            params.bn_var[...] = (1 - BN_MOMENTUM) * params.bn_var + BN_MOMENTUM * var
    else:
        mean = params.bn_mean
        var = params.bn_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    x_hat = (u - mean) * inv_std
    pre_act = params.bn_gamma * x_hat + params.bn_beta
    out = gelu(pre_act)
    if cache is not None:
        cache.update(flat=flat, pad=pad, n_rows=len(x), u=u, mean=mean,
                     inv_std=inv_std, x_hat=x_hat, pre_act=pre_act,
                     train_mode=train_mode)
    return out


def project_backward(d_out: np.ndarray, cache: dict,
                     params: HeadParams) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the projection w.r.t. parameters and the raw input."""
    if not cache:
        raise StateError("project_backward requires the forward cache")
    d_pre = d_out * gelu_grad(cache["pre_act"])
    d_gamma = (d_pre * cache["x_hat"]).sum(axis=0)
    d_beta = d_pre.sum(axis=0)
    d_xhat = d_pre * params.bn_gamma
    inv_std = cache["inv_std"]
    u = cache["u"]
    if cache["train_mode"]:
        n = len(u)
        centered = u - cache["mean"]
        d_var = (d_xhat * centered).sum(axis=0) * (-0.5) * inv_std ** 3
        d_mean = (-d_xhat * inv_std).sum(axis=0) + d_var * (-2.0 / n) * centered.sum(axis=0)
        d_u = d_xhat * inv_std + d_var * 2.0 * centered / n + d_mean / n
    else:
        d_u = d_xhat * inv_std
    d_conv_w = cache["flat"].T @ d_u
    d_conv_b = d_u.sum(axis=0)
    d_flat = d_u @ params.conv_w.T
    d_padded = d_flat.reshape(-1, params.in_width)
    pad = cache["pad"]
    d_x = d_padded[pad:].copy()
    if pad:
        d_x[0] += d_padded[:pad].sum(axis=0)  # pad rows were copies of row 0
    grads = {"conv_w": d_conv_w, "conv_b": d_conv_b,
             "bn_gamma": d_gamma, "bn_beta": d_beta}
    return grads, d_x


# --- post-reservoir head: meanpool -> GELU MLP ---------------------------

def predict_post(states: np.ndarray, params: HeadParams,
                 cache: dict | None = None) -> np.ndarray:
    """P = W2 @ GELU(W1 @ meanpool(states) + b1) + b2."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != params.hidden_dim:
        raise ConfigurationError(
            f"states shape {states.shape} incompatible with hidden_dim {params.hidden_dim}"
        )
    pooled = states.mean(axis=0)
    z1 = pooled @ params.post_w1 + params.post_b1
    a1 = gelu(z1)
    pred = a1 @ params.post_w2 + params.post_b2
    if cache is not None:
        cache.update(k=len(states), pooled=pooled, z1=z1, a1=a1)
    return pred


def predict_post_backward(d_pred: np.ndarray, cache: dict,
                          params: HeadParams) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients w.r.t. post-head parameters and each input state vector."""
    if not cache:
        raise StateError("predict_post_backward requires the forward cache")
    a1 = cache["a1"]
    d_w2 = np.outer(a1, d_pred)
    d_b2 = d_pred.copy()
    d_a1 = params.post_w2 @ d_pred
    d_z1 = d_a1 * gelu_grad(cache["z1"])
    d_w1 = np.outer(cache["pooled"], d_z1)
    d_b1 = d_z1.copy()
    d_pooled = params.post_w1 @ d_z1
    k = cache["k"]
    d_states = np.tile(d_pooled / k, (k, 1))
    grads = {"post_w1": d_w1, "post_b1": d_b1, "post_w2": d_w2, "post_b2": d_b2}
    return grads, d_states


def prediction_input_gradients(states: np.ndarray, params: HeadParams) -> np.ndarray:
    """dP_i/d(state_j) for every prediction step i: array (pred_len, k, hidden).

    Through the mean pool each state receives the same gradient, computed in
    closed form rather than pred_len separate backward passes.
    """
    cache: dict = {}
    predict_post(states, params, cache=cache)
    g = params.post_w2.T * gelu_grad(cache["z1"])      # (pred_len, head_dim)
    per_step = g @ params.post_w1.T                    # (pred_len, hidden_dim)
    k = len(states)
    return np.repeat(per_step[:, None, :] / k, k, axis=1)


def abs_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Subgradient of sum |pred - target|; defined as 0 where they agree."""
    return np.sign(pred - np.asarray(target, dtype=np.float64))


# --- full-head composition (projection -> states -> post head) ----------

def head_forward(x: np.ndarray, params: HeadParams, train_mode: bool = False,
                 cache: dict | None = None) -> np.ndarray:
    """Projection output fed straight into the post head (no reservoir)."""
    proj_cache: dict = {}
    tokens = project_input(x, params, train_mode=train_mode, cache=proj_cache,
                           update_running=False)
    post_cache: dict = {}
    pred = predict_post(tokens, params, cache=post_cache)
    if cache is not None:
        cache.update(proj=proj_cache, post=post_cache)
    return pred


def head_backward(d_pred: np.ndarray, cache: dict,
                  params: HeadParams) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the full composition for every trainable tensor."""
    post_grads, d_tokens = predict_post_backward(d_pred, cache["post"], params)
    proj_grads, d_x = project_backward(d_tokens, cache["proj"], params)
    return {**proj_grads, **post_grads}, d_x


# --- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, t: int, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place. t counts from 1."""
    if t < 1:
        raise ArgumentError("Adam step index starts at 1")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m[...] = config.beta1 * m + (1 - config.beta1) * g
        v[...] = config.beta2 * v + (1 - config.beta2) * (g * g)
        m_hat = m / (1 - config.beta1 ** t)
        v_hat = v / (1 - config.beta2 ** t)
        params[name] -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
