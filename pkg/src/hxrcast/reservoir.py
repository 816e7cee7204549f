"""Reservoir backends: leaky echo-state network, polynomial delay reservoir,
and the remote hidden-state service.

Classical backends map the drive series through a fixed dynamic system and
fit a closed-form ridge readout; the service backend forwards projected
tokens and lets the prediction head do the reading out.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .errors import (
    ArgumentError,
    ConfigurationError,
    NumericError,
    RankError,
    StateError,
)
from .service.protocol import ReservoirOutput


@dataclass(frozen=True)
class EsnConfig:
    n_units: int = 200
    spectral_radius: float = 0.9
    input_scale: float = 1.0
    leak: float = 1.0
    density: float = 0.2
    seed: int = 0
    ridge: float = 1e-6
    warmup: int = 20  # steps excluded from readout fitting

    def __post_init__(self):
        if self.n_units <= 0:
            raise ConfigurationError("n_units must be positive")
        if not (0 < self.spectral_radius < 1):
            raise ConfigurationError("spectral_radius must lie in (0, 1)")
        if not (0 < self.leak <= 1):
            raise ConfigurationError("leak must lie in (0, 1]")
        if not (0 < self.density <= 1):
            raise ConfigurationError("density must lie in (0, 1]")
        if self.ridge < 0 or self.warmup < 0:
            raise ConfigurationError("ridge and warmup must be non-negative")


@dataclass(frozen=True)
class NgrcConfig:
    delays: int = 4
    degree: int = 2
    ridge: float = 1e-6

    def __post_init__(self):
        if self.delays <= 0:
            raise ConfigurationError("delays must be positive")
        if self.degree not in (1, 2):
            raise ConfigurationError("degree must be 1 or 2")
        if self.ridge < 0:
            raise ConfigurationError("ridge must be non-negative")


@dataclass(frozen=True)
class EsnWeights:
    """Fixed reservoir tensors; recurrent matrix rescaled to the target radius."""

    w: np.ndarray
    w_in: np.ndarray
    bias: np.ndarray
    leak: float


def build_esn(config: EsnConfig, n_inputs: int = 1) -> EsnWeights:
    """Sparse uniform +-1 recurrent weights rescaled to the spectral radius."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE2]))
    n = config.n_units
    w = rng.uniform(-1.0, 1.0, (n, n))
    if config.density < 1:
        w *= rng.random((n, n)) < config.density
    radius = max(abs(np.linalg.eigvals(w)))
    if radius == 0:
        raise ConfigurationError("degenerate recurrent matrix (zero spectral radius)")
    w *= config.spectral_radius / radius
    w_in = rng.uniform(-config.input_scale, config.input_scale, (n, n_inputs))
    bias = rng.uniform(-config.input_scale, config.input_scale, n)
    return EsnWeights(w=w, w_in=w_in, bias=bias, leak=config.leak)


def esn_step(state: np.ndarray, input_vector: np.ndarray,
             weights: EsnWeights) -> np.ndarray:
    """s' = (1 - leak) * s + leak * tanh(W s + W_in u + b)."""
    u = np.atleast_1d(np.asarray(input_vector, dtype=np.float64))
    if not np.isfinite(u).all():
        raise NumericError("non-finite reservoir input")
    pre = weights.w @ state + weights.w_in @ u + weights.bias
    return (1 - weights.leak) * state + weights.leak * np.tanh(pre)


def esn_rollout(series: np.ndarray, weights: EsnWeights,
                initial: np.ndarray | None = None) -> np.ndarray:
    """Teacher-forced state trajectory over a drive series; (T, n_units)."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    n = weights.w.shape[0]
    state = np.zeros(n) if initial is None else np.asarray(initial, dtype=np.float64)
    states = np.empty((len(series), n))
    for t, u in enumerate(series):
        state = esn_step(state, u, weights)
        states[t] = state
    return states


def ngrc_features(window: np.ndarray, degree: int = 2) -> np.ndarray:
    """[1, taps..., degree-2 monomials...] over a full delay window.

    The window holds the last d input vectors oldest-first; taps flatten in
    that order and monomials follow combinations_with_replacement order.
    """
    w = np.asarray(window, dtype=np.float64)
    taps = w.ravel()
    if taps.size == 0:
        raise ArgumentError("empty delay window")
    parts = [np.ones(1), taps]
    if degree == 2:
        pairs = list(combinations_with_replacement(range(taps.size), 2))
        parts.append(np.array([taps[i] * taps[j] for i, j in pairs]))
    elif degree != 1:
        raise ArgumentError("degree must be 1 or 2")
    return np.concatenate(parts)


def ngrc_feature_length(delays: int, channels: int, degree: int) -> int:
    n = delays * channels
    return 1 + n + (comb(n + 1, 2) if degree == 2 else 0)


def ngrc_feature_matrix(series: np.ndarray, config: NgrcConfig) -> np.ndarray:
    """Features for every step; the series is edge-padded so early windows fill."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if len(arr) == 0:
        raise ArgumentError("empty series")
    padded = np.concatenate([np.repeat(arr[:1], config.delays - 1, axis=0), arr])
    rows = [ngrc_features(padded[t: t + config.delays], config.degree)
            for t in range(len(arr))]
    return np.stack(rows)


def ridge_fit(states: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    """Solve (S^T S + lam I) W = S^T Y stably; lam=0 requires full column rank."""
    s = np.asarray(states, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if len(s) != len(y):
        raise ArgumentError(f"row mismatch: {len(s)} states vs {len(y)} targets")
    if lam < 0:
        raise ArgumentError("ridge parameter must be non-negative")
    if lam == 0:
        w, _, rank, _ = np.linalg.lstsq(s, y, rcond=None)
        if rank < s.shape[1]:
            raise RankError(
                f"states matrix rank {rank} < {s.shape[1]} columns with lambda=0"
            )
        # One refinement pass keeps ill-conditioned square solves accurate.
        residual = y - s @ w
        w = w + np.linalg.lstsq(s, residual, rcond=None)[0]
        return w
    gram = s.T @ s + lam * np.eye(s.shape[1])
    return np.linalg.solve(gram, s.T @ y)


def _with_bias(states: np.ndarray) -> np.ndarray:
    return np.concatenate([states, np.ones((len(states), 1))], axis=1)


@dataclass
class ClassicalModel:
    """Trained classical reservoir: fixed dynamics plus linear readout."""

    kind: str                      # "esn" | "ngrc"
    readout: np.ndarray | None = None
    esn_weights: EsnWeights | None = None
    esn_config: EsnConfig | None = None
    ngrc_config: NgrcConfig | None = None

    def _features(self, laser: np.ndarray) -> np.ndarray:
        if self.kind == "esn":
            return _with_bias(esn_rollout(laser, self.esn_weights))
        return ngrc_feature_matrix(laser, self.ngrc_config)

    def fit(self, lasers: list[np.ndarray], targets: list[np.ndarray],
            lam: float, warmup: int = 0) -> "ClassicalModel":
        feats, ys = [], []
        for laser, y in zip(lasers, targets):
            f = self._features(laser)
            feats.append(f[warmup:])
            ys.append(np.asarray(y, dtype=np.float64)[warmup:])
        self.readout = ridge_fit(np.concatenate(feats), np.concatenate(ys), lam)
        return self

    def forecast(self, laser: np.ndarray) -> np.ndarray:
        if self.readout is None:
            raise StateError(f"{self.kind} backend is untrained")
        return (self._features(laser) @ self.readout).ravel()


def train_esn(config: EsnConfig, lasers, targets) -> ClassicalModel:
    weights = build_esn(config, n_inputs=1)
    model = ClassicalModel(kind="esn", esn_weights=weights, esn_config=config)
    return model.fit(lasers, targets, config.ridge, warmup=config.warmup)


def train_ngrc(config: NgrcConfig, lasers, targets) -> ClassicalModel:
    model = ClassicalModel(kind="ngrc", ngrc_config=config)
    return model.fit(lasers, targets, config.ridge)


def llm_reservoir_run(prompt_text: str, input_vectors: np.ndarray, client,
                      last_k: int) -> ReservoirOutput:
    """Forward pre-projected tokens through the remote reservoir.

    Pure pass-through: the server owns the dynamics; position accounting
    (prompt tokens followed by input vectors, trailing k returned) happens
    there.
    """
    return client.run_reservoir(prompt_text, input_vectors, last_k)
