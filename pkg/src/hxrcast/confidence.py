"""Confidence scanner: entropy of the trailing token states, reweighted by
prediction-head saliency.

Per prediction step i, the score is the negative convex combination of the
last-k token entropies, weighted by how strongly each token's state moves
that step's output: C_i = -sum_j H_j * S[j, i]. Scores live in
[-max(H), -min(H)]; values nearer zero mean higher confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .head import HeadParams, predict_post, prediction_input_gradients
from .service.protocol import ReservoirOutput

DEFAULT_LAST_K = 50


@dataclass(frozen=True)
class TokenEntropies:
    """Per-token entropies in nats for the trailing k positions."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise ArgumentError("entropies must be a non-empty vector")
        if (arr < 0).any() or not np.isfinite(arr).all():
            raise ArgumentError("entropies must be finite and non-negative")


@dataclass(frozen=True)
class SaliencyMatrix:
    """k x L column-stochastic weights: column i reweights tokens for step i."""

    weights: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", arr)
        if arr.ndim != 2:
            raise ArgumentError("saliency must be a k x L matrix")
        if (arr < 0).any():
            raise ArgumentError("saliency entries must be non-negative")
        col_sums = arr.sum(axis=0)
        if np.abs(col_sums - 1.0).max() > 1e-9:
            raise ArgumentError("saliency columns must sum to 1")


@dataclass(frozen=True)
class ConfidenceSeries:
    """One score per prediction step; all scores are <= 0."""

    scores: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", arr)
        if arr.ndim != 1:
            raise ArgumentError("confidence must be a vector")


def token_entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*ln(0) = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    if (p < 0).any():
        raise ArgumentError("probabilities must be non-negative")
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise ArgumentError(f"probabilities sum to {total}, expected 1")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def saliency(grad_blocks: np.ndarray) -> SaliencyMatrix:
    """Softmax (over tokens) of the L2 norm of each token's gradient block.

    grad_blocks has shape (L, k, d): for prediction step i, row j is the
    gradient of step i's output w.r.t. token j's state vector. A step whose
    gradients vanish entirely gets a uniform column.
    """
    g = np.asarray(grad_blocks, dtype=np.float64)
    if g.ndim != 3 or g.shape[0] == 0 or g.shape[1] == 0:
        raise ArgumentError("expected non-empty (L, k, d) gradient blocks")
    norms = np.linalg.norm(g, axis=2)            # (L, k)
    weights = np.empty_like(norms)
    for i, row in enumerate(norms):
        if row.max() == 0.0:
            weights[i] = 1.0 / len(row)          # degenerate: uniform
            continue
        z = row - row.max()
        e = np.exp(z)
        weights[i] = e / e.sum()
    return SaliencyMatrix(weights=weights.T)     # -> (k, L)


def confidence(entropies: TokenEntropies, sal: SaliencyMatrix) -> ConfidenceSeries:
    """C_i = -sum_j H_j * S[j, i]."""
    h = entropies.values
    s = sal.weights
    if len(h) != s.shape[0]:
        raise ArgumentError(
            f"entropy count {len(h)} does not match saliency rows {s.shape[0]}"
        )
    return ConfidenceSeries(scores=-(h @ s))


def scan(output: ReservoirOutput, params: HeadParams,
         last_k: int = DEFAULT_LAST_K) -> tuple[np.ndarray, ConfidenceSeries]:
    """Forward the head over the trailing states and score each prediction step.

    Returns the prediction alongside its per-step confidence so the two can
    be serialized together.
    """
    if len(output.states) == 0:
        raise ArgumentError("reservoir output has no states")
    if last_k < 1:
        raise ArgumentError("last_k must be positive")
    k = min(last_k, len(output.states))
    states = output.states[-k:]
    entropies = TokenEntropies(values=output.entropies[-k:])
    pred = predict_post(states, params)
    grads = prediction_input_gradients(states, params)
    series = confidence(entropies, saliency(grads))
    return pred, series
