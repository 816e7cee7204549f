"""Forecast error metrics: absolute-sum loss, floored cumulative error, top-k MAE.

Summation order is part of the contract so results are reproducible to the
bit: per-step sums run left to right in step order, set-level reductions run
in shot order, and the top-k pool is sorted descending before accumulating.
np.cumsum performs sequential IEEE adds, so an explicit Python loop over the
same values produces the identical float64 result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from . import jsontext

DEFAULT_FLOOR = 0.03


@dataclass(frozen=True)
class MetricReport:
    """Set-level metrics: mean per-shot CAE plus pooled top-k MAEs."""

    cae: float
    top1_mae: float
    top5_mae: float
    n_shots: int
    pooled_steps: int

    def to_dict(self) -> dict:
        return {
            "cae": self.cae,
            "top1_mae": self.top1_mae,
            "top5_mae": self.top5_mae,
            "n_shots": self.n_shots,
            "pooled_steps": self.pooled_steps,
        }

    def dumps(self) -> str:
        return jsontext.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["cae"], d["top1_mae"], d["top5_mae"], d["n_shots"], d["pooled_steps"])


def _as_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 1:
        raise ArgumentError(f"length mismatch: pred {p.shape} vs gt {g.shape}")
    if not (np.isfinite(p).all() and np.isfinite(g).all()):
        raise ArgumentError("non-finite value in metric input")
    return p, g


def _seq_sum(values: np.ndarray) -> float:
    """Left-to-right float64 accumulation."""
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def sum_abs_loss(pred, gt) -> float:
    """Sum of per-step absolute differences."""
    p, g = _as_pair(pred, gt)
    return _seq_sum(np.abs(p - g))


def cae(pred, gt, floor: float = DEFAULT_FLOOR) -> float:
    """Cumulative absolute error with sub-floor values nullified.

    Values below the floor are zeroed in BOTH sequences before summing, so
    the metric ignores the sub-noise band symmetrically and cae(x, x) == 0.
    """
    if floor < 0:
        raise ArgumentError(f"floor must be non-negative, got {floor}")
    p, g = _as_pair(pred, gt)
    p = np.where(p < floor, 0.0, p)
    g = np.where(g < floor, 0.0, g)
    return _seq_sum(np.abs(p - g))


def _pool_abs_errors(preds, gts) -> np.ndarray:
    if len(preds) != len(gts):
        raise ArgumentError(f"shot count mismatch: {len(preds)} vs {len(gts)}")
    pools = []
    for pred, gt in zip(preds, gts):
        p, g = _as_pair(pred, gt)
        pools.append(np.abs(p - g))
    if not pools:
        raise ArgumentError("empty error pool")
    return np.concatenate(pools)


def top_fraction_mae(preds, gts, frac: float) -> float:
    """Mean of the largest frac-quantile of per-step absolute errors.

    Errors pool across all shots; m = max(1, floor(frac * pool size)); the
    pool is stable-sorted descending and the first m values averaged.
    """
    if not (0.0 < frac <= 1.0):
        raise ArgumentError(f"frac must be in (0, 1], got {frac}")
    pool = _pool_abs_errors(preds, gts)
    m = max(1, int(np.floor(frac * pool.size)))
    ordered = np.sort(pool, kind="stable")[::-1]
    return _seq_sum(ordered[:m]) / m


def evaluate_set(preds, gts, floor: float = DEFAULT_FLOOR) -> MetricReport:
    """Mean per-shot CAE plus pooled top-1%/top-5% MAE."""
    if len(preds) != len(gts):
        raise ArgumentError(f"shot count mismatch: {len(preds)} vs {len(gts)}")
    if len(preds) == 0:
        raise ArgumentError("no shots to evaluate")
    per_shot = np.array([cae(p, g, floor) for p, g in zip(preds, gts)])
    pooled = sum(len(np.asarray(p)) for p in preds)
    return MetricReport(
        cae=_seq_sum(per_shot) / len(preds),
        top1_mae=top_fraction_mae(preds, gts, 0.01),
        top5_mae=top_fraction_mae(preds, gts, 0.05),
        n_shots=len(preds),
        pooled_steps=pooled,
    )
