"""Shot data model, synthetic pulse generator, splits, and normalization.

A shot pairs a 400-step laser-intensity series with the hard-X-ray emission
series it produced. Real archives of such shots are not distributable, so a
deterministic generator stands in: the laser is a picket / ramp / main-peak /
trailing-edge pulse shape, and the emission is a causal kernel response to
the above-threshold part of the drive.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ConfigurationError, ParseError, SchemaError
from . import jsontext

DEFAULT_DT_NS = 0.025
DEFAULT_STEPS = 400

SHOT_FIELDS = ("shot_id", "dt_ns", "target_size_um", "phase_plate", "laser", "hxr")

_PHASE_PLATES = ("SG4", "SG5", "SG8")


@dataclass(frozen=True)
class Shot:
    """One shot: laser drive, emission response, and target metadata."""

    shot_id: str
    laser: np.ndarray
    hxr: np.ndarray
    dt_ns: float = DEFAULT_DT_NS
    target_size_um: float = 430.0
    phase_plate: str = "SG4"

    def __post_init__(self):
        laser = np.asarray(self.laser, dtype=np.float64)
        hxr = np.asarray(self.hxr, dtype=np.float64)
        object.__setattr__(self, "laser", laser)
        object.__setattr__(self, "hxr", hxr)
        if laser.ndim != 1 or hxr.ndim != 1:
            raise SchemaError(f"shot {self.shot_id}: series must be 1-D")
        if len(laser) != len(hxr):
            raise SchemaError(
                f"shot {self.shot_id}: laser length {len(laser)} != hxr length {len(hxr)}"
            )
        if not (np.isfinite(laser).all() and np.isfinite(hxr).all()):
            raise SchemaError(f"shot {self.shot_id}: non-finite sample")
        if self.dt_ns <= 0:
            raise SchemaError(f"shot {self.shot_id}: dt_ns must be positive")

    @property
    def steps(self) -> int:
        return len(self.laser)


@dataclass(frozen=True)
class ShotSet:
    """Ordered collection of shots with a split tag."""

    shots: tuple[Shot, ...]
    split_tag: str = "unsplit"

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))
        if self.split_tag not in ("train", "val", "test", "unsplit"):
            raise ArgumentError(f"unknown split tag {self.split_tag!r}")
        ids = [s.shot_id for s in self.shots]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate shot_id within a set")

    def __len__(self) -> int:
        return len(self.shots)

    def __iter__(self):
        return iter(self.shots)

    def __getitem__(self, i: int) -> Shot:
        return self.shots[i]


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameter ranges for the synthetic pulse generator.

    Each range is a closed interval sampled uniformly per shot. Times and
    widths are in steps. The emission threshold sits above the foot of the
    pulse so only the main peak drives the response.
    """

    n_shots: int = 100
    steps: int = DEFAULT_STEPS
    seed: int = 7
    picket_amp: tuple[float, float] = (0.05, 0.15)
    ramp_duration: tuple[float, float] = (60.0, 120.0)
    peak_amp: tuple[float, float] = (0.7, 1.0)
    peak_time: tuple[float, float] = (180.0, 260.0)
    trailing_decay: tuple[float, float] = (25.0, 60.0)
    lpi_threshold: float = 0.6
    lpi_exponent: float = 2.0
    response_kernel_width: int = 12
    noise_std: float = 0.01

    # Fixed shape constants (not per-shot ranges).
    picket_time: float = 35.0
    picket_width: float = 7.0
    peak_width: tuple[float, float] = (12.0, 20.0)
    ramp_fraction: float = 0.35  # foot level as a fraction of peak amplitude

    def __post_init__(self):
        if self.n_shots <= 0:
            raise ConfigurationError("n_shots must be positive")
        if self.steps <= 0:
            raise ConfigurationError("steps must be positive")
        for name in ("picket_amp", "ramp_duration", "peak_amp", "peak_time",
                     "trailing_decay", "peak_width"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigurationError(f"interval {name} must be ordered, got ({lo}, {hi})")
            if name != "peak_time" and lo < 0:
                raise ConfigurationError(f"interval {name} must be non-negative")
        if self.lpi_threshold <= 0:
            raise ConfigurationError("lpi_threshold must be positive")
        if self.lpi_exponent < 1:
            raise ConfigurationError("lpi_exponent must be >= 1")
        if self.response_kernel_width <= 0:
            raise ConfigurationError("response_kernel_width must be positive")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be non-negative")
        # Threshold sanity only applies to configs that can drive at all;
        # zero-drive configs are legal (used to characterize the noise floor).
        reachable = (self.picket_amp[1]
                     + self.ramp_fraction * self.peak_amp[1]
                     + self.peak_amp[1])
        if reachable > 0 and self.lpi_threshold >= reachable:
            raise ConfigurationError(
                f"lpi_threshold {self.lpi_threshold} is outside the reachable "
                f"laser amplitude range (0, {reachable:.4g})"
            )


@dataclass(frozen=True)
class InputStats:
    """Minimum, maximum, and median of a series."""

    min: float
    max: float
    median: float

    def __post_init__(self):
        if not (self.min <= self.median <= self.max):
            raise ArgumentError("requires min <= median <= max")


def _shot_rng(seed: int, index: int) -> np.random.Generator:
    # SeedSequence of (seed, index) gives independent, reproducible streams.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def synth_laser(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample one pulse shape: picket, ramp, main peak, trailing edge."""
    t = np.arange(config.steps, dtype=np.float64)
    picket_amp = rng.uniform(*config.picket_amp)
    ramp_dur = rng.uniform(*config.ramp_duration)
    peak_amp = rng.uniform(*config.peak_amp)
    peak_time = rng.uniform(*config.peak_time)
    tau = rng.uniform(*config.trailing_decay)
    peak_width = rng.uniform(*config.peak_width)

    picket = picket_amp * np.exp(-0.5 * ((t - config.picket_time) / config.picket_width) ** 2)

    # Smoothstep foot rising over ramp_dur, ending just before the peak.
    ramp_end = peak_time - 1.2 * peak_width
    ramp_start = ramp_end - ramp_dur
    u = np.clip((t - ramp_start) / max(ramp_end - ramp_start, 1.0), 0.0, 1.0)
    foot = config.ramp_fraction * peak_amp * u * u * (3.0 - 2.0 * u)

    peak = peak_amp * np.exp(-0.5 * ((t - peak_time) / peak_width) ** 2)

    # Everything after the peak decays exponentially toward zero.
    after = np.clip(t - peak_time, 0.0, None)
    trailing = np.exp(-after / tau)
    laser = picket + (foot + peak) * np.where(t > peak_time, trailing, 1.0)
    return np.clip(laser, 0.0, None)


def response_kernel(width: int) -> np.ndarray:
    """Causal triangular kernel, unit area, most weight at zero lag."""
    k = np.arange(width, 0, -1, dtype=np.float64)
    return k / k.sum()


def hxr_response(laser: np.ndarray, config: GeneratorConfig,
                 noise: np.ndarray | None = None) -> np.ndarray:
    """Emission = causal kernel * relu(laser - threshold)^exponent, clipped >= 0."""
    drive = np.clip(np.asarray(laser, dtype=np.float64) - config.lpi_threshold, 0.0, None)
    drive = drive ** config.lpi_exponent
    kernel = response_kernel(config.response_kernel_width)
    out = np.convolve(drive, kernel)[: len(drive)]
    if noise is not None:
        out = out + noise
    return np.clip(out, 0.0, None)


def synth_shot(config: GeneratorConfig, index: int) -> Shot:
    """Deterministic shot for (config.seed, index); bit-identical on repeat."""
    if index >= config.n_shots or index < 0:
        raise ArgumentError(f"index {index} out of range for n_shots={config.n_shots}")
    rng = _shot_rng(config.seed, index)
    laser = synth_laser(config, rng)
    noise = rng.normal(0.0, config.noise_std, config.steps) if config.noise_std > 0 else None
    hxr = hxr_response(laser, config, noise)
    target = rng.uniform(380.0, 480.0)
    plate = _PHASE_PLATES[int(rng.integers(len(_PHASE_PLATES)))]
    return Shot(
        shot_id=f"S{config.seed:04d}-{index:04d}",
        laser=laser,
        hxr=hxr,
        dt_ns=DEFAULT_DT_NS,
        target_size_um=float(target),
        phase_plate=plate,
    )


def synth_set(config: GeneratorConfig) -> ShotSet:
    """All n_shots shots for a config."""
    return ShotSet(tuple(synth_shot(config, i) for i in range(config.n_shots)))


def split_shots(shot_set: ShotSet, ratios: tuple[float, float, float],
                seed: int) -> tuple[ShotSet, ShotSet, ShotSet]:
    """Disjoint, exhaustive train/val/test partition.

    Counts are floor(ratio * n) per split with the remainder assigned to
    train; the shuffle is a deterministic function of the seed.
    """
    if len(shot_set) == 0:
        raise ArgumentError("cannot split an empty set")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"ratios must sum to 1, got {sum(ratios)}")
    if any(r < 0 for r in ratios):
        raise ArgumentError("ratios must be non-negative")
    n = len(shot_set)
    counts = [int(math.floor(r * n)) for r in ratios]
    counts[0] += n - sum(counts)
    order = np.random.default_rng(seed).permutation(n)
    shots = [shot_set[int(i)] for i in order]
    train = shots[: counts[0]]
    val = shots[counts[0]: counts[0] + counts[1]]
    test = shots[counts[0] + counts[1]:]
    return (
        ShotSet(tuple(train), "train"),
        ShotSet(tuple(val), "val"),
        ShotSet(tuple(test), "test"),
    )


def input_stats(series: np.ndarray) -> InputStats:
    """Exact min/max plus midpoint-of-central-pair median."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise ArgumentError("series is empty")
    if not np.isfinite(arr).all():
        raise ArgumentError("series contains non-finite values")
    ordered = np.sort(arr)
    n = arr.size
    if n % 2 == 1:
        median = float(ordered[n // 2])
    else:
        median = float((ordered[n // 2 - 1] + ordered[n // 2]) / 2.0)
    return InputStats(min=float(ordered[0]), max=float(ordered[-1]), median=median)


@dataclass(frozen=True)
class NormParams:
    """Per-channel affine parameters: normalized = (x - offset) / scale."""

    laser_offset: float
    laser_scale: float
    hxr_offset: float
    hxr_scale: float

    def to_dict(self) -> dict:
        return {
            "laser_offset": self.laser_offset,
            "laser_scale": self.laser_scale,
            "hxr_offset": self.hxr_offset,
            "hxr_scale": self.hxr_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormParams":
        return cls(d["laser_offset"], d["laser_scale"], d["hxr_offset"], d["hxr_scale"])


def _channel_params(values: np.ndarray) -> tuple[float, float]:
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return lo, 1.0  # constant channel: map to all zeros
    return lo, hi - lo


def normalize(shot_set: ShotSet) -> tuple[ShotSet, NormParams]:
    """Min-max scale each channel to [0, 1] using this set's own extrema."""
    if len(shot_set) == 0:
        raise ArgumentError("cannot normalize an empty set")
    laser_all = np.concatenate([s.laser for s in shot_set])
    hxr_all = np.concatenate([s.hxr for s in shot_set])
    l_off, l_scale = _channel_params(laser_all)
    h_off, h_scale = _channel_params(hxr_all)
    params = NormParams(l_off, l_scale, h_off, h_scale)
    return apply_normalization(shot_set, params), params


def apply_normalization(shot_set: ShotSet, params: NormParams) -> ShotSet:
    """Apply existing (train-set) parameters, e.g. to val/test."""
    shots = tuple(
        replace(
            s,
            laser=(s.laser - params.laser_offset) / params.laser_scale,
            hxr=(s.hxr - params.hxr_offset) / params.hxr_scale,
        )
        for s in shot_set
    )
    return ShotSet(shots, shot_set.split_tag)


def denormalize_hxr(series: np.ndarray, params: NormParams) -> np.ndarray:
    return np.asarray(series) * params.hxr_scale + params.hxr_offset


def save_shots(shot_set: ShotSet, path: str | os.PathLike) -> None:
    """Write one self-describing JSON record per line; lossless floats."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in shot_set:
            record = {
                "shot_id": s.shot_id,
                "dt_ns": float(s.dt_ns),
                "target_size_um": float(s.target_size_um),
                "phase_plate": s.phase_plate,
                "laser": [float(v) for v in s.laser],
                "hxr": [float(v) for v in s.hxr],
            }
            fh.write(jsontext.dumps(record) + "\n")


def load_shots(path: str | os.PathLike, split_tag: str = "unsplit") -> ShotSet:
    """Read a shot file; blank lines are tolerated, bad records are not."""
    shots = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = jsontext.loads(line, where=f"{path}:{lineno}")
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            missing = [f for f in SHOT_FIELDS if f not in record]
            if missing:
                raise ParseError(f"{path}:{lineno}: missing field {missing[0]!r}")
            for name in ("laser", "hxr"):
                if not isinstance(record[name], list):
                    raise ParseError(f"{path}:{lineno}: field {name!r} is not an array")
            if len(record["laser"]) != len(record["hxr"]):
                raise SchemaError(
                    f"{path}:{lineno}: shot {record['shot_id']!r} has laser length "
                    f"{len(record['laser'])} but hxr length {len(record['hxr'])}"
                )
            shots.append(Shot(
                shot_id=str(record["shot_id"]),
                laser=np.asarray(record["laser"], dtype=np.float64),
                hxr=np.asarray(record["hxr"], dtype=np.float64),
                dt_ns=float(record["dt_ns"]),
                target_size_um=float(record["target_size_um"]),
                phase_plate=str(record["phase_plate"]),
            ))
    return ShotSet(tuple(shots), split_tag)
