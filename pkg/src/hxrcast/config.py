"""Run configuration: INI-style key=value sections with paper-default values.

Every knob has a default matching the experimental recipe (0.03 metric
floor, k=50, 100 epochs, batch 5, lr 0.0004, head dim 128, 80/10/10 split),
so a bare `[data]`-only file trains the reference setup.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import GeneratorConfig
from .errors import ConfigurationError
from .head import TrainConfig
from .metrics import DEFAULT_FLOOR
from .pipeline import PipelineConfig
from .reservoir import EsnConfig, NgrcConfig
from .sdc import DEFAULT_CONTEXT_TERMS, PatchConfig
from .service.mock import MockConfig

ENDPOINT_ENV_VAR = "HXRCAST_ENDPOINT"
DEFAULT_ENDPOINT = "mock:"

RESERVOIR_KINDS = ("esn", "ngrc", "llm")


@dataclass
class RunConfig:
    data_path: str = "shots.jsonl"
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    reservoir_kind: str = "llm"
    endpoint: str | None = None
    last_k: int = 50
    esn: EsnConfig = field(default_factory=EsnConfig)
    ngrc: NgrcConfig = field(default_factory=NgrcConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    context_terms: tuple[str, ...] = DEFAULT_CONTEXT_TERMS
    head_dim: int = 128
    pred_len: int = 400
    pipeline_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    template_dir: str | None = None
    max_prompt_chars: int = 4000
    metric_floor: float = DEFAULT_FLOOR
    mock: MockConfig = field(default_factory=MockConfig)

    def __post_init__(self):
        if self.reservoir_kind not in RESERVOIR_KINDS:
            raise ConfigurationError(
                f"reservoir kind must be one of {RESERVOIR_KINDS}, got {self.reservoir_kind!r}"
            )
        if self.metric_floor < 0:
            raise ConfigurationError("metric floor must be non-negative")

    def resolve_endpoint(self, override: str | None = None) -> str:
        """Flag > config file > environment > built-in mock."""
        return (override or self.endpoint
                or os.environ.get(ENDPOINT_ENV_VAR) or DEFAULT_ENDPOINT)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            patch=self.patch,
            context_terms=self.context_terms,
            last_k=self.last_k,
            head_dim=self.head_dim,
            pred_len=self.pred_len,
            seed=self.pipeline_seed,
            template_dir=self.template_dir,
            max_prompt_chars=self.max_prompt_chars,
        )


def _interval(raw: str, name: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ConfigurationError(f"{name} must be 'low, high', got {raw!r}")
    return float(parts[0]), float(parts[1])


def load_config(path: str | Path | None) -> RunConfig:
    """Parse an INI run config; a missing path yields pure defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    try:
        return _build(parser)
    except (ValueError, KeyError) as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc


def _build(p: configparser.ConfigParser) -> RunConfig:
    cfg = RunConfig()

    if p.has_section("data"):
        d = p["data"]
        cfg.data_path = d.get("path", cfg.data_path)
        cfg.ratios = (
            d.getfloat("train_frac", cfg.ratios[0]),
            d.getfloat("val_frac", cfg.ratios[1]),
            d.getfloat("test_frac", cfg.ratios[2]),
        )
        cfg.split_seed = d.getint("split_seed", cfg.split_seed)

    if p.has_section("generator"):
        g = p["generator"]
        base = GeneratorConfig()
        cfg.generator = GeneratorConfig(
            n_shots=g.getint("n_shots", base.n_shots),
            steps=g.getint("steps", base.steps),
            seed=g.getint("seed", base.seed),
            picket_amp=_interval(g.get("picket_amp", "0.05, 0.15"), "picket_amp"),
            ramp_duration=_interval(g.get("ramp_duration", "60, 120"), "ramp_duration"),
            peak_amp=_interval(g.get("peak_amp", "0.7, 1.0"), "peak_amp"),
            peak_time=_interval(g.get("peak_time", "180, 260"), "peak_time"),
            trailing_decay=_interval(g.get("trailing_decay", "25, 60"), "trailing_decay"),
            lpi_threshold=g.getfloat("lpi_threshold", base.lpi_threshold),
            lpi_exponent=g.getfloat("lpi_exponent", base.lpi_exponent),
            response_kernel_width=g.getint("response_kernel_width",
                                           base.response_kernel_width),
            noise_std=g.getfloat("noise_std", base.noise_std),
        )

    if p.has_section("reservoir"):
        r = p["reservoir"]
        cfg.reservoir_kind = r.get("kind", cfg.reservoir_kind).strip()
        endpoint = r.get("endpoint", "").strip()
        cfg.endpoint = endpoint or None
        cfg.last_k = r.getint("last_k", cfg.last_k)

    if p.has_section("esn"):
        e = p["esn"]
        base = EsnConfig()
        cfg.esn = EsnConfig(
            n_units=e.getint("n_units", base.n_units),
            spectral_radius=e.getfloat("spectral_radius", base.spectral_radius),
            input_scale=e.getfloat("input_scale", base.input_scale),
            leak=e.getfloat("leak", base.leak),
            density=e.getfloat("density", base.density),
            seed=e.getint("seed", base.seed),
            ridge=e.getfloat("ridge", base.ridge),
            warmup=e.getint("warmup", base.warmup),
        )

    if p.has_section("ngrc"):
        n = p["ngrc"]
        base = NgrcConfig()
        cfg.ngrc = NgrcConfig(
            delays=n.getint("delays", base.delays),
            degree=n.getint("degree", base.degree),
            ridge=n.getfloat("ridge", base.ridge),
        )

    if p.has_section("sdc"):
        s = p["sdc"]
        base = PatchConfig()
        cfg.patch = PatchConfig(
            window_len=s.getint("window_len", base.window_len),
            horizon=s.getint("horizon", base.horizon),
            patch_size=s.getint("patch_size", base.patch_size),
            stride=s.getint("stride", base.stride),
            d_tmp=s.getint("d_tmp", base.d_tmp),
            positional=s.getboolean("positional", base.positional),
        )
        terms = s.get("context_terms", "")
        if terms.strip():
            cfg.context_terms = tuple(t.strip() for t in terms.split(",") if t.strip())

    if p.has_section("head"):
        h = p["head"]
        cfg.head_dim = h.getint("head_dim", cfg.head_dim)
        cfg.pred_len = h.getint("pred_len", cfg.pred_len)

    if p.has_section("train"):
        t = p["train"]
        base = TrainConfig()
        cfg.train = TrainConfig(
            epochs=t.getint("epochs", base.epochs),
            batch_size=t.getint("batch_size", base.batch_size),
            lr=t.getfloat("lr", base.lr),
            seed=t.getint("seed", base.seed),
        )
        cfg.pipeline_seed = t.getint("pipeline_seed", cfg.pipeline_seed)

    if p.has_section("prompt"):
        pr = p["prompt"]
        template_dir = pr.get("template_dir", "").strip()
        cfg.template_dir = template_dir or None
        cfg.max_prompt_chars = pr.getint("max_chars", cfg.max_prompt_chars)

    if p.has_section("metrics"):
        cfg.metric_floor = p["metrics"].getfloat("floor", cfg.metric_floor)

    if p.has_section("mock"):
        m = p["mock"]
        base = MockConfig()
        cfg.mock = MockConfig(
            model_id=m.get("model_id", base.model_id),
            hidden_dim=m.getint("hidden_dim", base.hidden_dim),
            vocab_size=m.getint("vocab_size", base.vocab_size),
            max_positions=m.getint("max_positions", base.max_positions),
            seed=m.getint("seed", base.seed),
            spectral_radius=m.getfloat("spectral_radius", base.spectral_radius),
            input_scale=m.getfloat("input_scale", base.input_scale),
        )

    return RunConfig(**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__})
