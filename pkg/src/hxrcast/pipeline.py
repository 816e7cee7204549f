"""End-to-end forecasting pipelines and the training loop.

The service-backed pipeline is a classic reservoir setup: every stage up to
and including the remote hidden states is a fixed, seeded transform of the
drive waveform (the service returns no gradients), and only the post-
reservoir head trains. Classical backends swap the feature path for local
reservoir dynamics with a ridge readout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .confidence import ConfidenceSeries, scan
from .data import NormParams, Shot, ShotSet, input_stats
from .errors import ArgumentError, ConfigurationError, NumericError, StateError
from .head import (
    AdamState,
    HeadParams,
    TrainConfig,
    abs_loss_grad,
    adam_step,
    init_head_params,
    predict_post,
    predict_post_backward,
    project_input,
)
from .prompts import (
    DEFAULT_MAX_CHARS,
    FusionPrompt,
    PromptDescriptors,
    SpecialTokens,
    assemble_prompt,
    default_descriptors,
    load_descriptors,
    render_value,
    stats_bindings,
)
from .reservoir import (
    ClassicalModel,
    EsnConfig,
    NgrcConfig,
    llm_reservoir_run,
    train_esn,
    train_ngrc,
)
from .sdc import (
    DEFAULT_CONTEXT_TERMS,
    PatchConfig,
    SpatialEncoder,
    TemporalEncoder,
    fuse_channels,
    temporal_encode,
)

CHECKPOINT_VERSION = "hxrcast-ckpt-1"

_POST_PARAMS = ("post_w1", "post_b1", "post_w2", "post_b2")


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for the service-backed pipeline."""

    patch: PatchConfig = PatchConfig()
    context_terms: tuple[str, ...] = DEFAULT_CONTEXT_TERMS
    last_k: int = 50
    head_dim: int = 128
    pred_len: int = 400
    seed: int = 0
    template_dir: str | None = None
    max_prompt_chars: int = DEFAULT_MAX_CHARS

    def __post_init__(self):
        if self.last_k < 1 or self.head_dim < 1 or self.pred_len < 1:
            raise ConfigurationError("last_k, head_dim, pred_len must be positive")
        if not self.context_terms:
            raise ConfigurationError("need at least one context term")


def _subseed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


class FeatureExtractor:
    """Drive waveform -> prompt + reservoir states, all seeded and frozen."""

    def __init__(self, client, cfg: PipelineConfig):
        self.client = client
        self.cfg = cfg
        self.info = client.fetch_info()
        self.descriptors = (load_descriptors(cfg.template_dir)
                            if cfg.template_dir else default_descriptors())
        self.tokens = SpecialTokens()
        self.term_vectors = client.embed_terms(list(cfg.context_terms))
        self.temporal = TemporalEncoder(cfg.patch, seed=_subseed(cfg.seed, 1))
        self.spatial = SpatialEncoder(self.info.hidden_dim, cfg.patch.d_tmp,
                                      seed=_subseed(cfg.seed, 2))
        # Fused tokens are one token per patch: the "conv" spans 1 row.
        self.head = init_head_params(
            in_width=2 * cfg.patch.d_tmp,
            hidden_dim=self.info.hidden_dim,
            pred_len=cfg.pred_len,
            head_dim=cfg.head_dim,
            kernel_steps=1,
            seed=_subseed(cfg.seed, 3),
        )

    def prompt_for(self, shot: Shot) -> FusionPrompt:
        stats = input_stats(shot.laser)
        bindings = stats_bindings(stats)
        bindings.update({
            "seq_len": str(shot.steps),
            "pred_len": str(self.cfg.pred_len),
            "phase_plate": shot.phase_plate,
            "dt_ns": render_value(shot.dt_ns),
            "target_size_um": render_value(shot.target_size_um),
        })
        return assemble_prompt(self.descriptors, bindings, self.tokens,
                               max_chars=self.cfg.max_prompt_chars)

    def fused_tokens(self, laser: np.ndarray) -> np.ndarray:
        e_tmp = temporal_encode(laser, self.temporal)
        e_spt = self.spatial.encode(e_tmp, self.term_vectors)
        return fuse_channels(e_tmp, e_spt).tokens

    def calibrate(self, shots: ShotSet) -> None:
        """One train-mode pass sets the projection's running statistics."""
        for shot in shots:
            project_input(self.fused_tokens(shot.laser), self.head,
                          train_mode=True, update_running=True)

    def states_for(self, shot: Shot):
        fused = self.fused_tokens(shot.laser)
        projected = project_input(fused, self.head, train_mode=False)
        prompt = self.prompt_for(shot)
        return llm_reservoir_run(prompt.text, projected, self.client, self.cfg.last_k)


@dataclass
class LlmModel:
    """Trained service-backed forecaster."""

    extractor: FeatureExtractor
    pipeline_cfg: PipelineConfig
    norm: NormParams | None = None
    trace: list[dict] = field(default_factory=list)

    @property
    def head(self) -> HeadParams:
        return self.extractor.head

    def forecast(self, shot: Shot) -> np.ndarray:
        states = self.extractor.states_for(shot).states
        return np.clip(predict_post(states, self.head), 0.0, None)

    def forecast_with_confidence(self, shot: Shot) -> tuple[np.ndarray, ConfidenceSeries]:
        output = self.extractor.states_for(shot)
        pred, series = scan(output, self.head, last_k=self.pipeline_cfg.last_k)
        return np.clip(pred, 0.0, None), series


def train_pipeline(train_set: ShotSet, val_set: ShotSet, client,
                   pipeline_cfg: PipelineConfig,
                   train_cfg: TrainConfig,
                   norm: NormParams | None = None) -> LlmModel:
    """Fit the post-reservoir head by Adam on the absolute-sum loss.

    States are precomputed per shot (the feature path is frozen), shuffles
    are seeded per epoch, and the returned parameters are the best-on-val
    snapshot. The trace records per-epoch mean train/val losses.
    """
    if len(train_set) == 0:
        raise ArgumentError("training set is empty")
    extractor = FeatureExtractor(client, pipeline_cfg)
    extractor.calibrate(train_set)
    train_states = [extractor.states_for(s).states for s in train_set]
    train_targets = [s.hxr for s in train_set]
    val_states = [extractor.states_for(s).states for s in val_set]
    val_targets = [s.hxr for s in val_set]

    params = extractor.head
    # Standard output-prior init: start the output bias at the mean target
    # so the optimizer spends its budget on per-shot structure.
    params.post_b2[...] = np.mean(train_targets, axis=0)
    adam = AdamState()
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 0x17]))
    step = 0
    trace: list[dict] = []
    best_val = np.inf
    best_post = {k: params.named_tensors()[k].copy() for k in _POST_PARAMS}

    def mean_loss(states_list, targets_list) -> float:
        if not states_list:
            return np.nan
        total = 0.0
        for st, y in zip(states_list, targets_list):
            total += metrics.sum_abs_loss(predict_post(st, params), y)
        return total / len(states_list)

    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(train_states))
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start: start + train_cfg.batch_size]
            grads = {k: np.zeros_like(params.named_tensors()[k]) for k in _POST_PARAMS}
            batch_loss = 0.0
            for idx in batch:
                cache: dict = {}
                pred = predict_post(train_states[idx], params, cache=cache)
                target = train_targets[idx]
                batch_loss += metrics.sum_abs_loss(pred, target)
                g, _ = predict_post_backward(abs_loss_grad(pred, target), cache, params)
                for k in _POST_PARAMS:
                    grads[k] += g[k] / len(batch)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            step += 1
            adam_step({k: params.named_tensors()[k] for k in _POST_PARAMS},
                      grads, adam, step, train_cfg)
        train_loss = mean_loss(train_states, train_targets)
        val_loss = mean_loss(val_states, val_targets)
        trace.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        score = val_loss if val_states else train_loss
        if score < best_val:
            best_val = score
            best_post = {k: params.named_tensors()[k].copy() for k in _POST_PARAMS}

    for k, v in best_post.items():
        params.named_tensors()[k][...] = v
    return LlmModel(extractor=extractor, pipeline_cfg=pipeline_cfg,
                    norm=norm, trace=trace)


# --- classical backends over shot sets ----------------------------------

@dataclass
class ClassicalForecaster:
    model: ClassicalModel
    norm: NormParams | None = None
    trace: list[dict] = field(default_factory=list)

    def forecast(self, shot: Shot) -> np.ndarray:
        return np.clip(self.model.forecast(shot.laser), 0.0, None)


def train_classical(kind: str, config, train_set: ShotSet,
                    norm: NormParams | None = None) -> ClassicalForecaster:
    lasers = [s.laser for s in train_set]
    targets = [s.hxr for s in train_set]
    if kind == "esn":
        model = train_esn(config, lasers, targets)
    elif kind == "ngrc":
        model = train_ngrc(config, lasers, targets)
    else:
        raise ArgumentError(f"unknown classical backend {kind!r}")
    fc = ClassicalForecaster(model=model, norm=norm)
    train_loss = float(np.mean([
        metrics.sum_abs_loss(fc.forecast(s), s.hxr) for s in train_set
    ]))
    fc.trace.append({"epoch": 1, "train_loss": train_loss, "val_loss": np.nan})
    return fc


# --- baselines ------------------------------------------------------------

def train_mean_predictor(train_set: ShotSet):
    """Predict the per-step mean target of the training split, every time."""
    mean = np.mean([s.hxr for s in train_set], axis=0)
    return lambda shot: mean.copy()


def copy_laser_predictor():
    """Predict the (normalized) drive waveform itself."""
    return lambda shot: shot.laser.copy()


def evaluate_forecasts(forecast_fn, shot_set: ShotSet,
                       floor: float = metrics.DEFAULT_FLOOR) -> metrics.MetricReport:
    preds = [forecast_fn(s) for s in shot_set]
    gts = [s.hxr for s in shot_set]
    return metrics.evaluate_set(preds, gts, floor)


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(path, model) -> None:
    """Single-file container: versioned meta plus named float64 tensors."""
    arrays: dict[str, np.ndarray] = {}
    meta: dict = {"version": CHECKPOINT_VERSION}
    if isinstance(model, LlmModel):
        meta["kind"] = "llm"
        cfg = model.pipeline_cfg
        meta["pipeline"] = {
            "patch": asdict(cfg.patch),
            "context_terms": list(cfg.context_terms),
            "last_k": cfg.last_k,
            "head_dim": cfg.head_dim,
            "pred_len": cfg.pred_len,
            "seed": cfg.seed,
            "template_dir": cfg.template_dir,
            "max_prompt_chars": cfg.max_prompt_chars,
        }
        for name, tensor in model.head.named_tensors().items():
            arrays[f"head/{name}"] = tensor
    elif isinstance(model, ClassicalForecaster):
        meta["kind"] = model.model.kind
        if model.model.kind == "esn":
            meta["esn"] = asdict(model.model.esn_config)
        else:
            meta["ngrc"] = asdict(model.model.ngrc_config)
        arrays["readout"] = model.model.readout
    else:
        raise ArgumentError(f"cannot checkpoint {type(model)}")
    if model.norm is not None:
        meta["norm"] = model.norm.to_dict()
    meta["trace"] = model.trace
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, client=None):
    """Rebuild a trained model; the service-backed kind needs a client."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"].tobytes()).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise StateError(
                f"checkpoint version {meta.get('version')!r} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        norm = NormParams.from_dict(meta["norm"]) if "norm" in meta else None
        kind = meta["kind"]
        if kind == "llm":
            if client is None:
                raise ArgumentError("loading a service-backed checkpoint needs a client")
            p = meta["pipeline"]
            cfg = PipelineConfig(
                patch=PatchConfig(**p["patch"]),
                context_terms=tuple(p["context_terms"]),
                last_k=p["last_k"], head_dim=p["head_dim"], pred_len=p["pred_len"],
                seed=p["seed"], template_dir=p["template_dir"],
                max_prompt_chars=p["max_prompt_chars"],
            )
            extractor = FeatureExtractor(client, cfg)
            for name, tensor in extractor.head.named_tensors().items():
                tensor[...] = data[f"head/{name}"]
            return LlmModel(extractor=extractor, pipeline_cfg=cfg, norm=norm,
                            trace=meta.get("trace", []))
        if kind in ("esn", "ngrc"):
            if kind == "esn":
                from .reservoir import build_esn
                config = EsnConfig(**meta["esn"])
                cm = ClassicalModel(kind="esn", esn_weights=build_esn(config),
                                    esn_config=config)
            else:
                cm = ClassicalModel(kind="ngrc", ngrc_config=NgrcConfig(**meta["ngrc"]))
            cm.readout = data["readout"]
            return ClassicalForecaster(model=cm, norm=norm, trace=meta.get("trace", []))
        raise StateError(f"unknown checkpoint kind {kind!r}")
