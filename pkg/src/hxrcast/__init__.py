"""hxrcast: reservoir-computing forecaster for hard-X-ray emission series.

Maps laser-pulse waveforms to the hot-electron emission they induce, using
either local reservoirs (echo-state network, polynomial delay reservoir) or
a remote language-model hidden-state service, with per-step confidence
scoring on top of the service backend.
"""

from .data import (
    GeneratorConfig,
    InputStats,
    NormParams,
    Shot,
    ShotSet,
    apply_normalization,
    input_stats,
    load_shots,
    normalize,
    save_shots,
    split_shots,
    synth_set,
    synth_shot,
)
from .metrics import MetricReport, cae, evaluate_set, sum_abs_loss, top_fraction_mae
from .prompts import FusionPrompt, PromptDescriptors, assemble_prompt, build_input_descriptor
from .sdc import AugmentedInput, PatchConfig, fuse_channels, spatial_encode, window_patch
from .reservoir import EsnConfig, NgrcConfig, esn_step, ngrc_features, ridge_fit
from .head import HeadParams, TrainConfig, adam_step, predict_post, project_input
from .confidence import ConfidenceSeries, SaliencyMatrix, TokenEntropies, confidence, saliency, scan, token_entropy
from .service import MockConfig, MockReservoirModel, ServiceClient, serve_http
from .pipeline import (
    FeatureExtractor,
    LlmModel,
    PipelineConfig,
    evaluate_forecasts,
    load_checkpoint,
    save_checkpoint,
    train_classical,
    train_pipeline,
)

__version__ = "0.1.0"
