"""Command-line surface: data generation, training, evaluation, prediction,
parameter sweeps, and the mock service.

Exit codes: 0 success, 2 configuration/argument problem, 3 transport
problem, 4 numeric failure. Outputs are UTF-8 text: shot files are JSON
lines, reports are flat JSON objects, prediction files are plot-ready
tab-separated columns.
"""

from __future__ import annotations

import argparse
import signal
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from . import jsontext, metrics
from .config import RunConfig, load_config
from .data import apply_normalization, load_shots, normalize, save_shots, split_shots, synth_set
from .errors import (
    ArgumentError,
    CapacityError,
    CompatibilityError,
    ConfigurationError,
    HxrcastError,
    NumericError,
    RankError,
    SchemaError,
    TransportError,
)
from .pipeline import (
    copy_laser_predictor,
    evaluate_forecasts,
    load_checkpoint,
    save_checkpoint,
    train_classical,
    train_pipeline,
)
from .service import MockReservoirModel, ServiceClient, serve_http

SWEEP_SAMPLES = (80, 60, 40, 20)
SWEEP_EPOCHS = (100, 50, 20, 10)

REPORT_ORDER = ("cae", "top1_mae", "top5_mae", "n_shots", "pooled_steps")


def _client_for(cfg: RunConfig, endpoint_flag: str | None) -> ServiceClient:
    endpoint = cfg.resolve_endpoint(endpoint_flag)
    if endpoint.startswith("mock:"):
        return ServiceClient(MockReservoirModel(cfg.mock))
    return ServiceClient(endpoint)


def _load_splits(cfg: RunConfig):
    path = Path(cfg.data_path)
    if not path.is_file():
        raise ConfigurationError(f"shot file not found: {path}")
    full = load_shots(path)
    train, val, test = split_shots(full, cfg.ratios, cfg.split_seed)
    train_n, norm = normalize(train)
    return (train_n, apply_normalization(val, norm),
            apply_normalization(test, norm), norm)


def _train_model(cfg: RunConfig, endpoint_flag: str | None,
                 train_seed: int | None = None, epochs: int | None = None,
                 n_samples: int | None = None):
    """Shared by train, multi-seed eval, and sweep so reruns are bit-identical."""
    train_set, val_set, test_set, norm = _load_splits(cfg)
    if n_samples is not None:
        if n_samples > len(train_set):
            raise ConfigurationError(
                f"requested {n_samples} training samples, split has {len(train_set)}"
            )
        train_set = type(train_set)(train_set.shots[:n_samples], "train")
    train_cfg = cfg.train
    if train_seed is not None:
        train_cfg = replace(train_cfg, seed=train_seed)
    if epochs is not None:
        train_cfg = replace(train_cfg, epochs=epochs)
    if cfg.reservoir_kind == "llm":
        client = _client_for(cfg, endpoint_flag)
        model = train_pipeline(train_set, val_set, client,
                               cfg.pipeline_config(), train_cfg, norm=norm)
    elif cfg.reservoir_kind == "esn":
        model = train_classical("esn", cfg.esn, train_set, norm=norm)
    else:
        model = train_classical("ngrc", cfg.ngrc, train_set, norm=norm)
    return model, test_set


def _print_report(report: metrics.MetricReport, label: str = "") -> None:
    if label:
        print(f"== {label} ==")
    d = report.to_dict()
    for key in REPORT_ORDER:
        print(f"{key:>14}  {d[key]}")


# --- subcommands -----------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    shots = synth_set(cfg.generator)
    out = Path(args.out or cfg.data_path)
    save_shots(shots, out)
    print(f"wrote {len(shots)} shots x {cfg.generator.steps} steps to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.reservoir:
        cfg = replace(cfg, reservoir_kind=args.reservoir)
    model, _ = _train_model(cfg, args.endpoint)
    out = Path(args.out or "model.npz")
    save_checkpoint(out, model)
    trace_path = out.with_suffix(".trace.tsv")
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for row in model.trace:
            fh.write(f"{row['epoch']}\t{row['train_loss']!r}\t{row['val_loss']!r}\n")
    final = model.trace[-1] if model.trace else {}
    print(f"checkpoint: {out}")
    print(f"loss trace: {trace_path}")
    if final:
        print(f"final train loss: {final['train_loss']}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.reservoir:
        cfg = replace(cfg, reservoir_kind=args.reservoir)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        if not seeds:
            raise ArgumentError("--seeds parsed to an empty list")
        reports = []
        for seed in seeds:
            model, test_set = _train_model(cfg, args.endpoint, train_seed=seed)
            reports.append(evaluate_forecasts(model.forecast, test_set,
                                              cfg.metric_floor))
        rows = [r.to_dict() for r in reports]
        summary = {"seeds": seeds, "runs": rows}
        for key in ("cae", "top1_mae", "top5_mae"):
            vals = np.array([r[key] for r in rows])
            summary[f"{key}_mean"] = float(vals.mean())
            summary[f"{key}_std"] = float(vals.std())
        text = jsontext.dumps(summary)
        for seed, report in zip(seeds, reports):
            _print_report(report, label=f"seed {seed}")
        print(f"cae mean±std: {summary['cae_mean']:.6g} ± {summary['cae_std']:.6g}")
    else:
        if not args.checkpoint:
            raise ArgumentError("eval needs --checkpoint (or --seeds for multi-run)")
        _, _, test_set, _ = _load_splits(cfg)
        model = _load_model(cfg, args)
        report = evaluate_forecasts(model.forecast, test_set, cfg.metric_floor)
        text = report.dumps()
        _print_report(report, label="test split")
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"report: {args.out}")
    return 0


def _load_model(cfg: RunConfig, args):
    path = Path(args.checkpoint)
    if not path.is_file():
        raise ConfigurationError(f"checkpoint not found: {path}")
    client = _client_for(cfg, args.endpoint)
    return load_checkpoint(path, client=client)


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    _, _, test_set, _ = _load_splits(cfg)
    model = _load_model(cfg, args)
    if args.index < 0 or args.index >= len(test_set):
        raise ArgumentError(f"--index {args.index} out of range (test split has "
                            f"{len(test_set)} shots)")
    shot = test_set[args.index]
    confidence_scores = None
    if args.confidence:
        if not hasattr(model, "forecast_with_confidence"):
            raise ArgumentError("confidence scan requires the llm backend")
        pred, series = model.forecast_with_confidence(shot)
        confidence_scores = series.scores
    else:
        pred = model.forecast(shot)
    error = np.abs(pred - shot.hxr)
    out = Path(args.out or f"prediction_{shot.shot_id}.tsv")
    header = ["time_step", "ground_truth", "prediction", "error"]
    if confidence_scores is not None:
        header.append("confidence")
    lines = [f"# shot_id = {shot.shot_id} (normalized units)"]
    if confidence_scores is not None:
        # Constant confidence (uniform saliency) has no defined rank correlation.
        if np.ptp(confidence_scores) == 0 or np.ptp(error) == 0:
            rho = float("nan")
        else:
            rho = scipy_stats.spearmanr(error, confidence_scores).statistic
        lines.append(f"# spearman_error_confidence = {rho!r}")
    lines.append("\t".join(header))
    for t in range(len(pred)):
        row = [str(t), repr(float(shot.hxr[t])), repr(float(pred[t])),
               repr(float(error[t]))]
        if confidence_scores is not None:
            row.append(repr(float(confidence_scores[t])))
        lines.append("\t".join(row))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"prediction: {out} ({len(pred)} steps)")
    return 0


def sweep_cell(cfg: RunConfig, endpoint_flag: str | None, axis: str,
               value: int) -> metrics.MetricReport:
    """One sweep cell == one independent train+eval at that setting."""
    if axis == "samples":
        model, test_set = _train_model(cfg, endpoint_flag, n_samples=value)
    elif axis == "epochs":
        model, test_set = _train_model(cfg, endpoint_flag, epochs=value)
    else:
        raise ArgumentError(f"unknown sweep axis {axis!r}")
    return evaluate_forecasts(model.forecast, test_set, cfg.metric_floor)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.reservoir:
        cfg = replace(cfg, reservoir_kind=args.reservoir)
    values = SWEEP_SAMPLES if args.axis == "samples" else SWEEP_EPOCHS
    rows = []
    for value in values:
        report = sweep_cell(cfg, args.endpoint, args.axis, value)
        rows.append((value, report))
        print(f"{args.axis}={value}: cae={report.cae!r} "
              f"top1={report.top1_mae!r} top5={report.top5_mae!r}")
    out = Path(args.out or f"sweep_{args.axis}.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"{args.axis}\tcae\ttop1_mae\ttop5_mae\n")
        for value, report in rows:
            fh.write(f"{value}\t{report.cae!r}\t{report.top1_mae!r}"
                     f"\t{report.top5_mae!r}\n")
    print(f"sweep table: {out}")
    return 0


def cmd_baselines(args) -> int:
    """Reference rows: train-mean and copy-laser predictors on the test split."""
    cfg = load_config(args.config)
    train_set, _, test_set, _ = _load_splits(cfg)
    from .pipeline import train_mean_predictor
    for name, fn in (("train_mean", train_mean_predictor(train_set)),
                     ("copy_laser", copy_laser_predictor())):
        report = evaluate_forecasts(fn, test_set, cfg.metric_floor)
        _print_report(report, label=name)
    return 0


def cmd_serve_mock(args) -> int:
    cfg = load_config(args.config)
    model = MockReservoirModel(cfg.mock)
    handle = serve_http(model, host=args.host, port=args.port)
    print(f"mock service listening on {handle.endpoint}")

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    try:
        signal.pause()
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
        print("mock service drained and stopped")
    return 0


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hxrcast",
        description="Forecast hard-X-ray emission from laser pulse shapes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="INI run config (defaults used if omitted)")
        p.add_argument("--endpoint", help="service endpoint (http://... or mock:)")
        p.add_argument("--reservoir", choices=("esn", "ngrc", "llm"),
                       help="override the reservoir backend")
        p.add_argument("--out", help="output path")
        if checkpoint:
            p.add_argument("--checkpoint", help="trained checkpoint (.npz)")

    p = sub.add_parser("gen-data", help="write a synthetic shot file")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a forecaster, write checkpoint + trace")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate on the test split")
    common(p, checkpoint=True)
    p.add_argument("--seeds", help="comma-separated training seeds for mean±std")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="forecast one test shot to a columnar file")
    common(p, checkpoint=True)
    p.add_argument("--index", type=int, default=0, help="test-split shot index")
    p.add_argument("--confidence", action="store_true",
                   help="attach per-step confidence scores")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="sample-count or epoch-count sweep table")
    common(p)
    p.add_argument("--axis", choices=("samples", "epochs"), required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baselines", help="train-mean / copy-laser reference metrics")
    common(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("serve-mock", help="host the mock service over HTTP")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve_mock)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ArgumentError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TransportError, CapacityError, CompatibilityError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, RankError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except HxrcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
