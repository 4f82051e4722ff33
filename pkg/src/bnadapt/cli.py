"""Command-line orchestration: data generation, source training, adaptation
runs, method comparison, and distribution-scan diagnostics.

All artifacts land under ``--out`` and are byte-reproducible from the config
file plus the seed. Exit codes: 1 for config problems, 2 for missing input
artifacts, 3 for runtime numeric failures.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .checkpoint_io import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .datagen import apply_corruption, gen_dataset, load_split_csv, sample_stream, save_split_csv
from .exceptions import (
    AbortSampleError,
    CheckpointFormatError,
    ConfigError,
    MissingArtifactError,
    NumericError,
)
from .model import ModelSpec, accuracy, forward, train_source
from .reports import (
    emit_phi_plot_data,
    write_compare_csv,
    write_metrics_csv,
    write_phi_trajectory_csv,
    write_report_jsonl,
    write_scan_csv,
)
from .runner import MetricsRow, run_comparison, run_method, scan_statistics

TRAIN_CSV = "source_train.csv"
TEST_CSV = "source_test.csv"
CHECKPOINT = "checkpoint.lbn"


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except (MissingArtifactError, CheckpointFormatError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (NumericError, AbortSampleError, FloatingPointError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
    return wrapper


def _common(fn):
    fn = click.option("--out", required=True, type=click.Path(),
                      help="Directory artifacts are written to.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="Run config file.")(fn)
    return fn


def _load(config_path, seed, out) -> tuple[RunConfig, Path]:
    cfg = load_run_config(config_path, seed=seed, out=out)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {hint}: {path} (run `{_PRODUCER[hint]}` first)")
    return path


_PRODUCER = {
    "source data": "bnadapt gen-data",
    "checkpoint": "bnadapt train",
}


def _stream(cfg: RunConfig, corruption):
    spec = cfg.dataset_spec()
    x, y = sample_stream(spec, cfg.stream_samples, cfg.seed)
    return apply_corruption(x, corruption), y


@click.group()
def main():
    """Desk-scale test-time-adaptation benchmark harness."""


@main.command("gen-data")
@_common
@_cli_errors
def gen_data(config_path, seed, out):
    """Write seeded source train/test CSV splits."""
    cfg, out_dir = _load(config_path, seed, out)
    ds = gen_dataset(cfg.dataset_spec())
    save_split_csv(out_dir / TRAIN_CSV, ds.x_train, ds.y_train)
    save_split_csv(out_dir / TEST_CSV, ds.x_test, ds.y_test)
    click.echo(f"wrote {out_dir / TRAIN_CSV} and {out_dir / TEST_CSV}")


@main.command("train")
@_common
@_cli_errors
def train(config_path, seed, out):
    """Train the source model and save a checkpoint."""
    cfg, out_dir = _load(config_path, seed, out)
    x, y = load_split_csv(_require(out_dir / TRAIN_CSV, "source data"))
    params = cfg.model_params()
    spec = ModelSpec(input_dim=x.shape[1], hidden_dims=params["hidden_dims"],
                     n_queries=y.shape[1], n_classes=cfg.dataset_spec().n_classes)
    ckpt = train_source(spec, x, y, seed=params["seed"], epochs=params["epochs"],
                        lr=params["lr"], batch_size=params["batch_size"],
                        bn_momentum=params["bn_momentum"])
    save_checkpoint(ckpt, out_dir / CHECKPOINT)
    x_test, y_test = load_split_csv(_require(out_dir / TEST_CSV, "source data"))
    acc = accuracy(forward(ckpt, x_test, "inference"), y_test)
    click.echo(f"wrote {out_dir / CHECKPOINT} (clean test accuracy {acc:.4f})")


@main.command("adapt")
@_common
@_cli_errors
def adapt(config_path, seed, out):
    """Adapt one method on a corrupted stream; write report and metrics."""
    cfg, out_dir = _load(config_path, seed, out)
    ckpt = load_checkpoint(_require(out_dir / CHECKPOINT, "checkpoint"))
    corruption = cfg.adapt_corruption
    x_stream, y_stream = _stream(cfg, corruption)
    run = run_method(cfg.adapt_method, ckpt, x_stream, y_stream,
                     adapt_config=cfg.adapt_config(),
                     ema_momentum=cfg.ema_momentum, tent_lr=cfg.tent_lr)
    write_report_jsonl(run.records, out_dir / "adapt_report.jsonl")
    write_phi_trajectory_csv(run.records, out_dir / "phi_trajectory.csv")
    (out_dir / "phi_plot.csv").write_text(emit_phi_plot_data(run.records))
    write_metrics_csv(
        [MetricsRow(run.method, corruption.kind, corruption.severity,
                    run.accuracy, run.mean_gsem, run.accepted_fraction)],
        out_dir / "metrics.csv")
    click.echo(f"{run.method} on {corruption.kind}:{corruption.severity} "
               f"accuracy {run.accuracy:.4f}")


@main.command("compare")
@_common
@_cli_errors
def compare(config_path, seed, out):
    """Run all configured methods on identical streams; write one table."""
    cfg, out_dir = _load(config_path, seed, out)
    ckpt = load_checkpoint(_require(out_dir / CHECKPOINT, "checkpoint"))
    spec = cfg.dataset_spec()
    x_clean, y_stream = sample_stream(spec, cfg.stream_samples, cfg.seed)
    rows, _ = run_comparison(ckpt, cfg.compare_methods, cfg.compare_corruptions,
                             x_clean, y_stream, adapt_config=cfg.adapt_config(),
                             ema_momentum=cfg.ema_momentum, tent_lr=cfg.tent_lr)
    write_compare_csv(rows, out_dir / "compare.csv")
    click.echo(f"wrote {out_dir / 'compare.csv'} ({len(rows)} rows)")


@main.command("scan-stats")
@_common
@_cli_errors
def scan_stats(config_path, seed, out):
    """Per-sample statistic-shift vs loss triples for the frozen model."""
    cfg, out_dir = _load(config_path, seed, out)
    ckpt = load_checkpoint(_require(out_dir / CHECKPOINT, "checkpoint"))
    train_x, _ = load_split_csv(_require(out_dir / TRAIN_CSV, "source data"))
    x_stream, _ = _stream(cfg, cfg.scan_corruption)
    triples = scan_statistics(ckpt, x_stream, train_x)
    write_scan_csv(triples, out_dir / "scan_stats.csv")
    click.echo(f"wrote {out_dir / 'scan_stats.csv'} ({len(triples)} rows)")


if __name__ == "__main__":
    main()
