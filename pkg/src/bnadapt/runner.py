"""Stream drivers that put every method through an identical protocol.

Each driver walks the corrupted stream in order, records the same per-sample
fields the adaptation report uses, and scores online accuracy: every sample
is predicted by the model state the method itself exposes at that point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptation import AdaptConfig, SampleRecord, run_dual_stage
from .baselines import adabn_forward, ema_adapt_step, tent_adapt_step
from .bn import phi_constrain
from .datagen import apply_corruption
from .exceptions import AbortSampleError
from .losses import gsem_loss
from .model import Checkpoint, accuracy, forward

METHODS = ("frozen", "adabn", "ema", "tent", "learnable-bn")


@dataclass
class MethodRun:
    method: str
    records: list[SampleRecord]
    probs: np.ndarray
    checkpoint: Checkpoint
    accuracy: float
    mean_gsem: float | None
    accepted_fraction: float | None


def _phis(ckpt: Checkpoint):
    raw = tuple(st.phi_raw for st in ckpt.bn)
    return raw, tuple(phi_constrain(v) for v in raw)


def _gsem_value(prob_batch: np.ndarray) -> float:
    return gsem_loss(prob_batch).item()


def _mean_gsem(records) -> float | None:
    vals = [r.gsem_loss for r in records if r.gsem_loss is not None]
    return float(np.mean(vals)) if vals else None


def run_method(method: str, checkpoint: Checkpoint, stream_x: np.ndarray,
               stream_y: np.ndarray, *, adapt_config: AdaptConfig,
               ema_momentum: float = 0.1, tent_lr: float = 1e-3) -> MethodRun:
    """Run one method over the stream and score it online."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    stream_x = np.asarray(stream_x, dtype=np.float64)

    if method == "learnable-bn":
        report = run_dual_stage(checkpoint, stream_x, adapt_config)
        records, probs, ckpt = report.records, report.probs, report.checkpoint
        accepted = report.accepted_fraction
    else:
        ckpt = checkpoint.copy()
        records, probs_list = [], []
        for i, x in enumerate(stream_x):
            if method == "frozen":
                p = forward(ckpt, np.atleast_2d(x), "inference")[0]
                adapted = False
            elif method == "adabn":
                p = adabn_forward(ckpt, x)[0]
                adapted = False
            elif method == "ema":
                p = forward(ckpt, np.atleast_2d(x), "inference")[0]
                ema_adapt_step(ckpt, x, ema_momentum)
                adapted = True
            else:  # tent
                p = adabn_forward(ckpt, x)[0]
                try:
                    tent_adapt_step(ckpt, x, tent_lr)
                    adapted = True
                except AbortSampleError:
                    adapted = False
            raw, con = _phis(ckpt)
            records.append(SampleRecord(i, 0, None, adapted, raw, con, _gsem_value(p)))
            probs_list.append(p)
        probs = np.asarray(probs_list)
        accepted = None

    return MethodRun(
        method=method,
        records=records,
        probs=probs,
        checkpoint=ckpt,
        accuracy=accuracy(probs, stream_y),
        mean_gsem=_mean_gsem(records),
        accepted_fraction=accepted,
    )


@dataclass
class MetricsRow:
    method: str
    corruption: str
    severity: str
    accuracy: float
    mean_gsem_loss: float | None
    accepted_fraction: float | None


def run_comparison(checkpoint: Checkpoint, methods, corruptions, stream_x,
                   stream_y, *, adapt_config: AdaptConfig, ema_momentum: float,
                   tent_lr: float) -> tuple[list[MetricsRow], dict]:
    """Every configured method over every corruption of one clean stream.

    The clean stream is corrupted once per corruption row, and that exact
    array is fed to each method, so scores are comparable.
    """
    rows: list[MetricsRow] = []
    runs: dict[tuple[str, str, str], MethodRun] = {}
    for corr in corruptions:
        x_corr = apply_corruption(stream_x, corr)
        for method in methods:
            run = run_method(method, checkpoint, x_corr, stream_y,
                             adapt_config=adapt_config,
                             ema_momentum=ema_momentum, tent_lr=tent_lr)
            rows.append(MetricsRow(method, corr.kind, corr.severity,
                                   run.accuracy, run.mean_gsem,
                                   run.accepted_fraction))
            runs[(method, corr.kind, corr.severity)] = run
    return rows, runs


def scan_statistics(checkpoint: Checkpoint, stream_x: np.ndarray,
                    train_x: np.ndarray) -> list[tuple[float, float, float]]:
    """Per-sample (mean difference, variance ratio, loss) triples.

    Statistics are taken over a sample's feature values against the training
    split's pooled mean and variance; the loss is the combined entropy
    objective of the frozen model's prediction for that sample.
    """
    train_mean = float(np.mean(train_x))
    train_var = float(np.var(train_x))
    out = []
    for x in np.asarray(stream_x, dtype=np.float64):
        p = forward(checkpoint, np.atleast_2d(x), "inference")[0]
        out.append((
            float(np.mean(x)) - train_mean,
            float(np.var(x)) / train_var,
            _gsem_value(p),
        ))
    return out
