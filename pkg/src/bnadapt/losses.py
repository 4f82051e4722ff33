"""Adaptation objectives over per-sample prediction batches.

A prediction batch is a (queries x classes) matrix of probabilities, one row
per query. All losses accept either a plain array or a tape-tracked tensor;
tracked inputs yield tracked losses.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .exceptions import InvalidProbabilityError, ShapeError

# single numeric-guard constant: probabilities are clamped here before any
# log or ratio, resolving 0*log(0) and division by zero
PROB_CLAMP = 1e-12

ROW_SUM_TOL = 1e-6


def _check_batch(p: T.Tensor) -> None:
    if p.data.ndim != 2:
        raise ShapeError(f"prediction batch must be 2-D, got shape {p.shape}")
    sums = p.data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise InvalidProbabilityError(
            f"prediction rows must sum to 1 within {ROW_SUM_TOL}")


def em_loss(p) -> T.Tensor:
    """Entropy summed over queries and classes: sum of -p*log(p)."""
    p = T.as_tensor(p)
    _check_batch(p)
    logp = T.log(T.clamp_min(p, PROB_CLAMP))
    return T.sum_all(T.neg(T.mul(p, logp)))


def gs_loss(p) -> T.Tensor:
    """Per-query gap between the largest and smallest class probability.

    Acts against the runaway sharpening that entropy minimization alone
    produces; at ties the subgradient follows the first maximal or minimal
    index in row order.
    """
    p = T.as_tensor(p)
    _check_batch(p)
    return T.sum_all(T.sub(T.row_max(p), T.row_min(p)))


def gsem_loss(p) -> T.Tensor:
    """Combined objective: entropy term plus the max-min gap regularizer."""
    p = T.as_tensor(p)
    return T.add(em_loss(p), gs_loss(p))


def kl_divergence(p, q) -> float:
    """Mean over queries of KL(p_row || q_row), clamped at PROB_CLAMP.

    Averaging (rather than summing) over queries keeps downstream threshold
    behavior independent of the query count. Identical inputs give exactly
    zero.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {q.shape}")
    if p.ndim != 2:
        raise ShapeError(f"prediction batches must be 2-D, got shape {p.shape}")
    pc = np.maximum(p, PROB_CLAMP)
    qc = np.maximum(q, PROB_CLAMP)
    per_query = (pc * np.log(pc / qc)).sum(axis=1)
    return float(per_query.mean())
