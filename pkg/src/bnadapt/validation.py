"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import ShapeError


def check_features(X, n_features: int | None = None) -> np.ndarray:
    """Validate a 2-D finite float feature matrix."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(
            f"X has {X.shape[1]} features, estimator expects {n_features}")
    return X


def check_query_labels(Y, n_samples: int, n_queries: int, n_classes: int) -> np.ndarray:
    """Validate an (n_samples, n_queries) integer label matrix."""
    Y = np.asarray(Y)
    if Y.ndim == 1 and n_queries == 1:
        Y = Y.reshape(-1, 1)
    if Y.shape != (n_samples, n_queries):
        raise ShapeError(
            f"Y has shape {Y.shape}, expected {(n_samples, n_queries)}")
    Y = Y.astype(np.int64, copy=False)
    if Y.min() < 0 or Y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return Y
