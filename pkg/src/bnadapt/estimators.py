"""Scikit-learn style estimators wrapping the training and adaptation machinery.

The source classifier is a conventional supervised estimator. The adapters
are unsupervised: ``fit`` consumes an ordered, unlabeled test stream and
``predict`` serves the adapted model. All constructor arguments follow the
get_params/set_params convention, so the classes compose with clone, grid
search and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .adaptation import AdaptConfig, run_dual_stage
from .baselines import adabn_forward, ema_adapt_step, tent_adapt_step
from .exceptions import AbortSampleError
from .model import (
    Checkpoint,
    ModelSpec,
    forward,
    predict_labels,
    train_source,
)
from .validation import check_features, check_query_labels


class SourceClassifier(BaseEstimator):
    """Multi-query dense classifier trained on labeled source data.

    Parameters mirror the toy model config: a shared rectifier backbone with
    one BN layer per hidden layer and ``n_queries`` independent class heads.
    """

    def __init__(self, hidden_dims=(32, 16), n_queries=4, n_classes=5,
                 epochs=40, lr=0.1, batch_size=32, bn_momentum=0.1, seed=0):
        self.hidden_dims = hidden_dims
        self.n_queries = n_queries
        self.n_classes = n_classes
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.bn_momentum = bn_momentum
        self.seed = seed

    def fit(self, X, y):
        X = check_features(X)
        y = check_query_labels(y, X.shape[0], self.n_queries, self.n_classes)
        spec = ModelSpec(
            input_dim=X.shape[1],
            hidden_dims=tuple(self.hidden_dims),
            n_queries=self.n_queries,
            n_classes=self.n_classes,
        )
        self.checkpoint_ = train_source(
            spec, X, y, seed=self.seed, epochs=self.epochs, lr=self.lr,
            batch_size=self.batch_size, bn_momentum=self.bn_momentum)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_features(X, self.n_features_in_)
        return forward(self.checkpoint_, X, "inference")

    def predict(self, X):
        return predict_labels(self.predict_proba(X))

    def score(self, X, y):
        X = check_features(X, self.n_features_in_)
        y = check_query_labels(y, X.shape[0], self.n_queries, self.n_classes)
        return float(np.mean(self.predict(X) == y))


class _AdapterBase(BaseEstimator):
    """Shared plumbing: checkpoint handling and post-adaptation prediction."""

    def __init__(self, checkpoint=None):
        self.checkpoint = checkpoint

    def _start(self) -> Checkpoint:
        if self.checkpoint is None:
            raise ValueError("an adapter needs a source checkpoint")
        return self.checkpoint.copy()

    def predict_proba(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_features(X, self.checkpoint_.spec.input_dim)
        return forward(self.checkpoint_, X, "inference")

    def predict(self, X):
        return predict_labels(self.predict_proba(X))

    def score(self, X, y):
        X = check_features(X)
        y = check_query_labels(y, X.shape[0], self.checkpoint_.spec.n_queries,
                               self.checkpoint_.spec.n_classes)
        return float(np.mean(self.predict(X) == y))


class FrozenAdapter(_AdapterBase):
    """No-op reference: serves the source checkpoint unchanged."""

    def fit(self, X, y=None):
        self.checkpoint_ = self._start()
        return self


class AdaBNAdapter(_AdapterBase):
    """Stateless present-statistics normalization.

    ``fit`` keeps the checkpoint as-is; prediction normalizes every batch
    with its own statistics, so batch size 1 degenerates on purpose.
    """

    def fit(self, X, y=None):
        self.checkpoint_ = self._start()
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_features(X, self.checkpoint_.spec.input_dim)
        return adabn_forward(self.checkpoint_, X)


class EmaBNAdapter(_AdapterBase):
    """Fixed-coefficient moving-average update of the BN history statistics."""

    def __init__(self, checkpoint=None, momentum=0.1):
        super().__init__(checkpoint)
        self.momentum = momentum

    def fit(self, X, y=None):
        ckpt = self._start()
        X = check_features(X, ckpt.spec.input_dim)
        for row in X:
            ema_adapt_step(ckpt, row, self.momentum)
        self.checkpoint_ = ckpt
        return self


class TentAdapter(_AdapterBase):
    """Entropy minimization over the affine BN parameters, one step per sample."""

    def __init__(self, checkpoint=None, lr=1e-3):
        super().__init__(checkpoint)
        self.lr = lr

    def fit(self, X, y=None):
        ckpt = self._start()
        X = check_features(X, ckpt.spec.input_dim)
        for row in X:
            try:
                tent_adapt_step(ckpt, row, self.lr)
            except AbortSampleError:
                continue
        self.checkpoint_ = ckpt
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_features(X, self.checkpoint_.spec.input_dim)
        return adabn_forward(self.checkpoint_, X)


class LearnableBNAdapter(_AdapterBase):
    """Dual-stage mixing-coefficient adaptation over an unlabeled stream.

    ``fit`` consumes the stream in order: an unconditional low-rate stage,
    then a KL-rank-filtered high-rate stage against the frozen stage-one
    snapshot. The adapted history statistics land in ``checkpoint_`` and the
    per-sample trace in ``report_``.
    """

    def __init__(self, checkpoint=None, eta_stage1=8.0, eta_stage2=80.0,
                 alpha=0.1, phi_init=1e-5, n_stage1=None, n_stage2=None, seed=0):
        super().__init__(checkpoint)
        self.eta_stage1 = eta_stage1
        self.eta_stage2 = eta_stage2
        self.alpha = alpha
        self.phi_init = phi_init
        self.n_stage1 = n_stage1
        self.n_stage2 = n_stage2
        self.seed = seed

    def fit(self, X, y=None):
        ckpt = self._start()
        X = check_features(X, ckpt.spec.input_dim)
        config = AdaptConfig(
            eta_stage1=self.eta_stage1, eta_stage2=self.eta_stage2,
            alpha=self.alpha, phi_init=self.phi_init,
            n_stage1=self.n_stage1, n_stage2=self.n_stage2, seed=self.seed)
        self.report_ = run_dual_stage(ckpt, X, config)
        self.checkpoint_ = self.report_.checkpoint
        return self
