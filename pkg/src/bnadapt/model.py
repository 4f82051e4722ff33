"""Toy multi-query classifier: shared dense backbone, one BN layer per hidden
layer, and independent per-query linear heads feeding row-wise softmax.

The query heads emulate a detection-style model that emits several class
distributions per input, so losses that double-sum over queries and classes
are exercised nontrivially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .bn import BnState, bn_forward_inference, bn_forward_mix, bn_forward_present
from .exceptions import EmptyBatchError, NumericError, ShapeError
from .losses import PROB_CLAMP

BN_MODES = ("train-mix", "inference", "adabn")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (32, 16)
    n_queries: int = 4
    n_classes: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if len(self.hidden_dims) < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("need at least one positive hidden dim")
        if self.n_queries < 1:
            raise ValueError("n_queries must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")


class Checkpoint:
    """Model spec plus all weights and per-layer BN state.

    Treated as immutable by training (which always returns a fresh one);
    adaptation drivers operate on their own ``copy()``.
    """

    def __init__(self, spec: ModelSpec, layers, bn, heads):
        self.spec = spec
        self.layers = layers  # list of (W, b) per hidden layer
        self.bn = bn          # list of BnState, one per hidden layer
        self.heads = heads    # list of (W, b), one per query
        self._validate()

    def _validate(self):
        if len(self.layers) != len(self.spec.hidden_dims):
            raise ShapeError("layer count does not match spec")
        if len(self.bn) != len(self.spec.hidden_dims):
            raise ShapeError("BN state count does not match spec")
        if len(self.heads) != self.spec.n_queries:
            raise ShapeError("head count does not match spec")
        fan_in = self.spec.input_dim
        for (w, b), st, width in zip(self.layers, self.bn, self.spec.hidden_dims):
            if w.shape != (fan_in, width) or b.shape != (width,):
                raise ShapeError(f"hidden layer weights have shape {w.shape}, "
                                 f"expected {(fan_in, width)}")
            if st.n_channels != width:
                raise ShapeError("BN state width does not match layer")
            fan_in = width
        for w, b in self.heads:
            if w.shape != (fan_in, self.spec.n_classes) or b.shape != (self.spec.n_classes,):
                raise ShapeError("head weights do not match spec")

    def copy(self) -> "Checkpoint":
        return Checkpoint(
            self.spec,
            [(w.copy(), b.copy()) for w, b in self.layers],
            [st.copy() for st in self.bn],
            [(w.copy(), b.copy()) for w, b in self.heads],
        )


def init_checkpoint(spec: ModelSpec, seed: int = 0) -> Checkpoint:
    """He-style seeded weight init; BN history starts at mean 0, variance 1."""
    rng = np.random.default_rng(seed)
    layers, bn = [], []
    fan_in = spec.input_dim
    for width in spec.hidden_dims:
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
        layers.append((w, np.zeros(width)))
        bn.append(BnState(
            mu_h=np.zeros(width),
            var_h=np.ones(width),
            gamma=np.ones(width),
            beta=np.zeros(width),
        ))
        fan_in = width
    heads = []
    for _ in range(spec.n_queries):
        w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, spec.n_classes))
        heads.append((w, np.zeros(spec.n_classes)))
    return Checkpoint(spec, layers, bn, heads)


class ForwardPass:
    """Everything one forward produced: per-query prob tensors and BN stats."""

    __slots__ = ("probs", "stats")

    def __init__(self, probs, stats):
        self.probs = probs  # list of (n, C) tensors, one per query
        self.stats = stats  # list of (mu_p, var_p) tensor pairs, one per BN layer

    def prob_array(self) -> np.ndarray:
        """Values as an (n, queries, classes) array."""
        return np.stack([p.data for p in self.probs], axis=1)


def forward_pass(ckpt: Checkpoint, x, bn_mode: str, *, phis=None, affines=None,
                 weights=None, heads=None) -> ForwardPass:
    """Network forward with a selectable BN statistics path.

    ``phis``, ``affines``, ``weights`` and ``heads`` optionally supply
    tape-tracked stand-ins for the corresponding checkpoint values so that
    gradients can be taken with respect to exactly those parameters; whatever
    is not supplied enters the computation as a constant.
    """
    if bn_mode not in BN_MODES:
        raise ValueError(f"unknown bn_mode {bn_mode!r}, expected one of {BN_MODES}")
    h = T.as_tensor(x)
    if h.data.ndim != 2:
        raise ShapeError(f"input must be 2-D (batch, features), got {h.shape}")
    if h.data.shape[1] != ckpt.spec.input_dim:
        raise ShapeError(f"input has {h.data.shape[1]} features, "
                         f"model expects {ckpt.spec.input_dim}")
    if h.data.shape[0] == 0:
        raise EmptyBatchError("forward needs at least one sample")

    stats = []
    for i, ((w, b), st) in enumerate(zip(ckpt.layers, ckpt.bn)):
        wt, bt = weights[i] if weights is not None else (T.Tensor(w), T.Tensor(b))
        z = T.matmul(h, wt) + bt
        if bn_mode == "inference":
            z_hat = bn_forward_inference(st, z)
            mu_p, var_p = T.batch_stats(z)
        elif bn_mode == "adabn":
            g, bb = affines[i] if affines is not None else (None, None)
            z_hat, mu_p, var_p = bn_forward_present(st, z, gamma=g, beta=bb)
        else:
            phi = phis[i] if phis is not None else None
            z_hat, mu_p, var_p = bn_forward_mix(st, z, phi=phi)
        stats.append((mu_p, var_p))
        h = T.relu(z_hat)

    probs = []
    for q, (w, b) in enumerate(ckpt.heads):
        wt, bt = heads[q] if heads is not None else (T.Tensor(w), T.Tensor(b))
        logits = T.matmul(h, wt) + bt
        probs.append(T.softmax(logits))
    return ForwardPass(probs, stats)


def forward(ckpt: Checkpoint, x, bn_mode: str = "inference") -> np.ndarray:
    """Per-sample prediction batches as an (n, queries, classes) array."""
    return forward_pass(ckpt, x, bn_mode).prob_array()


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax class per query: (n, Q, C) probabilities -> (n, Q) labels."""
    return np.argmax(probs, axis=2)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-query accuracy of an (n, Q, C) prediction array."""
    pred = predict_labels(probs)
    return float(np.mean(pred == np.asarray(labels)))


def train_source(spec: ModelSpec, x, y, seed: int = 0, epochs: int = 40,
                 lr: float = 0.1, batch_size: int = 32,
                 bn_momentum: float = 0.1) -> Checkpoint:
    """Cross-entropy training on labeled source data.

    BN layers normalize with batch statistics and accumulate history by
    exponential moving average. Deterministic under a fixed seed; a fresh
    model is initialized and returned, so nothing the caller holds is
    mutated.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyBatchError("training needs a nonempty 2-D feature matrix")
    if y.shape != (x.shape[0], spec.n_queries):
        raise ShapeError(f"labels must have shape {(x.shape[0], spec.n_queries)}")

    ckpt = init_checkpoint(spec, seed=seed)
    if epochs == 0:
        return ckpt
    rng = np.random.default_rng(seed + 1)
    n = x.shape[0]
    n_q = spec.n_queries

    # one-hot targets per query, built once
    onehots = np.zeros((n, n_q, spec.n_classes))
    for q in range(n_q):
        onehots[np.arange(n), q, y[:, q]] = 1.0

    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            xb = x[idx]
            tape = T.DiffTape()
            weights = [(tape.leaf(w), tape.leaf(b)) for w, b in ckpt.layers]
            affines = [(tape.leaf(st.gamma), tape.leaf(st.beta)) for st in ckpt.bn]
            head_leaves = [(tape.leaf(w), tape.leaf(b)) for w, b in ckpt.heads]
            fwd = forward_pass(ckpt, xb, "adabn", weights=weights,
                               affines=affines, heads=head_leaves)

            loss = None
            for q in range(n_q):
                logp = T.log(T.clamp_min(fwd.probs[q], PROB_CLAMP))
                term = T.neg(T.sum_all(T.mul(T.Tensor(onehots[idx, q]), logp)))
                loss = term if loss is None else T.add(loss, term)
            loss = T.div(loss, float(len(idx) * n_q))
            if not np.isfinite(loss.data):
                raise NumericError("training loss went non-finite; lower the learning rate")

            grads = T.backward(tape, loss)
            new_layers = [
                (w.data - lr * grads[w.node].data, b.data - lr * grads[b.node].data)
                for w, b in weights
            ]
            new_heads = [
                (w.data - lr * grads[w.node].data, b.data - lr * grads[b.node].data)
                for w, b in head_leaves
            ]
            for st, (g, bb), (mu_p, var_p) in zip(ckpt.bn, affines, fwd.stats):
                st.gamma = g.data - lr * grads[g.node].data
                st.beta = bb.data - lr * grads[bb.node].data
                st.mu_h = (1.0 - bn_momentum) * st.mu_h + bn_momentum * mu_p.data
                st.var_h = (1.0 - bn_momentum) * st.var_h + bn_momentum * var_p.data
            ckpt.layers = new_layers
            ckpt.heads = new_heads
    return ckpt
