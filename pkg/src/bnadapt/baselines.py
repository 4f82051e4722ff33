"""Comparison adapters: frozen source BN, present-statistics normalization,
fixed-coefficient moving-average adaptation, and entropy minimization over
the affine BN parameters.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .exceptions import AbortSampleError, BnAdaptError
from .losses import em_loss
from .model import Checkpoint, forward_pass


def adabn_forward(ckpt: Checkpoint, x) -> np.ndarray:
    """Predictions normalized with present batch statistics only.

    No state is read beyond the affine parameters and none is written; this
    is the degenerate mixed forward with the coefficient pinned at one.
    """
    return forward_pass(ckpt, np.atleast_2d(x), "adabn").prob_array()


def ema_adapt_step(ckpt: Checkpoint, x, momentum: float) -> Checkpoint:
    """Blend history statistics toward the present batch with fixed momentum.

    Prediction-path statistics for this sample are the pre-update history
    values; the present statistics folded into the history are the ones the
    inference-mode propagation observed at each layer's input.
    """
    if not 0 <= momentum <= 1:
        raise ValueError("momentum must be in [0, 1]")
    fwd = forward_pass(ckpt, np.atleast_2d(x), "inference")
    for st, (mu_p, var_p) in zip(ckpt.bn, fwd.stats):
        st.mu_h = (1.0 - momentum) * st.mu_h + momentum * mu_p.data
        st.var_h = (1.0 - momentum) * st.var_h + momentum * var_p.data
    return ckpt


def tent_adapt_step(ckpt: Checkpoint, x, lr: float) -> Checkpoint:
    """One entropy-minimization gradient step on every gamma and beta.

    The forward uses present batch statistics, and only the entropy term is
    minimized. Vanilla gradient descent, one step per call; on a non-finite
    gradient the model is left unchanged.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tape = T.DiffTape()
    affines = [(tape.leaf(st.gamma), tape.leaf(st.beta)) for st in ckpt.bn]
    try:
        fwd = forward_pass(ckpt, x, "adabn", affines=affines)
        loss = None
        for p in fwd.probs:
            term = em_loss(p)
            loss = term if loss is None else T.add(loss, term)
        grads = T.backward(tape, loss)
    except BnAdaptError as exc:
        raise AbortSampleError(f"affine adaptation step failed: {exc}") from exc
    updates = []
    for g_leaf, b_leaf in affines:
        gg = grads[g_leaf.node].data
        gb = grads[b_leaf.node].data
        if not (np.all(np.isfinite(gg)) and np.all(np.isfinite(gb))):
            raise AbortSampleError("non-finite affine gradient")
        updates.append((gg, gb))
    for st, (gg, gb) in zip(ckpt.bn, updates):
        st.gamma = st.gamma - lr * gg
        st.beta = st.beta - lr * gb
    return ckpt
