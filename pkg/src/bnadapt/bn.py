"""Batch normalization with a learnable history/present statistics mixture.

Each layer keeps persistent history statistics plus one raw scalar mixing
coefficient. The forward pass blends history and present batch statistics
through the constrained coefficient without touching stored state; a separate
correction step overwrites the stored history once the coefficient has been
updated, so corrections compound across a sample stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import EmptyBatchError

# slope of the leaky rectifier that keeps the mixing coefficient nonnegative
PHI_LEAKY_SLOPE = -0.001

DEFAULT_EPS = 1e-5


@dataclass
class BnState:
    """Persistent per-layer record: history stats, affine params, raw phi."""

    mu_h: np.ndarray
    var_h: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    phi_raw: float = 0.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        self.mu_h = np.asarray(self.mu_h, dtype=np.float64)
        self.var_h = np.asarray(self.var_h, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if np.any(self.var_h < 0):
            raise ValueError("history variance must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @property
    def n_channels(self) -> int:
        return self.mu_h.shape[0]

    def copy(self) -> "BnState":
        return BnState(
            mu_h=self.mu_h.copy(),
            var_h=self.var_h.copy(),
            gamma=self.gamma.copy(),
            beta=self.beta.copy(),
            phi_raw=self.phi_raw,
            eps=self.eps,
        )


def phi_constrain(phi_raw: float) -> float:
    """Leaky rectification of the raw coefficient: x if x > 0 else -0.001*x.

    The output is never negative; mildly negative raw values map to small
    positive ones instead of being clipped to zero, so gradient signal
    survives.
    """
    phi_raw = float(phi_raw)
    if not np.isfinite(phi_raw):
        raise ValueError("phi_raw must be finite")
    return phi_raw if phi_raw > 0 else PHI_LEAKY_SLOPE * phi_raw


def bn_forward_mix(state: BnState, z, phi: T.Tensor | None = None):
    """Normalize ``z`` with history stats blended toward present batch stats.

    Returns ``(z_hat, mu_p, var_p)``. Stored state is never modified here.
    ``phi`` optionally supplies the raw coefficient as a tape-tracked tensor
    (same value as ``state.phi_raw``) so its gradient can flow through both
    the mixture and everything downstream.
    """
    z = T.as_tensor(z)
    if z.data.ndim != 2:
        raise ValueError(f"expected a 2-D batch, got shape {z.shape}")
    if z.data.shape[0] == 0:
        raise EmptyBatchError("bn_forward_mix needs at least one row")
    raw = phi if phi is not None else T.Tensor(state.phi_raw)
    phi_c = T.leaky_relu(raw, PHI_LEAKY_SLOPE)
    mu_p, var_p = T.batch_stats(z)
    mu = (1.0 - phi_c) * state.mu_h + phi_c * mu_p
    var = (1.0 - phi_c) * state.var_h + phi_c * var_p
    z_hat = (z - mu) / T.sqrt(var + state.eps) * state.gamma + state.beta
    return z_hat, mu_p, var_p


def bn_forward_inference(state: BnState, z) -> T.Tensor:
    """Normalize with stored history statistics only."""
    z = T.as_tensor(z)
    return (z - state.mu_h) / T.sqrt(T.as_tensor(state.var_h + state.eps)) * state.gamma + state.beta


def bn_forward_present(state: BnState, z, gamma: T.Tensor | None = None,
                       beta: T.Tensor | None = None):
    """Normalize with present batch statistics only (AdaBN behavior).

    ``gamma``/``beta`` optionally supply the affine parameters as tracked
    tensors, which is how entropy-minimization over the affine transform
    gets its gradients.
    """
    z = T.as_tensor(z)
    if z.data.ndim != 2:
        raise ValueError(f"expected a 2-D batch, got shape {z.shape}")
    if z.data.shape[0] == 0:
        raise EmptyBatchError("bn_forward_present needs at least one row")
    g = gamma if gamma is not None else T.Tensor(state.gamma)
    b = beta if beta is not None else T.Tensor(state.beta)
    mu_p, var_p = T.batch_stats(z)
    z_hat = (z - mu_p) / T.sqrt(var_p + state.eps) * g + b
    return z_hat, mu_p, var_p


def secondary_correct(state: BnState, mu_p: np.ndarray, var_p: np.ndarray,
                      phi_new: float) -> BnState:
    """Overwrite stored history stats with the phi_new-weighted blend.

    ``phi_new`` must already be constrained. The corrected values become the
    persistent history seen by the next sample.
    """
    mu_p = np.asarray(mu_p, dtype=np.float64)
    var_p = np.asarray(var_p, dtype=np.float64)
    if np.any(var_p < 0):
        raise ValueError("present variance must be nonnegative")
    new_var = (1.0 - phi_new) * state.var_h + phi_new * var_p
    if np.any(new_var < 0):
        # a coefficient above 1 can extrapolate past the present variance;
        # refusing the blend keeps the state invariant (var_h >= 0) intact
        raise ValueError("correction would make the history variance negative")
    state.mu_h = (1.0 - phi_new) * state.mu_h + phi_new * mu_p
    state.var_h = new_var
    return state


def reset_phi(state: BnState, phi_init: float) -> BnState:
    """Set the raw coefficient to ``phi_init``; statistics are untouched."""
    phi_init = float(phi_init)
    if not np.isfinite(phi_init):
        raise ValueError("phi_init must be finite")
    state.phi_raw = phi_init
    return state
