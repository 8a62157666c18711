"""Loss primitives: pinball, absolute/squared error, heteroscedastic Gaussian."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, apply_op, as_tensor


def _reduce(name: str, vals: np.ndarray, inputs, reduction: str, grads_from):
    """Shared mean/sum reduction; ``grads_from(scale_array)`` maps d(out)/d(vals) to input grads."""
    if reduction == "mean":
        k = 1.0 / max(vals.size, 1)
        out = vals.mean() if vals.size else np.float64(0.0)
    elif reduction == "sum":
        k = 1.0
        out = vals.sum()
    else:
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    return apply_op(name, out, inputs, lambda g: grads_from(g * k))


def pinball_loss(u: Tensor, level: float, reduction: str = "mean") -> Tensor:
    """Pinball loss of residuals ``u = y - yhat``: (1-a)|u| for u <= 0, a|u| for u > 0.

    The subgradient at u = 0 is taken as 0.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"pinball level must lie in (0, 1), got {level}")
    u = as_tensor(u)
    d = u.data
    vals = np.where(d > 0, level * d, (level - 1.0) * d)
    slope = np.where(d > 0, level, np.where(d < 0, level - 1.0, 0.0))
    return _reduce("pinball", vals, (u,), reduction, lambda s: (s * slope,))


def central_loss(u: Tensor, gamma: int, reduction: str = "mean") -> Tensor:
    """|u| for gamma = 1, u^2 for gamma = 2."""
    u = as_tensor(u)
    d = u.data
    if gamma == 1:
        vals, slope = np.abs(d), np.sign(d)
    elif gamma == 2:
        vals, slope = d * d, 2.0 * d
    else:
        raise ValueError(f"gamma must be 1 or 2, got {gamma}")
    return _reduce("central", vals, (u,), reduction, lambda s: (s * slope,))


def gaussian_nll(y, mu: Tensor, log_var: Tensor, reduction: str = "mean") -> Tensor:
    """(y - mu)^2 / sigma^2 + log(sigma^2) / 2 with sigma^2 = exp(log_var)."""
    y, mu, log_var = as_tensor(y), as_tensor(mu), as_tensor(log_var)
    if not (y.shape == mu.shape == log_var.shape):
        raise ValueError(f"gaussian_nll: shape mismatch {y.shape}, {mu.shape}, {log_var.shape}")
    r = y.data - mu.data
    inv_var = np.exp(-log_var.data)
    vals = r * r * inv_var + 0.5 * log_var.data

    def grads(s):
        d_mu = s * (-2.0 * r * inv_var)
        return -d_mu, d_mu, s * (0.5 - r * r * inv_var)

    return _reduce("gaussian_nll", vals, (y, mu, log_var), reduction, grads)
