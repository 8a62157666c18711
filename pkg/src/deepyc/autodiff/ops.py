"""Differentiable primitives: arithmetic, dense layers, embeddings, attention, dropout."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, apply_op, as_tensor

ACTIVATIONS = ("linear", "tanh", "sigmoid", "softplus", "relu")


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return apply_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return apply_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return apply_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, c: float) -> Tensor:
    return apply_op("scale", x.data * c, (x,), lambda g: (g * c,))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return apply_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten_last(x: Tensor, n: int = 2) -> Tensor:
    """Merge the last ``n`` axes (row-major), e.g. (B, L+1, q) -> (B, (L+1) q)."""
    return reshape(x, x.shape[:-n] + (int(np.prod(x.shape[-n:])),))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return apply_op("sum", x.data.sum(), (x,), lambda g: (np.broadcast_to(g, shape),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return apply_op("mean", x.data.mean(), (x,), lambda g: (np.broadcast_to(g / n, shape),))


# --------------------------------------------------------------------------
# activations


def softplus_np(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mid = np.abs(x) <= 30.0
    xm = np.where(mid, x, 0.0)
    return np.where(x > 30.0, x, np.where(mid, np.log1p(np.exp(xm)), np.exp(np.minimum(x, 0.0))))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation(x: Tensor, phi: str) -> Tensor:
    d = x.data
    if phi == "linear":
        return x
    if phi == "tanh":
        y = np.tanh(d)
        return apply_op("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))
    if phi == "sigmoid":
        y = sigmoid_np(d)
        return apply_op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))
    if phi == "softplus":
        return apply_op("softplus", softplus_np(d), (x,), lambda g: (g * sigmoid_np(d),))
    if phi == "relu":
        return apply_op("relu", np.maximum(d, 0.0), (x,), lambda g: (g * (d > 0),))
    raise ValueError(f"unknown activation {phi!r}; choose from {ACTIVATIONS}")


# --------------------------------------------------------------------------
# layers


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T + b`` over the last axis; leading axes are batch/sequence axes."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ValueError(f"linear: input width {x.shape[-1:]} does not match weight {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"linear: bias shape {b.shape} does not match weight {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data
    xd, Wd = x.data, W.data
    q0, q1 = W.shape[1], W.shape[0]

    def vjp(g):
        g2 = g.reshape(-1, q1)
        gx = g @ Wd
        gW = g2.T @ xd.reshape(-1, q0)
        return (gx, gW) if b is None else (gx, gW, g2.sum(axis=0))

    inputs = (x, W) if b is None else (x, W, b)
    return apply_op("linear", out, inputs, vjp)


def dense(x: Tensor, W: Tensor, w0: Tensor, phi: str = "linear") -> Tensor:
    """phi(w0 + W x), applied row-wise when ``x`` has leading axes (time-distributed)."""
    if phi not in ACTIVATIONS:
        raise ValueError(f"unknown activation {phi!r}; choose from {ACTIVATIONS}")
    return activation(linear(x, W, w0), phi)


def embed(index, table: Tensor) -> Tensor:
    """Row lookup; gradient scatters back into the selected rows only."""
    idx = np.asarray(index, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"embedding index out of range [0, {n}): {idx.tolist()}")
    shape = table.shape

    def vjp(g):
        gt = np.zeros(shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return apply_op("embed", table.data[idx], (table,), vjp)


def softmax_np(b: np.ndarray) -> np.ndarray:
    z = b - b.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    d = Q.shape[-1]
    return softmax_np(Q @ np.swapaxes(K, -1, -2) / math.sqrt(d))


def attention(Q: Tensor, K: Tensor, V: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V with d the key width; leading axes are batch axes."""
    if not (Q.shape == K.shape == V.shape) or Q.ndim < 2:
        raise ValueError(f"attention: Q, K, V shapes must match, got {Q.shape}, {K.shape}, {V.shape}")
    d = Q.shape[-1]
    if d < 1:
        raise ValueError("attention: key width must be >= 1")
    c = 1.0 / math.sqrt(d)
    B = Q.data @ np.swapaxes(K.data, -1, -2) * c
    E = np.exp(B - B.max(axis=-1, keepdims=True))
    Z = E.sum(axis=-1, keepdims=True)
    S = E / Z
    # normalise after the product so equal scores reproduce column means of V exactly
    out = (E @ V.data) / Z
    Qd, Kd, Vd = Q.data, K.data, V.data

    def vjp(g):
        dV = np.swapaxes(S, -1, -2) @ g
        dS = g @ np.swapaxes(Vd, -1, -2)
        dB = S * (dS - (dS * S).sum(axis=-1, keepdims=True))
        dQ = dB @ Kd * c
        dK = np.swapaxes(dB, -1, -2) @ Qd * c
        return dQ, dK, dV

    return apply_op("attention", out, (Q, K, V), vjp)


def dropout(x: Tensor, keep: float, mode: str = "train", rng: np.random.Generator | None = None) -> Tensor:
    """Multiply by Bernoulli(keep) draws in training; scale by ``keep`` in evaluation."""
    if not 0.0 <= keep <= 1.0:
        raise ValueError(f"dropout keep probability must lie in [0, 1], got {keep}")
    if mode == "eval":
        return x if keep == 1.0 else scale(x, keep)
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if keep == 1.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) < keep).astype(np.float64)
    return apply_op("dropout", x.data * mask, (x,), lambda g: (g * mask,))
