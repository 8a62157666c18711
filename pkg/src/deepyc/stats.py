"""Small statistical helpers with no table lookups."""

from __future__ import annotations

import math

import numpy as np


def normal_cdf(x: float) -> float:
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float, tol: float = 1e-14) -> float:
    """Inverse standard normal CDF.

    Bisection on the error function to bracket the root, then Newton steps to polish it.
    Accurate to well below 1e-10 over (1e-300, 1 - 1e-16).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        # work in the lower tail, where the CDF has full relative precision
        return -normal_quantile(1.0 - p, tol)
    lo, hi = -40.0, 40.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    x = 0.5 * (lo + hi)
    for _ in range(50):
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        step = (normal_cdf(x) - p) / pdf
        x_new = min(max(x - step, lo), hi)
        if abs(x_new - x) < tol:
            x = x_new
            break
        x = x_new
    return x


def two_sided_z(alpha: float) -> float:
    """z such that a symmetric Gaussian interval of half-width z*sd has coverage ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"coverage alpha must lie in (0, 1), got {alpha}")
    return normal_quantile(0.5 * (1.0 + alpha))


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson correlation, or ``None`` when either series is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson expects two 1-D series of equal length")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        return None
    r = float(dx @ dy) / (sx * sy)
    return max(-1.0, min(1.0, r))


def spearman(x: np.ndarray, y: np.ndarray) -> float | None:
    """Rank correlation (average ranks for ties)."""

    def ranks(a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="mergesort")
        r = np.empty(len(a))
        r[order] = np.arange(len(a), dtype=float)
        for v in np.unique(a):
            mask = a == v
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    return pearson(ranks(x), ranks(y))
