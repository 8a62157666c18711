"""Feature extraction, PCA and factor correlation for model interpretability."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .curve_data import WindowSample
from .errors import DataError
from .model.network import DeepYCModel
from .nelson_siegel import FactorSeries
from .stats import pearson


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # (N, q_I + (L+1) q_A)
    family: tuple[str, ...]
    as_of: tuple[str, ...]
    columns: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError("feature matrix width does not match its column labels")
        if not (len(self.family) == len(self.as_of) == self.values.shape[0]):
            raise ValueError("one label per feature row required")
        if not np.isfinite(self.values).all():
            raise DataError("feature matrix has non-finite values")


def extract_features(model: DeepYCModel, windows: Sequence[WindowSample]) -> FeatureMatrix:
    """Embedding plus flattened attention output for each window (eval mode, before dropout)."""
    data = model.arrays(windows)
    leaves = model.params.leaves()
    x = model.features(leaves, data.histories).data
    e = leaves["embed_I"].data[data.family_index]
    c = model.config
    cols = tuple(f"e{j}" for j in range(c.q_I)) + tuple(f"x{l}_{j}" for l in range(c.L + 1) for j in range(c.q_A))
    return FeatureMatrix(np.hstack([e, x]), data.family_ids, data.as_of, cols)


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns (eigenvalues, eigenvectors as columns), sorted by decreasing eigenvalue.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("jacobi_eigh needs a square matrix")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    for sweep in range(max_sweeps):
        off = np.linalg.norm(A[~np.eye(n, dtype=bool)])
        if off <= tol * scale or scale == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                if sweep > 3 and abs(A[p, p]) + g == abs(A[p, p]) and abs(A[q, q]) + g == abs(A[q, q]):
                    # below roundoff of both diagonal entries
                    A[p, q] = A[q, p] = 0.0
                    continue
                diff = A[q, q] - A[p, p]
                if abs(diff) + g == abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * ap - s * aq, s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        raise ArithmeticError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True, eq=False)
class PCAResult:
    components: np.ndarray  # (k, width), orthonormal rows
    explained_variance: np.ndarray  # (k,)
    explained_ratio: np.ndarray  # (k,)
    eigenvalues: np.ndarray  # all, decreasing
    scores: np.ndarray  # (N, k)
    mean: np.ndarray
    scale: np.ndarray | None

    @property
    def n_components(self) -> int:
        return len(self.explained_variance)

    @property
    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_ratio)


def pca(X, k: int, standardize: bool = False) -> PCAResult:
    """PCA on the sample covariance (or correlation when ``standardize``)."""
    X = np.asarray(X.values if isinstance(X, FeatureMatrix) else X, dtype=float)
    n, width = X.shape
    if n < 2:
        raise DataError("PCA needs at least two rows")
    if not 1 <= k <= width:
        raise ValueError(f"k must lie in [1, {width}], got {k}")
    mean = X.mean(axis=0)
    Z = X - mean
    scale = None
    if standardize:
        scale = Z.std(axis=0, ddof=1)
        scale = np.where(scale > 0, scale, 1.0)
        Z = Z / scale
    C = Z.T @ Z / (n - 1)
    w, V = jacobi_eigh(C)
    w = np.clip(w, 0.0, None)
    # deterministic sign: largest-magnitude loading positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.where(V[idx, np.arange(width)] < 0, -1.0, 1.0)
    total = w.sum()
    ratio = w / total if total > 0 else np.zeros_like(w)
    comps = V[:, :k].T
    return PCAResult(comps, w[:k], ratio[:k], w, Z @ comps.T, mean, scale)


@dataclass(frozen=True)
class CorrelationTable:
    mean_abs: dict[str, float | None]
    pairs: dict[str, np.ndarray]  # family -> (k PCs, n factors), NaN where undefined

    def to_csv(self, metadata: Mapping[str, str] | None = None) -> str:
        buf = io.StringIO()
        meta = {"pairing": "mean |pearson r| over all (PC, factor) pairs; undefined pairs excluded"}
        meta.update(metadata or {})
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "mean_abs_pearson"])
        for f, v in self.mean_abs.items():
            w.writerow([f, "" if v is None else repr(v)])
        return buf.getvalue()


def factor_correlation(
    scores: np.ndarray,
    family: Sequence[str],
    as_of: Sequence[str],
    factors: Mapping[str, FactorSeries],
) -> CorrelationTable:
    """Per family, average |r| between every PC score series and every factor series."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != len(family) or len(family) != len(as_of):
        raise DataError("scores and instance labels are misaligned")
    fam = np.asarray(family)
    mean_abs, pairs = {}, {}
    for f in dict.fromkeys(family):
        if f not in factors:
            raise DataError(f"no factor series for family {f!r}")
        rows = np.flatnonzero(fam == f)
        dates = [as_of[i] for i in rows]
        missing = sorted(set(dates) - set(factors[f].dates))
        if missing:
            raise DataError(f"family {f}: factor series lacks dates {missing[:3]}")
        B = factors[f].select(dates).values
        S = scores[rows]
        table = np.full((S.shape[1], B.shape[1]), np.nan)
        for i in range(S.shape[1]):
            for j in range(B.shape[1]):
                r = pearson(S[:, i], B[:, j]) if len(rows) > 1 else None
                if r is not None:
                    table[i, j] = r
        pairs[f] = table
        ok = np.abs(table[~np.isnan(table)])
        mean_abs[f] = float(ok.mean()) if ok.size else None
    return CorrelationTable(mean_abs, pairs)


def pca_to_csv(result: PCAResult, columns: Sequence[str] | None = None) -> tuple[str, str]:
    """(loadings CSV, explained-variance CSV)."""
    cols = list(columns) if columns is not None else [f"f{j}" for j in range(result.components.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", *cols])
    for i, row in enumerate(result.components):
        w.writerow([f"PC{i + 1}", *map(repr, map(float, row))])
    buf2 = io.StringIO()
    w2 = csv.writer(buf2, lineterminator="\n")
    w2.writerow(["component", "eigenvalue", "ratio", "cumulative_ratio"])
    for i, (ev, r, c) in enumerate(zip(result.explained_variance, result.explained_ratio, result.cumulative_ratio)):
        w2.writerow([f"PC{i + 1}", repr(float(ev)), repr(float(r)), repr(float(c))])
    return buf.getvalue(), buf2.getvalue()
