"""Nelson-Siegel (NS) and Svensson (NSS) loadings and fixed-decay OLS calibration."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve_data import CurveFamily, TenorGrid, YieldPanel
from .errors import DataError, RankError

DEFAULT_NS_LAMBDA = 0.0609
DEFAULT_NSS_LAMBDAS = (0.0609, 0.2)

_TAYLOR_CUTOFF = 1e-4


def _slope(x: np.ndarray) -> np.ndarray:
    """(1 - exp(-x)) / x with a 6-term Taylor expansion near zero."""
    x = np.asarray(x, dtype=float)
    small = x < _TAYLOR_CUTOFF
    xs = np.where(small, x, 0.0)
    series = 1 - xs / 2 + xs**2 / 6 - xs**3 / 24 + xs**4 / 120 - xs**5 / 720
    xl = np.where(small, 1.0, x)
    return np.where(small, series, -np.expm1(-xl) / xl)


def _check_positive(name: str, v) -> None:
    if np.any(np.asarray(v, dtype=float) <= 0) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {v}")


def ns_loadings(tau, lam: float) -> np.ndarray:
    """NS loadings (level, slope, curvature); shape ``tau.shape + (3,)``."""
    _check_positive("tau", tau)
    _check_positive("lambda", lam)
    x = lam * np.asarray(tau, dtype=float)
    s = _slope(x)
    return np.stack([np.ones_like(x), s, s - np.exp(-x)], axis=-1)


def nss_loadings(tau, lam1: float, lam2: float) -> np.ndarray:
    _check_positive("lambda2", lam2)
    ns = ns_loadings(tau, lam1)
    x2 = lam2 * np.asarray(tau, dtype=float)
    c2 = _slope(x2) - np.exp(-x2)
    return np.concatenate([ns, c2[..., None]], axis=-1)


def n_factors(model: str) -> int:
    if model == "NS":
        return 3
    if model == "NSS":
        return 4
    raise ValueError(f"model must be 'NS' or 'NSS', got {model!r}")


def default_lambdas(model: str) -> tuple[float, ...]:
    return (DEFAULT_NS_LAMBDA,) if n_factors(model) == 3 else DEFAULT_NSS_LAMBDAS


def loadings_matrix(tenors, lambdas: Sequence[float], model: str) -> np.ndarray:
    """Design matrix (M, k) for a tenor vector."""
    lambdas = tuple(lambdas)
    if n_factors(model) == 3:
        if len(lambdas) != 1:
            raise ValueError(f"NS takes one decay, got {lambdas}")
        return ns_loadings(tenors, lambdas[0])
    if len(lambdas) != 2:
        raise ValueError(f"NSS takes two decays, got {lambdas}")
    return nss_loadings(tenors, *lambdas)


@dataclass(frozen=True)
class NSFactors:
    beta0: float
    beta1: float
    beta2: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not np.isfinite([self.beta0, self.beta1, self.beta2]).all():
            raise ValueError("betas must be finite")

    def curve(self, tenors) -> np.ndarray:
        return ns_loadings(tenors, self.lam) @ np.array([self.beta0, self.beta1, self.beta2])


@dataclass(frozen=True)
class NSSFactors:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    lam1: float
    lam2: float

    def __post_init__(self):
        if not (self.lam1 > 0 and self.lam2 > 0):
            raise ValueError("lambdas must be positive")
        if abs(self.lam1 - self.lam2) <= 1e-8:
            raise ValueError("NSS decays must differ (|lambda1 - lambda2| > 1e-8)")
        if not np.isfinite([self.beta0, self.beta1, self.beta2, self.beta3]).all():
            raise ValueError("betas must be finite")

    def curve(self, tenors) -> np.ndarray:
        b = np.array([self.beta0, self.beta1, self.beta2, self.beta3])
        return nss_loadings(tenors, self.lam1, self.lam2) @ b


@dataclass(frozen=True)
class CurveFit:
    beta: np.ndarray
    residuals: np.ndarray


def _qr_solve(X: np.ndarray, y: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    if d.min() <= rtol * max(d.max(), 1e-300):
        raise RankError(f"rank-deficient design (|R_ii| min/max = {d.min():.3g}/{d.max():.3g})")
    return np.linalg.solve(R, Q.T @ y)


def fit_curve_ols(curve, grid: TenorGrid | Sequence[float], lambdas: Sequence[float], model: str = "NS") -> CurveFit:
    """Least-squares factor vector for one curve with fixed decays.

    ``grid`` may also be a plain tenor sequence in any order, matched
    positionally with ``curve``.
    """
    y = np.asarray(curve, dtype=float)
    tenors = grid.as_array() if isinstance(grid, TenorGrid) else np.asarray(grid, dtype=float)
    k = n_factors(model)
    if y.shape != tenors.shape:
        raise DataError(f"curve has shape {y.shape}, grid has {len(tenors)} tenors")
    if len(tenors) < k:
        raise RankError(f"{model} needs at least {k} tenors, got {len(tenors)}")
    if model == "NSS" and abs(lambdas[0] - lambdas[1]) <= 1e-8:
        raise RankError(f"NSS decays are equal ({lambdas[0]}, {lambdas[1]}): curvature columns collinear")
    X = loadings_matrix(tenors, lambdas, model)
    beta = _qr_solve(X, y)
    return CurveFit(beta, y - X @ beta)


@dataclass(frozen=True, eq=False)
class FactorSeries:
    family: CurveFamily
    dates: tuple[str, ...]
    values: np.ndarray  # (T, k)
    lambdas: tuple[float, ...]
    residual_sd: float
    model: str = "NS"

    def __post_init__(self):
        if self.values.shape[0] != len(self.dates):
            raise ValueError("one factor row per date required")
        if self.residual_sd < 0:
            raise ValueError("residual_sd must be >= 0")

    def select(self, dates: Sequence[str]) -> "FactorSeries":
        idx = [self.dates.index(d) for d in dates]
        return FactorSeries(self.family, tuple(dates), self.values[idx], self.lambdas, self.residual_sd, self.model)


def _fit_family(panel: YieldPanel, fi: int, X: np.ndarray, model: str) -> tuple[np.ndarray, np.ndarray]:
    fam = panel.families[fi]
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankError(f"family {fam.id}: rank-deficient {model} design for this grid/decays")
    Y = panel.rates[fi].T  # (M, T)
    B = np.linalg.solve(R, Q.T @ Y)
    return B.T, (Y - X @ B).T


def fit_panel(
    panel: YieldPanel,
    lambdas: Sequence[float] | None = None,
    model: str = "NS",
) -> dict[str, FactorSeries]:
    """Per-date OLS for every family; ``residual_sd`` pools all residuals of a family.

    The pooled estimate divides the residual sum of squares by its degrees of
    freedom ``T * (M - k)``; it is zero when the fit is exactly determined.
    """
    lambdas = tuple(default_lambdas(model) if lambdas is None else lambdas)
    k = n_factors(model)
    M = len(panel.grid)
    if M < k:
        raise RankError(f"{model} needs at least {k} tenors, grid has {M}")
    if model == "NSS" and abs(lambdas[0] - lambdas[1]) <= 1e-8:
        raise RankError(f"NSS decays are equal ({lambdas[0]}, {lambdas[1]}): curvature columns collinear")
    X = loadings_matrix(panel.grid.as_array(), lambdas, model)
    out = {}
    for f in panel.families:
        values, resid = _fit_family(panel, f.index, X, model)
        dof = resid.shape[0] * (M - k)
        sd = float(np.sqrt((resid**2).sum() / dof)) if dof > 0 else 0.0
        out[f.id] = FactorSeries(f, panel.dates, values, lambdas, sd, model)
    return out


def pooled_sse(panel: YieldPanel, lambdas: Sequence[float], model: str) -> float:
    X = loadings_matrix(panel.grid.as_array(), lambdas, model)
    return float(sum((_fit_family(panel, f.index, X, model)[1] ** 2).sum() for f in panel.families))


def search_lambdas(panel: YieldPanel, candidates: Sequence[Sequence[float]], model: str) -> tuple[float, ...]:
    """Pick the decay tuple with the smallest pooled SSE; rank-deficient candidates are skipped."""
    best, best_sse = None, np.inf
    for cand in candidates:
        cand = tuple(float(c) for c in cand)
        try:
            sse = pooled_sse(panel, cand, model)
        except RankError:
            continue
        if sse < best_sse:
            best, best_sse = cand, sse
    if best is None:
        raise RankError("no admissible decay candidate")
    return best


def factor_series_to_csv(series: dict[str, FactorSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    first = next(iter(series.values()))
    k = first.values.shape[1]
    lam_cols = ["lambda1"] if len(first.lambdas) == 1 else ["lambda1", "lambda2"]
    w.writerow(["family", "date", *[f"beta{j}" for j in range(k)], *lam_cols, "residual_sd"])
    for fs in series.values():
        for d, row in zip(fs.dates, fs.values):
            w.writerow([fs.family.id, d, *map(repr, map(float, row)), *map(repr, fs.lambdas), repr(fs.residual_sd)])
    return buf.getvalue()
