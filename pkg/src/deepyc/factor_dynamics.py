"""AR(1)/VAR(1) dynamics for NS/NSS factors and Gaussian interval forecasts.

These are the four classical benchmarks (NS_AR, NS_VAR, NSS_AR, NSS_VAR).
Interval forecasts propagate the one-step factor covariance through the
linear loading map and add the measurement variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve_data import SplitSpec, TenorGrid, YieldPanel, split
from .errors import DataError, RankError
from .forecasts import ForecastTable
from .nelson_siegel import FactorSeries, default_lambdas, fit_panel, loadings_matrix
from .stats import two_sided_z


@dataclass(frozen=True)
class ARModel:
    psi0: float
    psi1: float
    sigma_zeta: float
    warning: str | None = None

    def __post_init__(self):
        if self.sigma_zeta < 0:
            raise ValueError("sigma_zeta must be >= 0")


@dataclass(frozen=True, eq=False)
class VARModel:
    a0: np.ndarray
    A: np.ndarray
    E: np.ndarray
    warning: str | None = None

    def __post_init__(self):
        if not np.allclose(self.E, self.E.T, atol=1e-14):
            raise ValueError("innovation covariance must be symmetric")
        if len(self.E) and np.linalg.eigvalsh(self.E).min() < -1e-10:
            raise ValueError("innovation covariance must be positive semidefinite")


def fit_ar(series) -> ARModel:
    """OLS of x_t on (1, x_{t-1}); innovation sd uses denominator T - 3."""
    x = np.asarray(series, dtype=float)
    T = len(x)
    if x.ndim != 1 or T < 3:
        raise DataError(f"AR(1) fit needs a 1-D series with T >= 3, got shape {x.shape}")
    lag, cur = x[:-1], x[1:]
    if np.ptp(lag) == 0.0:
        raise RankError("AR(1) fit: lagged regressor is constant")
    X = np.column_stack([np.ones(T - 1), lag])
    coef, *_ = np.linalg.lstsq(X, cur, rcond=None)
    resid = cur - X @ coef
    sigma = float(np.sqrt(resid @ resid / (T - 3))) if T > 3 else 0.0
    warning = f"|psi1| = {abs(coef[1]):.4g} >= 1 (non-stationary)" if abs(coef[1]) >= 1 else None
    return ARModel(float(coef[0]), float(coef[1]), sigma, warning)


def fit_var(series) -> VARModel:
    """Equation-by-equation OLS; residual covariance with denominator T - 1 - (k + 1)."""
    Y = np.asarray(series, dtype=float)
    if Y.ndim != 2:
        raise DataError("VAR(1) fit needs a T x k matrix")
    T, k = Y.shape
    if T < k + 2:
        raise DataError(f"VAR(1) fit needs T >= k + 2 = {k + 2}, got {T}")
    X = np.column_stack([np.ones(T - 1), Y[:-1]])
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankError("VAR(1) fit: lagged design is rank deficient")
    B = np.linalg.solve(R, Q.T @ Y[1:])  # (k+1, k)
    resid = Y[1:] - X @ B
    dof = T - 1 - (k + 1)
    E = resid.T @ resid / dof if dof > 0 else np.zeros((k, k))
    E = 0.5 * (E + E.T)
    A = B[1:].T
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    warning = f"spectral radius {rho:.4g} >= 1 (non-stationary)" if rho >= 1 else None
    return VARModel(B[0].copy(), A, E, warning)


def forecast_factors(model: Sequence[ARModel] | VARModel, last) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead factor mean and covariance."""
    last = np.asarray(last, dtype=float)
    if isinstance(model, VARModel):
        if last.shape != model.a0.shape:
            raise ValueError(f"last has shape {last.shape}, model has {model.a0.shape}")
        return model.a0 + model.A @ last, model.E.copy()
    models = list(model)
    if len(models) != len(last):
        raise ValueError(f"{len(models)} AR models for {len(last)} factors")
    mean = np.array([m.psi0 + m.psi1 * x for m, x in zip(models, last)])
    cov = np.diag([m.sigma_zeta**2 for m in models])
    return mean, cov


@dataclass(frozen=True, eq=False)
class BenchmarkForecast:
    family: str
    as_of: str
    lower: np.ndarray
    central: np.ndarray
    upper: np.ndarray
    alpha: float

    def __post_init__(self):
        if not (np.all(self.lower <= self.central) and np.all(self.central <= self.upper)):
            raise ValueError("benchmark interval ordering violated")


def benchmark_forecast(
    factors_mean,
    factors_cov,
    lambdas: Sequence[float],
    grid: TenorGrid,
    residual_sd: float,
    alpha: float = 0.95,
    family: str = "",
    as_of: str = "",
) -> BenchmarkForecast:
    """Gaussian interval: central = l'mean, var = l' cov l + residual_sd^2."""
    z = two_sided_z(alpha)
    model = "NS" if len(lambdas) == 1 else "NSS"
    X = loadings_matrix(grid.as_array(), lambdas, model)
    mean = np.asarray(factors_mean, dtype=float)
    cov = np.asarray(factors_cov, dtype=float)
    central = X @ mean
    var = np.einsum("mi,ij,mj->m", X, cov, X) + residual_sd**2
    sd = np.sqrt(np.clip(var, 0.0, None))
    return BenchmarkForecast(family, as_of, central - z * sd, central, central + z * sd, alpha)


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BenchmarkRun:
    name: str
    forecasts: ForecastTable
    dynamics: dict[str, Sequence[ARModel] | VARModel]
    factors: dict[str, FactorSeries]
    warnings: list[str]


def run_benchmark(
    panel: YieldPanel,
    t0: str,
    model: str = "NSS",
    dynamics: str = "VAR",
    alpha: float = 0.95,
    lambdas: Sequence[float] | None = None,
    refit: bool = False,
) -> BenchmarkRun:
    """Calibrate on the learning sample, then forecast every test date one step ahead.

    By default dynamics parameters and ``residual_sd`` are frozen at ``t0``;
    with ``refit`` they are re-estimated on all data up to each forecast
    origin. Factors for the origin come from the per-date calibration of the
    observed curve at that origin.
    """
    if dynamics not in ("AR", "VAR"):
        raise ValueError(f"dynamics must be 'AR' or 'VAR', got {dynamics!r}")
    lambdas = tuple(default_lambdas(model) if lambdas is None else lambdas)
    learn, test = split(panel, SplitSpec(t0))
    all_factors = fit_panel(panel, lambdas, model)
    learn_factors = fit_panel(learn, lambdas, model)
    fitted: dict = {}
    warnings: list[str] = []
    rows = []

    def fit_dynamics(fid: str, values: np.ndarray, origin: str):
        try:
            if dynamics == "AR":
                dyn = [fit_ar(values[:, j]) for j in range(values.shape[1])]
                warnings.extend(f"{fid} beta{j} ({origin}): {m.warning}" for j, m in enumerate(dyn) if m.warning)
            else:
                dyn = fit_var(values)
                if dyn.warning:
                    warnings.append(f"{fid} ({origin}): {dyn.warning}")
        except (DataError, ValueError) as exc:
            raise type(exc)(f"family {fid}: {exc}") from exc
        return dyn

    for f in panel.families:
        fs = learn_factors[f.id]
        dyn = fit_dynamics(f.id, fs.values, learn.dates[-1])
        fitted[f.id] = dyn
        values = all_factors[f.id].values
        for d in test.dates:
            t = panel.date_index(d)
            origin = panel.dates[t - 1]
            step_dyn, sd = dyn, fs.residual_sd
            if refit and origin != learn.dates[-1]:
                step_dyn = fit_dynamics(f.id, values[:t], origin)
                sd = fit_panel(panel.select_dates(panel.dates[:t]), lambdas, model)[f.id].residual_sd
            mean, cov = forecast_factors(step_dyn, values[t - 1])
            rows.append(benchmark_forecast(mean, cov, lambdas, panel.grid, sd, alpha, f.id, origin))
    table = ForecastTable.from_rows(
        [(r.family, r.as_of, r.lower, r.central, r.upper) for r in rows],
        panel.grid.tenors,
        model=f"{model}_{dynamics}",
    )
    return BenchmarkRun(f"{model}_{dynamics}", table, fitted, learn_factors, warnings)
