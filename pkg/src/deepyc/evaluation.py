"""Point and interval accuracy metrics for triple forecasts."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .curve_data import YieldPanel, format_tenor
from .errors import DataError
from .forecasts import ForecastTable

# display multipliers; reports always hold raw values
DISPLAY_SCALE = {"mse": 1e5, "mae": 1e2, "picp": 1.0, "mpiw": 1.0}


def _aligned(*arrays) -> list[np.ndarray]:
    out = [np.asarray(a, dtype=float) for a in arrays]
    shape = out[0].shape
    for a in out[1:]:
        if a.shape != shape:
            raise DataError(f"misaligned arrays: {shape} vs {a.shape}")
    if out[0].size == 0:
        raise DataError("no points to evaluate")
    return out


def point_metrics(actual, central) -> tuple[float, float]:
    y, yhat = _aligned(actual, central)
    err = y - yhat
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def interval_metrics(actual, lower, upper) -> tuple[float, float]:
    """Coverage of the closed interval [lower, upper] and its mean width."""
    y, lo, hi = _aligned(actual, lower, upper)
    if np.any(lo > hi):
        k = int(np.sum(lo > hi))
        raise DataError(f"{k} crossing intervals (lower > upper)")
    inside = (lo <= y) & (y <= hi)
    return float(np.mean(inside)), float(np.mean(hi - lo))


@dataclass
class MetricReport:
    model: str
    n: int
    mse: float
    mae: float
    picp: float
    mpiw: float
    by_family: dict[str, "MetricReport"] = field(default_factory=dict)
    by_tenor: dict[str, "MetricReport"] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("a report needs n > 0")
        if not 0.0 <= self.picp <= 1.0:
            raise ValueError(f"picp {self.picp} outside [0, 1]")
        if self.mpiw < 0:
            raise ValueError(f"mpiw {self.mpiw} < 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("model", "n", "mse", "mae", "picp", "mpiw")}
        d["by_family"] = {k: v.to_dict() for k, v in self.by_family.items()}
        d["by_tenor"] = {k: v.to_dict() for k, v in self.by_tenor.items()}
        d.update(self.extra)
        return d

    def to_json(self, metadata: Mapping[str, str] | None = None) -> str:
        d = self.to_dict()
        if metadata:
            d["metadata"] = dict(metadata)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def to_csv(self, metadata: Mapping[str, str] | None = None) -> str:
        """One row per scope: global, each family, each tenor."""
        buf = io.StringIO()
        for k, v in (metadata or {}).items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "scope", "key", "n", "mse", "mae", "picp", "mpiw"])

        def row(scope, key, r):
            w.writerow([self.model, scope, key, r.n, repr(r.mse), repr(r.mae), repr(r.picp), repr(r.mpiw)])

        row("all", "", self)
        for k, r in self.by_family.items():
            row("family", k, r)
        for k, r in self.by_tenor.items():
            row("tenor", k, r)
        return buf.getvalue()


def _report(model: str, y, lo, c, hi) -> MetricReport:
    mse, mae = point_metrics(y, c)
    picp, mpiw = interval_metrics(y, lo, hi)
    return MetricReport(model, int(np.asarray(y).size), mse, mae, picp, mpiw)


def actuals_for(table: ForecastTable, panel: YieldPanel) -> np.ndarray:
    """Realised curve at the date after each forecast's ``as_of``."""
    if tuple(float(t) for t in panel.grid.tenors) != table.tenors:
        raise DataError(f"tenor grids differ: forecasts {list(table.tenors)}, panel {list(panel.grid.tenors)}")
    fam = {f: i for i, f in enumerate(panel.family_ids)}
    out = np.empty((len(table), len(table.tenors)))
    for k, (f, d) in enumerate(table.keys):
        if f not in fam:
            raise DataError(f"forecast family {f!r} not in panel")
        nxt = panel.next_date(d)
        if nxt is None:
            raise DataError(f"no realised curve after {d} for family {f}")
        out[k] = panel.curve(f, nxt)
    return out


def evaluate(table: ForecastTable, actual: np.ndarray) -> MetricReport:
    """Global report with per-family and per-tenor breakdowns."""
    y, lo, c, hi = _aligned(actual, table.lower, table.central, table.upper)
    rep = _report(table.model, y, lo, c, hi)
    fams = np.asarray(table.family)
    for f in dict.fromkeys(table.family):
        m = fams == f
        rep.by_family[f] = _report(table.model, y[m], lo[m], c[m], hi[m])
    for j, t in enumerate(table.tenors):
        rep.by_tenor[format_tenor(t)] = _report(table.model, y[:, j], lo[:, j], c[:, j], hi[:, j])
    return rep


def evaluate_against(table: ForecastTable, panel: YieldPanel) -> MetricReport:
    return evaluate(table, actuals_for(table, panel))


@dataclass(frozen=True)
class MPIWIdentity:
    mean_member_mpiw: float
    ensemble_mpiw: float
    n_members: int
    n_points: int
    tol: float = 1e-12

    @property
    def difference(self) -> float:
        return abs(self.mean_member_mpiw - self.ensemble_mpiw)

    @property
    def passed(self) -> bool:
        return self.difference <= self.tol

    def to_dict(self) -> dict:
        return {
            "mean_member_mpiw": self.mean_member_mpiw,
            "ensemble_mpiw": self.ensemble_mpiw,
            "difference": self.difference,
            "n_members": self.n_members,
            "n_points": self.n_points,
            "passed": self.passed,
        }


def check_mpiw_identity(members: Sequence[ForecastTable], ensemble: ForecastTable, tol: float = 1e-12) -> MPIWIdentity:
    """Compare mean member MPIW with the MPIW of the averaged forecasts."""
    if not members:
        raise ValueError("no member forecasts")
    for m in members:
        if m.keys != ensemble.keys or m.tenors != ensemble.tenors:
            raise DataError("member and ensemble forecasts cover different instances")
    widths = [float(np.mean(m.upper - m.lower)) for m in members]
    ens = float(np.mean(ensemble.upper - ensemble.lower))
    return MPIWIdentity(float(np.mean(widths)), ens, len(members), int(ensemble.lower.size), tol)


# --------------------------------------------------------------------------
# presentation


def display_value(metric: str, raw: float, digits: int = 4) -> str:
    return f"{raw * DISPLAY_SCALE[metric]:.{digits}f}"


def render_table(reports: Sequence[MetricReport], digits: int = 4) -> str:
    """Plain-text table; MSE shown x1e5 and MAE x1e2."""
    head = ["Model", "MSE", "MAE", "PICP", "MPIW"]
    rows = [[r.model] + [display_value(k, getattr(r, k), digits) for k in ("mse", "mae", "picp", "mpiw")] for r in reports]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(head, widths)))]
    for r in rows:
        lines.append("  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(r, widths))))
    lines.append("MSE scaled by 1e5, MAE scaled by 1e2.")
    return "\n".join(lines) + "\n"
