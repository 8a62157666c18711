"""Multi-family yield-curve panels: loading, validation, windowing, splitting
and synthetic generation.

Rates are stored as decimals (0.0123 for 1.23%). Dates are opaque ISO-8601
labels (``YYYY-MM`` or ``YYYY-MM-DD``) that are only ever ordered, never used
for calendar arithmetic.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .rng import named_rng

_DATE_RE = re.compile(r"^\d{4}-\d{2}(-\d{2})?$")
LONG_HEADER = ("family", "date", "tenor", "rate")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def format_tenor(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


@dataclass(frozen=True)
class TenorGrid:
    tenors: tuple[float, ...]
    unit: str = "months"

    def __post_init__(self):
        tenors = tuple(float(t) for t in self.tenors)
        object.__setattr__(self, "tenors", tenors)
        if not tenors:
            raise DataError("tenor grid is empty")
        if any(not np.isfinite(t) or t <= 0 for t in tenors):
            raise DataError(f"tenors must be positive, got {tenors}")
        if any(b <= a for a, b in zip(tenors, tenors[1:])):
            raise DataError(f"tenors must be strictly increasing, got {tenors}")

    def __len__(self) -> int:
        return len(self.tenors)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tenors, dtype=float)


@dataclass(frozen=True)
class CurveFamily:
    id: str
    index: int


@dataclass(frozen=True, eq=False)
class YieldPanel:
    """Dense panel ``rates[family, date, tenor]``."""

    families: tuple[CurveFamily, ...]
    grid: TenorGrid
    dates: tuple[str, ...]
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
        object.__setattr__(self, "rates", _frozen(self.rates))
        ids = [f.id for f in self.families]
        if len(set(ids)) != len(ids):
            raise DataError(f"family labels must be unique, got {ids}")
        if [f.index for f in self.families] != list(range(len(ids))):
            raise DataError("family indices must be 0..n-1 in order")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        expected = (len(self.families), len(self.dates), len(self.grid))
        if self.rates.shape != expected:
            raise DataError(f"rates shape {self.rates.shape} does not match {expected}")
        if not np.isfinite(self.rates).all():
            raise DataError("rates must be finite")

    @property
    def family_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.families)

    def family(self, family_id: str) -> CurveFamily:
        for f in self.families:
            if f.id == family_id:
                return f
        raise DataError(f"unknown family {family_id!r}; panel has {list(self.family_ids)}")

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(date)
        except ValueError:
            raise DataError(f"date {date!r} not in panel") from None

    def curve(self, family_id: str, date: str) -> np.ndarray:
        return self.rates[self.family(family_id).index, self.date_index(date)]

    def next_date(self, date: str) -> str | None:
        i = self.date_index(date)
        return self.dates[i + 1] if i + 1 < len(self.dates) else None

    def select_dates(self, dates: Sequence[str]) -> "YieldPanel":
        idx = [self.date_index(d) for d in dates]
        return YieldPanel(self.families, self.grid, tuple(dates), self.rates[:, idx, :])


@dataclass(frozen=True, eq=False)
class WindowSample:
    family: CurveFamily
    history: np.ndarray  # (L+1, M); row 0 is date t-L, row L is date t
    target: np.ndarray | None  # curve at t+1, None when forecasting past the panel end
    as_of: str

    def __post_init__(self):
        object.__setattr__(self, "history", _frozen(self.history))
        if self.target is not None:
            object.__setattr__(self, "target", _frozen(self.target))
        if self.history.ndim != 2:
            raise DataError("window history must be a (L+1) x M matrix")
        if not np.isfinite(self.history).all():
            raise DataError("window history has missing values")


@dataclass(frozen=True)
class SplitSpec:
    t0: str


# --------------------------------------------------------------------------
# CSV input / output


def _check_date(value: str, where: str) -> str:
    value = value.strip()
    if not _DATE_RE.match(value):
        raise DataError(f"{where}: date {value!r} is not ISO-8601 (YYYY-MM or YYYY-MM-DD)")
    return value


def _parse_float(value: str, what: str, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DataError(f"{where}: cannot parse {what} {value!r}") from None
    if not np.isfinite(x):
        raise DataError(f"{where}: {what} {value!r} is not finite")
    return x


def _data_lines(text: str) -> list[tuple[int, list[str]]]:
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or (row[0].startswith("#")) or all(not c.strip() for c in row):
            continue
        rows.append((lineno, [c.strip() for c in row]))
    return rows


def _assemble(
    cells: Mapping[tuple[str, str], Mapping[float, float]],
    family_order: list[str],
    tenors: Iterable[float],
    unit: str,
) -> YieldPanel:
    grid = TenorGrid(tuple(sorted(set(tenors))), unit)
    dates = sorted({d for (_, d) in cells})
    rates = np.empty((len(family_order), len(dates), len(grid)))
    for fi, fam in enumerate(family_order):
        for di, d in enumerate(dates):
            obs = cells.get((fam, d))
            if obs is None:
                raise DataError(f"family {fam}, date {d}: no observations (panel must be dense)")
            for ti, t in enumerate(grid.tenors):
                if t not in obs:
                    raise DataError(f"family {fam}, date {d}: missing tenor {format_tenor(t)}")
                rates[fi, di, ti] = obs[t]
    families = tuple(CurveFamily(f, i) for i, f in enumerate(family_order))
    return YieldPanel(families, grid, tuple(dates), rates)


def parse_panel(
    text: str,
    layout: str = "auto",
    rate_scale: float = 1.0,
    tenor_unit: str = "months",
    source: str = "<string>",
) -> YieldPanel:
    """Parse CSV text in long (``family,date,tenor,rate``) or wide layout."""
    rows = _data_lines(text)
    if not rows:
        raise DataError(f"{source}: empty file")
    header_line, header = rows[0]
    header_l = tuple(h.lower() for h in header)
    if layout == "auto":
        layout = "long" if header_l == LONG_HEADER else "wide"
    if len(header_l) < 2 or header_l[:2] != ("family", "date"):
        raise DataError(f"{source}:{header_line}: header must start with 'family,date', got {header}")

    cells: dict[tuple[str, str], dict[float, float]] = {}
    family_order: list[str] = []
    tenors: set[float] = set()

    if layout == "long":
        if header_l != LONG_HEADER:
            raise DataError(f"{source}:{header_line}: long layout needs header {','.join(LONG_HEADER)}")
        for lineno, row in rows[1:]:
            where = f"{source}:{lineno}"
            if len(row) != 4:
                raise DataError(f"{where}: expected 4 fields, got {len(row)}")
            fam, date, tenor_s, rate_s = row
            if not fam:
                raise DataError(f"{where}: empty family label")
            date = _check_date(date, where)
            tenor = _parse_float(tenor_s, "tenor", where)
            if tenor <= 0:
                raise DataError(f"{where}: tenor must be positive, got {tenor_s}")
            if rate_s == "":
                raise DataError(f"{where}: family {fam}, date {date}: missing rate for tenor {tenor_s}")
            rate = _parse_float(rate_s, "rate", where) * rate_scale
            obs = cells.setdefault((fam, date), {})
            if tenor in obs:
                raise DataError(f"{where}: duplicate (family, date, tenor) = ({fam}, {date}, {tenor_s})")
            obs[tenor] = rate
            tenors.add(tenor)
            if fam not in family_order:
                family_order.append(fam)
    elif layout == "wide":
        tenor_cols = [
            _parse_float(h.lstrip("mMyY") if not _is_number(h) else h, "tenor column", f"{source}:{header_line}")
            for h in header[2:]
        ]
        if not tenor_cols:
            raise DataError(f"{source}:{header_line}: wide layout needs at least one tenor column")
        if len(set(tenor_cols)) != len(tenor_cols):
            raise DataError(f"{source}:{header_line}: duplicate tenor columns")
        tenors.update(tenor_cols)
        for lineno, row in rows[1:]:
            where = f"{source}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            fam, date = row[0], _check_date(row[1], where)
            if not fam:
                raise DataError(f"{where}: empty family label")
            if (fam, date) in cells:
                raise DataError(f"{where}: duplicate (family, date) = ({fam}, {date})")
            obs = {}
            for t, v, name in zip(tenor_cols, row[2:], header[2:]):
                if v == "":
                    raise DataError(f"{where}: family {fam}, date {date}: missing tenor {name}")
                obs[t] = _parse_float(v, "rate", where) * rate_scale
            cells[(fam, date)] = obs
            if fam not in family_order:
                family_order.append(fam)
    else:
        raise ValueError(f"unknown layout {layout!r}; use 'long', 'wide' or 'auto'")

    if not cells:
        raise DataError(f"{source}: no data rows")
    return _assemble(cells, family_order, tenors, tenor_unit)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_panel(
    path: str | Path,
    layout: str = "auto",
    rate_scale: float = 1.0,
    tenor_unit: str = "months",
) -> YieldPanel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return parse_panel(path.read_text(encoding="utf-8"), layout, rate_scale, tenor_unit, source=str(path))


def panel_to_csv(panel: YieldPanel, layout: str = "long") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if layout == "long":
        w.writerow(LONG_HEADER)
        for f in panel.families:
            for di, d in enumerate(panel.dates):
                for ti, t in enumerate(panel.grid.tenors):
                    w.writerow([f.id, d, format_tenor(t), repr(float(panel.rates[f.index, di, ti]))])
    elif layout == "wide":
        w.writerow(["family", "date", *[format_tenor(t) for t in panel.grid.tenors]])
        for f in panel.families:
            for di, d in enumerate(panel.dates):
                w.writerow([f.id, d, *[repr(float(x)) for x in panel.rates[f.index, di]]])
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Splitting and windowing


def split(panel: YieldPanel, spec: SplitSpec) -> tuple[YieldPanel, YieldPanel]:
    """Partition dates into learning (``<= t0``) and testing (``> t0``) panels."""
    t0 = str(spec.t0)
    if not (panel.dates[0] <= t0 < panel.dates[-1]):
        raise DataError(
            f"t0={t0} must satisfy {panel.dates[0]} <= t0 < {panel.dates[-1]} (both sides non-empty)"
        )
    learn = [d for d in panel.dates if d <= t0]
    test = [d for d in panel.dates if d > t0]
    return panel.select_dates(learn), panel.select_dates(test)


def make_windows(panel: YieldPanel, L: int) -> list[WindowSample]:
    """One sample per (family, t) with t-L >= first date and t+1 <= last date."""
    if L < 0:
        raise ValueError(f"look-back L must be >= 0, got {L}")
    T = len(panel.dates)
    if T < L + 2:
        raise DataError(f"need at least L+2={L + 2} dates for L={L}, panel has {T}")
    out = []
    for f in panel.families:
        r = panel.rates[f.index]
        for t in range(L, T - 1):
            out.append(WindowSample(f, r[t - L : t + 1], r[t + 1], panel.dates[t]))
    return out


def forecast_windows(panel: YieldPanel, L: int, as_of: Sequence[str] | None = None) -> list[WindowSample]:
    """Windows ending at each ``as_of`` date; targets filled when t+1 is in the panel."""
    dates = panel.dates
    as_of = list(dates[L:]) if as_of is None else list(as_of)
    out = []
    for f in panel.families:
        r = panel.rates[f.index]
        for d in as_of:
            t = panel.date_index(d)
            if t < L:
                raise DataError(f"as_of {d}: needs {L} earlier dates of history, panel has {t}")
            target = r[t + 1] if t + 1 < len(dates) else None
            out.append(WindowSample(f, r[t - L : t + 1], target, d))
    return out


@dataclass(frozen=True, eq=False)
class WindowArrays:
    histories: np.ndarray  # (N, L+1, M)
    targets: np.ndarray | None  # (N, M)
    family_index: np.ndarray  # (N,) int
    family_ids: tuple[str, ...]
    as_of: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.family_index)

    def take(self, idx: np.ndarray) -> "WindowArrays":
        return WindowArrays(
            self.histories[idx],
            None if self.targets is None else self.targets[idx],
            self.family_index[idx],
            tuple(self.family_ids[i] for i in idx),
            tuple(self.as_of[i] for i in idx),
        )


def stack_windows(samples: Sequence[WindowSample], family_map: Mapping[str, int] | None = None) -> WindowArrays:
    """Stack samples into arrays; ``family_map`` remaps family labels to model indices."""
    if not samples:
        raise DataError("no window samples")
    shapes = {s.history.shape for s in samples}
    if len(shapes) != 1:
        raise DataError(f"inconsistent window shapes {sorted(shapes)}")
    if family_map is None:
        idx = [s.family.index for s in samples]
    else:
        missing = sorted({s.family.id for s in samples} - set(family_map))
        if missing:
            raise DataError(f"unknown families {missing}; model knows {sorted(family_map)}")
        idx = [family_map[s.family.id] for s in samples]
    has_targets = all(s.target is not None for s in samples)
    return WindowArrays(
        np.stack([s.history for s in samples]),
        np.stack([s.target for s in samples]) if has_targets else None,
        np.asarray(idx, dtype=np.int64),
        tuple(s.family.id for s in samples),
        tuple(s.as_of for s in samples),
    )


# --------------------------------------------------------------------------
# Synthetic panels


@dataclass(frozen=True, eq=False)
class FactorProcess:
    """beta_t = a0 + A beta_{t-1} + eta_t, eta_t ~ N(0, cov); beta at date 0 = ``start``."""

    start: np.ndarray
    a0: np.ndarray
    A: np.ndarray
    cov: np.ndarray
    kind: str = "var"

    def __post_init__(self):
        k = len(np.atleast_1d(self.start))
        for name, shape in (("start", (k,)), ("a0", (k,)), ("A", (k, k)), ("cov", (k, k))):
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, arr)
        if self.kind == "ar":
            bad = np.abs(np.diag(self.A)) >= 1.0
            if bad.any():
                raise DataError(f"non-stationary AR spec: |psi1| >= 1 for factors {np.flatnonzero(bad).tolist()}")
        elif self.kind == "var":
            rho = float(np.max(np.abs(np.linalg.eigvals(self.A))))
            if rho >= 1.0:
                raise DataError(f"non-stationary VAR spec: spectral radius {rho:.6g} >= 1")
        elif self.kind != "constant":
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not np.allclose(self.cov, self.cov.T) or np.linalg.eigvalsh(self.cov).min() < -1e-12:
            raise DataError("innovation covariance must be symmetric positive semidefinite")

    @classmethod
    def constant(cls, beta: Sequence[float]) -> "FactorProcess":
        k = len(beta)
        return cls(np.asarray(beta), np.asarray(beta), np.zeros((k, k)), np.zeros((k, k)), "constant")

    @classmethod
    def ar(cls, psi0, psi1, sigma, start) -> "FactorProcess":
        psi0, psi1, sigma = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (psi0, psi1, sigma))
        return cls(np.asarray(start), psi0, np.diag(psi1), np.diag(sigma**2), "ar")

    @classmethod
    def var(cls, a0, A, cov, start) -> "FactorProcess":
        return cls(np.asarray(start), np.asarray(a0), np.asarray(A), np.asarray(cov), "var")

    def simulate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = len(self.start)
        w, v = np.linalg.eigh(self.cov)
        chol = v * np.sqrt(np.clip(w, 0.0, None))
        out = np.empty((n, k))
        out[0] = self.start
        for t in range(1, n):
            shock = chol @ rng.standard_normal(k) if self.kind != "constant" else 0.0
            out[t] = self.a0 + self.A @ out[t - 1] + shock
        return out


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    model: str  # "NS" or "NSS"
    grid: TenorGrid
    processes: Mapping[str, FactorProcess]
    n_dates: int
    lambdas: tuple[float, ...] = (0.0609,)
    noise_sd: float | Sequence[float] = 0.0
    start_month: str = "2000-01"
    family_noise_scale: Mapping[str, float] = field(default_factory=dict)


def monthly_labels(start: str, n: int) -> tuple[str, ...]:
    y, m = (int(p) for p in start.split("-")[:2])
    out = []
    for _ in range(n):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return tuple(out)


def synth_panel(gen: GeneratorSpec, seed: int) -> YieldPanel:
    """Simulate a panel whose curves follow the NS/NSS equation plus Gaussian noise."""
    from .nelson_siegel import loadings_matrix

    k = 3 if gen.model == "NS" else 4
    if gen.model not in ("NS", "NSS"):
        raise ValueError(f"model must be NS or NSS, got {gen.model!r}")
    if gen.n_dates < 1:
        raise ValueError("n_dates must be >= 1")
    X = loadings_matrix(gen.grid.as_array(), gen.lambdas, gen.model)
    noise_sd = np.broadcast_to(np.asarray(gen.noise_sd, dtype=float), (len(gen.grid),))
    if (noise_sd < 0).any():
        raise DataError("noise_sd must be non-negative")
    fams = list(gen.processes)
    rates = np.empty((len(fams), gen.n_dates, len(gen.grid)))
    for i, fam in enumerate(fams):
        proc = gen.processes[fam]
        if len(proc.start) != k:
            raise DataError(f"family {fam}: {gen.model} needs {k} factors, process has {len(proc.start)}")
        beta = proc.simulate(gen.n_dates, named_rng(seed, "synth", fam, "factors"))
        eps = named_rng(seed, "synth", fam, "noise").standard_normal((gen.n_dates, len(gen.grid)))
        scale = gen.family_noise_scale.get(fam, 1.0)
        rates[i] = beta @ X.T + eps * noise_sd * scale
    families = tuple(CurveFamily(f, i) for i, f in enumerate(fams))
    return YieldPanel(families, gen.grid, monthly_labels(gen.start_month, gen.n_dates), rates)


def synth_factor_paths(gen: GeneratorSpec, seed: int) -> dict[str, np.ndarray]:
    """The factor paths used by :func:`synth_panel` for the same ``seed``."""
    return {
        fam: proc.simulate(gen.n_dates, named_rng(seed, "synth", fam, "factors"))
        for fam, proc in gen.processes.items()
    }


def example_generator(
    n_families: int = 3,
    n_dates: int = 120,
    tenors: Sequence[float] = (3, 6, 12, 24, 36, 60, 84, 120, 240, 360),
    model: str = "NS",
    dynamics: str = "VAR",
    noise_sd: float | Sequence[float] = 1e-4,
    persistence: float = 0.95,
    innovation_sd: float = 1e-3,
    labels: Sequence[str] | None = None,
) -> GeneratorSpec:
    """Stationary factor worlds with family-specific means, for demos and tests.

    Family i has level mean 0.01 + 0.01 i, slope mean -0.01, curvature mean
    0.005 (and 0.0 for the second curvature term); each path starts at its
    mean. VAR families get a small negative level-slope coupling.
    """
    if dynamics not in ("AR", "VAR", "constant"):
        raise ValueError(f"dynamics must be AR, VAR or constant, got {dynamics!r}")
    k = 3 if model == "NS" else 4
    labels = list(labels) if labels is not None else [f"F{i + 1}" for i in range(n_families)]
    if len(labels) != n_families:
        raise ValueError("one label per family required")
    procs = {}
    for i, fam in enumerate(labels):
        mean = np.array([0.01 + 0.01 * i, -0.01, 0.005, 0.0][:k])
        if dynamics == "constant":
            procs[fam] = FactorProcess.constant(mean)
            continue
        A = np.eye(k) * persistence
        if dynamics == "VAR":
            A[0, 1] = -0.02
        a0 = (np.eye(k) - A) @ mean
        cov = np.eye(k) * innovation_sd**2
        procs[fam] = (
            FactorProcess.var(a0, A, cov, mean) if dynamics == "VAR" else FactorProcess.ar(a0, np.diag(A), np.sqrt(np.diag(cov)), mean)
        )
    lambdas = (0.0609,) if model == "NS" else (0.0609, 0.2)
    return GeneratorSpec(model, TenorGrid(tuple(float(t) for t in tenors)), procs, n_dates, lambdas, noise_sd)
