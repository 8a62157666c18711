"""Tabular (lower, central, upper) forecasts and their CSV format.

CSV columns: ``family,as_of,tenor,lower,central,upper,model`` plus ``sd`` for
Gaussian-head forecasts. Leading ``#`` lines carry metadata such as the
config hash.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .curve_data import format_tenor
from .errors import DataError

COLUMNS = ("family", "as_of", "tenor", "lower", "central", "upper", "model")


@dataclass(frozen=True, eq=False)
class ForecastTable:
    model: str
    tenors: tuple[float, ...]
    family: tuple[str, ...]
    as_of: tuple[str, ...]
    lower: np.ndarray  # (N, M)
    central: np.ndarray
    upper: np.ndarray
    sd: np.ndarray | None = None

    def __post_init__(self):
        n, m = len(self.family), len(self.tenors)
        for name in ("lower", "central", "upper") + (("sd",) if self.sd is not None else ()):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n, m):
                raise DataError(f"{name} has shape {arr.shape}, expected {(n, m)}")
            object.__setattr__(self, name, arr)
        if len(self.as_of) != n:
            raise DataError("family and as_of columns differ in length")

    def __len__(self) -> int:
        return len(self.family)

    @property
    def keys(self) -> list[tuple[str, str]]:
        return list(zip(self.family, self.as_of))

    @classmethod
    def from_rows(cls, rows: Sequence[tuple], tenors: Sequence[float], model: str) -> "ForecastTable":
        """``rows`` of (family, as_of, lower, central, upper[, sd])."""
        tenors = tuple(float(t) for t in tenors)
        if not rows:
            empty = np.empty((0, len(tenors)))
            return cls(model, tenors, (), (), empty, empty, empty)
        has_sd = len(rows[0]) > 5
        return cls(
            model,
            tenors,
            tuple(r[0] for r in rows),
            tuple(r[1] for r in rows),
            np.stack([r[2] for r in rows]),
            np.stack([r[3] for r in rows]),
            np.stack([r[4] for r in rows]),
            np.stack([r[5] for r in rows]) if has_sd else None,
        )

    def to_csv(self, metadata: Mapping[str, str] | None = None) -> str:
        buf = io.StringIO()
        for k, v in (metadata or {}).items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS + (("sd",) if self.sd is not None else ()))
        tn = [format_tenor(t) for t in self.tenors]
        for i in range(len(self)):
            for j, t in enumerate(tn):
                row = [
                    self.family[i],
                    self.as_of[i],
                    t,
                    repr(float(self.lower[i, j])),
                    repr(float(self.central[i, j])),
                    repr(float(self.upper[i, j])),
                    self.model,
                ]
                if self.sd is not None:
                    row.append(repr(float(self.sd[i, j])))
                w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: str = "<forecast>") -> "ForecastTable":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise DataError(f"{source}: empty forecast file")
        reader = csv.reader(lines)
        header = tuple(next(reader))
        if header[: len(COLUMNS)] != COLUMNS:
            raise DataError(f"{source}: header must start with {','.join(COLUMNS)}")
        has_sd = "sd" in header
        cells: dict[tuple[str, str], dict[float, tuple]] = {}
        order: list[tuple[str, str]] = []
        tenors: set[float] = set()
        models = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = tuple(float(x) for x in row[3:6]) + ((float(row[7]),) if has_sd else ())
                t = float(row[2])
            except ValueError:
                raise DataError(f"{source}:{lineno}: non-numeric value") from None
            key = (row[0], row[1])
            if key not in cells:
                cells[key] = {}
                order.append(key)
            if t in cells[key]:
                raise DataError(f"{source}:{lineno}: duplicate (family, as_of, tenor)")
            cells[key][t] = vals
            tenors.add(t)
            models.add(row[6])
        grid = sorted(tenors)
        rows = []
        for key in order:
            obs = cells[key]
            if len(obs) != len(grid):
                raise DataError(f"{source}: forecast for {key} is missing tenors")
            arr = np.array([obs[t] for t in grid])
            rows.append((key[0], key[1], *arr.T))
        return cls.from_rows(rows, grid, model=models.pop() if len(models) == 1 else "mixed")


def average_tables(tables: Sequence[ForecastTable], model: str = "ensemble") -> ForecastTable:
    """Componentwise mean of aligned tables (lower, central, upper averaged separately)."""
    if not tables:
        raise ValueError("no tables to average")
    first = tables[0]
    for t in tables[1:]:
        if t.keys != first.keys or t.tenors != first.tenors:
            raise DataError("member forecasts cover different instances or tenors")
    sd = None
    if all(t.sd is not None for t in tables):
        sd = np.mean([t.sd for t in tables], axis=0)
    return ForecastTable(
        model,
        first.tenors,
        first.family,
        first.as_of,
        np.mean([t.lower for t in tables], axis=0),
        np.mean([t.central for t in tables], axis=0),
        np.mean([t.upper for t in tables], axis=0),
        sd,
    )
