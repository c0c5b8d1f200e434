"""Dataset containers, validation, and CSV ingestion.

Both containers are immutable after construction (the underlying numpy
arrays are locked), so they can be shared freely across concurrent
estimator runs. CSV files are UTF-8, comma separated, with a mandatory
header row and "." as the decimal separator. An explicit column map is
always required; the loaders never guess bindings from column order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFile,
    MissingColumn,
    NonBinaryIndicator,
    NonFiniteValue,
    ValidationError,
)
from .weights import PANEL_CELLS, RC_CELLS, cell4_index, cell8_index


def _locked(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_binary(name: str, v: np.ndarray) -> None:
    bad = ~np.isin(v, (0, 1))
    if bad.any():
        row = int(np.argmax(bad)) + 1
        raise NonBinaryIndicator(name, row, repr(v[bad][0]))


@dataclass(frozen=True)
class PanelDataset:
    """Panel design: covariates, group/domain indicators, pre/post outcomes."""

    x: np.ndarray
    g: np.ndarray
    d: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        g = np.asarray(self.g, dtype=np.int64)
        d = np.asarray(self.d, dtype=np.int64)
        y0 = np.asarray(self.y0, dtype=float)
        y1 = np.asarray(self.y1, dtype=float)
        n = x.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one unit")
        for name, v in (("g", g), ("d", d), ("y0", y0), ("y1", y1)):
            if v.shape != (n,):
                raise DimensionMismatch(
                    f"column {name!r} has length {v.shape}, expected ({n},)"
                )
        _check_binary("g", g)
        _check_binary("d", d)
        if not np.isfinite(x).all():
            raise ValidationError("covariate matrix contains non-finite values")
        if not (np.isfinite(y0).all() and np.isfinite(y1).all()):
            raise ValidationError("outcomes contain non-finite values")
        if not np.any((g == 1) & (d == 1)):
            raise ValidationError(
                "no unit has g=1 and d=1; positivity part (i) requires a "
                "non-empty treated cell"
            )
        object.__setattr__(self, "x", _locked(x))
        object.__setattr__(self, "g", _locked(g))
        object.__setattr__(self, "d", _locked(d))
        object.__setattr__(self, "y0", _locked(y0))
        object.__setattr__(self, "y1", _locked(y1))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def delta(self) -> np.ndarray:
        """Outcome change y1 - y0."""
        return self.y1 - self.y0

    @property
    def cells(self) -> np.ndarray:
        """Canonical (g, d) cell index per unit."""
        return cell4_index(self.g, self.d)

    def take(self, idx: np.ndarray) -> "PanelDataset":
        """Row subset (bootstrap resamples); revalidates invariants."""
        return PanelDataset(
            self.x[idx], self.g[idx], self.d[idx], self.y0[idx], self.y1[idx]
        )


@dataclass(frozen=True)
class RcDataset:
    """Repeated cross-sections: one observed outcome per unit, period t."""

    x: np.ndarray
    g: np.ndarray
    d: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        g = np.asarray(self.g, dtype=np.int64)
        d = np.asarray(self.d, dtype=np.int64)
        t = np.asarray(self.t, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        n = x.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one unit")
        for name, v in (("g", g), ("d", d), ("t", t), ("y", y)):
            if v.shape != (n,):
                raise DimensionMismatch(
                    f"column {name!r} has length {v.shape}, expected ({n},)"
                )
        for name, v in (("g", g), ("d", d), ("t", t)):
            _check_binary(name, v)
        if not np.isfinite(x).all():
            raise ValidationError("covariate matrix contains non-finite values")
        if not np.isfinite(y).all():
            raise ValidationError("outcomes contain non-finite values")
        if not np.any((g == 1) & (d == 1) & (t == 1)):
            raise ValidationError(
                "no unit has g=1, d=1, t=1; positivity part (i) requires a "
                "non-empty treated cell"
            )
        object.__setattr__(self, "x", _locked(x))
        object.__setattr__(self, "g", _locked(g))
        object.__setattr__(self, "d", _locked(d))
        object.__setattr__(self, "t", _locked(t))
        object.__setattr__(self, "y", _locked(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def cells(self) -> np.ndarray:
        """Canonical (g, d, t) cell index per unit."""
        return cell8_index(self.g, self.d, self.t)

    def take(self, idx: np.ndarray) -> "RcDataset":
        return RcDataset(
            self.x[idx], self.g[idx], self.d[idx], self.t[idx], self.y[idx]
        )


@dataclass(frozen=True)
class CellCounts:
    """Per-cell unit tallies with an empty-cell flag."""

    counts: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    @property
    def empty_cells(self) -> list:
        return [cell for cell, c in self.counts.items() if c == 0]

    @property
    def has_empty(self) -> bool:
        return len(self.empty_cells) > 0


def cell_counts_panel(data: PanelDataset) -> CellCounts:
    """Exact tallies over the four (g, d) cells."""
    idx = data.cells
    tallies = np.bincount(idx, minlength=4)
    return CellCounts({cell: int(tallies[cell4_index(*cell)]) for cell in PANEL_CELLS})


def cell_counts_rc(data: RcDataset) -> CellCounts:
    """Exact tallies over the eight (g, d, t) cells."""
    idx = data.cells
    tallies = np.bincount(idx, minlength=8)
    return CellCounts({cell: int(tallies[cell8_index(*cell)]) for cell in RC_CELLS})


# --- CSV ingestion ----------------------------------------------------------


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyFile(f"{path}: file is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise EmptyFile(f"{path}: no data rows below the header")
    return header, body


def _column(header: list[str], name: str) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise MissingColumn(name) from None


def _parse_indicator(column: str, row: int, raw: str) -> int:
    s = raw.strip()
    if s == "0":
        return 0
    if s == "1":
        return 1
    raise NonBinaryIndicator(column, row, raw)


def _parse_real(column: str, row: int, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise NonFiniteValue(column, row, raw) from None
    if not math.isfinite(v):
        raise NonFiniteValue(column, row, raw)
    return v


def _resolve_covariates(header, column_map, bound_names):
    explicit = column_map.get("x")
    if explicit is not None:
        for name in explicit:
            _column(header, name)
        return list(explicit)
    return [name for name in header if name not in bound_names]


def load_panel_csv(path, column_map: dict) -> PanelDataset:
    """Load a panel dataset.

    ``column_map`` must bind "g", "d", "y0" and "y1" to header names; an
    optional "x" entry lists covariate columns explicitly. Without it,
    every unbound column is treated as a covariate. Row numbers in
    errors count data rows from 1 (the header is row 0).
    """
    for key in ("g", "d", "y0", "y1"):
        if key not in column_map:
            raise ValidationError(f"column map must bind {key!r}")
    header, body = _read_rows(path)
    cols = {key: _column(header, column_map[key]) for key in ("g", "d", "y0", "y1")}
    x_names = _resolve_covariates(
        header, column_map, {column_map[k] for k in ("g", "d", "y0", "y1")}
    )
    x_cols = [_column(header, name) for name in x_names]

    n = len(body)
    g = np.empty(n, dtype=np.int64)
    d = np.empty(n, dtype=np.int64)
    y0 = np.empty(n)
    y1 = np.empty(n)
    x = np.empty((n, len(x_cols)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ValidationError(f"data row {i} has {len(row)} fields, expected {len(header)}")
        g[i - 1] = _parse_indicator(column_map["g"], i, row[cols["g"]])
        d[i - 1] = _parse_indicator(column_map["d"], i, row[cols["d"]])
        y0[i - 1] = _parse_real(column_map["y0"], i, row[cols["y0"]])
        y1[i - 1] = _parse_real(column_map["y1"], i, row[cols["y1"]])
        for j, c in enumerate(x_cols):
            x[i - 1, j] = _parse_real(x_names[j], i, row[c])
    return PanelDataset(x=x, g=g, d=d, y0=y0, y1=y1)


def load_rc_csv(path, column_map: dict) -> RcDataset:
    """Load a repeated-cross-sections dataset; bindings g, d, t, y."""
    for key in ("g", "d", "t", "y"):
        if key not in column_map:
            raise ValidationError(f"column map must bind {key!r}")
    header, body = _read_rows(path)
    cols = {key: _column(header, column_map[key]) for key in ("g", "d", "t", "y")}
    x_names = _resolve_covariates(
        header, column_map, {column_map[k] for k in ("g", "d", "t", "y")}
    )
    x_cols = [_column(header, name) for name in x_names]

    n = len(body)
    g = np.empty(n, dtype=np.int64)
    d = np.empty(n, dtype=np.int64)
    t = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    x = np.empty((n, len(x_cols)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ValidationError(f"data row {i} has {len(row)} fields, expected {len(header)}")
        g[i - 1] = _parse_indicator(column_map["g"], i, row[cols["g"]])
        d[i - 1] = _parse_indicator(column_map["d"], i, row[cols["d"]])
        t[i - 1] = _parse_indicator(column_map["t"], i, row[cols["t"]])
        y[i - 1] = _parse_real(column_map["y"], i, row[cols["y"]])
        for j, c in enumerate(x_cols):
            x[i - 1, j] = _parse_real(x_names[j], i, row[c])
    return RcDataset(x=x, g=g, d=d, t=t, y=y)


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def write_panel_csv(data: PanelDataset, path) -> None:
    """Write a panel dataset with columns x1..xk, g, d, y0, y1."""
    names = [f"x{j + 1}" for j in range(data.k)] + ["g", "d", "y0", "y1"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(data.n):
            writer.writerow(
                [_fmt(v) for v in data.x[i]]
                + [str(int(data.g[i])), str(int(data.d[i]))]
                + [_fmt(data.y0[i]), _fmt(data.y1[i])]
            )


def write_rc_csv(data: RcDataset, path) -> None:
    """Write an rc dataset with columns x1..xk, g, d, t, y."""
    names = [f"x{j + 1}" for j in range(data.k)] + ["g", "d", "t", "y"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(data.n):
            writer.writerow(
                [_fmt(v) for v in data.x[i]]
                + [str(int(data.g[i])), str(int(data.d[i])), str(int(data.t[i]))]
                + [_fmt(data.y[i])]
            )
