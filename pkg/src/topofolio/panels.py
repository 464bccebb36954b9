"""Price and return panels, file loaders, rolling windows, and sub-series plans.

Loaders report the offending line or token position in their error messages so a
bad input file can be fixed without a debugger. Dates are opaque labels: the only
operation ever applied to them is an ordering check at load time (numeric if every
label parses as a number, lexicographic otherwise).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


_MISSING = {"", "na", "n/a", "nan", "null", "none", "."}


def _label_key(label: str):
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


def _check_ascending(labels, context: str):
    keys = [_label_key(l) for l in labels]
    for pos in range(1, len(keys)):
        if keys[pos - 1] >= keys[pos]:
            raise DataError(
                f"{context}: dates not increasing at row {pos + 1} "
                f"({labels[pos - 1]!r} >= {labels[pos]!r})"
            )


@dataclass(frozen=True)
class PricePanel:
    """Aligned price history for one index and n assets over T dates."""

    dates: tuple
    index_prices: np.ndarray   # (T,)
    asset_prices: np.ndarray   # (n, T)
    asset_ids: tuple

    def __post_init__(self):
        idx = np.asarray(self.index_prices, dtype=np.float64)
        assets = np.asarray(self.asset_prices, dtype=np.float64)
        if assets.ndim != 2:
            raise DataError("asset_prices must be 2-dimensional (n, T)")
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
        object.__setattr__(self, "asset_ids", tuple(str(a) for a in self.asset_ids))
        object.__setattr__(self, "index_prices", idx)
        object.__setattr__(self, "asset_prices", assets)
        T = len(self.dates)
        if T < 2:
            raise DataError(f"need at least 2 dates, got {T}")
        if idx.shape != (T,):
            raise DataError(f"index_prices length {idx.shape} != date count {T}")
        if assets.shape[1] != T:
            raise DataError(f"asset_prices has {assets.shape[1]} columns, expected {T}")
        if assets.shape[0] != len(self.asset_ids):
            raise DataError(
                f"{assets.shape[0]} asset rows but {len(self.asset_ids)} asset ids"
            )
        if len(set(self.asset_ids)) != len(self.asset_ids):
            raise DataError("asset ids are not unique")
        if not (np.all(np.isfinite(idx)) and np.all(np.isfinite(assets))):
            raise DataError("prices contain non-finite values")
        if (idx <= 0).any() or (assets <= 0).any():
            raise DataError("non-positive price")
        idx.setflags(write=False)
        assets.setflags(write=False)

    @property
    def n_assets(self) -> int:
        return self.asset_prices.shape[0]

    @property
    def n_dates(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnPanel:
    """Per-period returns derived from a PricePanel; kind is 'log' or 'simple'."""

    kind: str
    dates: tuple               # labels of the return periods (panel dates[1:])
    index_returns: np.ndarray  # (T-1,)
    asset_returns: np.ndarray  # (n, T-1)
    asset_ids: tuple

    def __post_init__(self):
        if self.kind not in ("log", "simple"):
            raise DataError(f"unknown return kind {self.kind!r}")
        idx = np.asarray(self.index_returns, dtype=np.float64)
        assets = np.asarray(self.asset_returns, dtype=np.float64)
        object.__setattr__(self, "index_returns", idx)
        object.__setattr__(self, "asset_returns", assets)
        if assets.ndim != 2 or idx.ndim != 1:
            raise DataError("return arrays have wrong dimensionality")
        if assets.shape[1] != idx.shape[0] or idx.shape[0] != len(self.dates):
            raise DataError("return arrays disagree on period count")
        idx.setflags(write=False)
        assets.setflags(write=False)

    @property
    def n_periods(self) -> int:
        return self.index_returns.shape[0]


def compute_returns(panel: PricePanel, kind: str = "log") -> ReturnPanel:
    """Turn a price panel into a return panel ('log' or 'simple')."""
    if kind == "log":
        idx = np.diff(np.log(panel.index_prices))
        assets = np.diff(np.log(panel.asset_prices), axis=1)
    elif kind == "simple":
        idx = panel.index_prices[1:] / panel.index_prices[:-1] - 1.0
        assets = panel.asset_prices[:, 1:] / panel.asset_prices[:, :-1] - 1.0
    else:
        raise DataError(f"unknown return kind {kind!r}")
    return ReturnPanel(
        kind=kind,
        dates=panel.dates[1:],
        index_returns=idx,
        asset_returns=assets,
        asset_ids=panel.asset_ids,
    )


def load_csv_prices(path, index_column: str) -> PricePanel:
    """Load a wide CSV (first column date label, remaining columns price series).

    Rows containing a missing value are dropped (listwise deletion); a
    non-positive or unparseable numeric price is an error with its line number.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise DataError(f"{path}: header has fewer than 2 columns")
        if index_column not in header[1:]:
            raise DataError(f"{path}: index column {index_column!r} not in header")
        series_names = header[1:]
        idx_pos = series_names.index(index_column)
        dates = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            cells = [c.strip() for c in row[1:]]
            if any(c.lower() in _MISSING for c in cells):
                continue  # listwise deletion
            values = np.empty(len(cells))
            for k, cell in enumerate(cells):
                try:
                    values[k] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: unparseable price {cell!r} "
                        f"in column {series_names[k]!r}"
                    ) from None
                if not math.isfinite(values[k]) or values[k] <= 0:
                    raise DataError(
                        f"{path}:{lineno}: non-positive price {cell!r} "
                        f"in column {series_names[k]!r}"
                    )
            dates.append(row[0].strip())
            rows.append(values)
        if len(rows) < 2:
            raise DataError(f"{path}: fewer than 2 usable rows after cleaning")
        _check_ascending(dates, str(path))
        data = np.vstack(rows)          # (T, n_series)
        asset_ids = [n for n in series_names if n != index_column]
        asset_cols = [k for k, n in enumerate(series_names) if n != index_column]
        return PricePanel(
            dates=tuple(dates),
            index_prices=data[:, idx_pos].copy(),
            asset_prices=data[:, asset_cols].T.copy(),
            asset_ids=tuple(asset_ids),
        )


def load_orlib_indtrack(path, index_position: str = "first",
                        layout: str = "period") -> PricePanel:
    """Load a whitespace-token index-tracking file: first token the stock count N,
    then (N+1) price series over the remaining tokens.

    layout='period' reads one period at a time (index plus N stocks per period);
    layout='series' reads one full series at a time. index_position says whether
    the index series comes first or last within each group. Date labels are the
    synthetic integers 1..T.
    """
    if index_position not in ("first", "last"):
        raise DataError(f"index_position must be 'first' or 'last', got {index_position!r}")
    if layout not in ("period", "series"):
        raise DataError(f"layout must be 'period' or 'series', got {layout!r}")
    try:
        with open(path) as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    if not tokens:
        raise DataError(f"{path}: empty file")
    try:
        n = int(tokens[0])
    except ValueError:
        raise DataError(f"{path}: first token {tokens[0]!r} is not a stock count") from None
    if n < 1:
        raise DataError(f"{path}: declared stock count {n} < 1")
    body = tokens[1:]
    if len(body) % (n + 1) != 0:
        raise DataError(
            f"{path}: token count {len(body)} inconsistent with declared N={n} "
            f"(not a multiple of {n + 1})"
        )
    T = len(body) // (n + 1)
    if T < 2:
        raise DataError(f"{path}: only {T} periods, need at least 2")
    values = np.empty(len(body))
    for pos, tok in enumerate(body):
        try:
            values[pos] = float(tok)
        except ValueError:
            raise DataError(f"{path}: token {pos + 2} ({tok!r}) is not a number") from None
    if layout == "period":
        grid = values.reshape(T, n + 1).T    # (n+1, T)
    else:
        grid = values.reshape(n + 1, T)
    if index_position == "first":
        index_prices, asset_prices = grid[0], grid[1:]
    else:
        index_prices, asset_prices = grid[-1], grid[:-1]
    return PricePanel(
        dates=tuple(str(t) for t in range(1, T + 1)),
        index_prices=index_prices.copy(),
        asset_prices=asset_prices.copy(),
        asset_ids=tuple(f"S{k + 1}" for k in range(n)),
    )


@dataclass(frozen=True)
class WindowPlan:
    """Half-open in/out-of-sample index ranges into a return panel."""

    in_start: int
    in_end: int
    out_start: int
    out_end: int

    def __post_init__(self):
        ok = 0 <= self.in_start < self.in_end == self.out_start < self.out_end
        if not ok:
            raise DataError(f"inconsistent window {self}")


def make_windows(n_periods: int, in_len: int, out_len: int, step: int):
    """Rolling windows at offsets 0, step, 2*step, ... while they fit entirely."""
    if min(in_len, out_len, step) < 1:
        raise DataError("in_len, out_len and step must all be >= 1")
    windows = []
    offset = 0
    while offset + in_len + out_len <= n_periods:
        windows.append(WindowPlan(offset, offset + in_len,
                                  offset + in_len, offset + in_len + out_len))
        offset += step
    if not windows:
        raise DataError(
            f"no window of {in_len}+{out_len} periods fits into {n_periods}"
        )
    return windows


@dataclass(frozen=True)
class SubSeriesPlan:
    """Overlapping sub-series grid: count pieces of a given length, consecutive
    starts shift apart, covering the series exactly."""

    length: int
    shift: int
    count: int

    def __post_init__(self):
        if not (1 <= self.shift <= self.length):
            raise DataError(f"shift must lie in [1, length], got {self}")
        if self.count < 1:
            raise DataError(f"count must be >= 1, got {self}")

    def total_span(self) -> int:
        return self.length + self.shift * (self.count - 1)

    def validate_for(self, n: int):
        if self.total_span() != n:
            raise DataError(
                f"plan {self} spans {self.total_span()} points, series has {n}"
            )

    @classmethod
    def single(cls, n: int) -> "SubSeriesPlan":
        return cls(length=n, shift=n, count=1)

    @classmethod
    def default_for(cls, n: int, length: int | None = None,
                    shift: int | None = None) -> "SubSeriesPlan":
        """Resolve a plan for a series of n points.

        Unset parameters default to length ~ ceil(n/3) and shift ~ ceil(length/2),
        nudged by a deterministic nearest-first search until (n - length) divides
        evenly by shift.
        """
        if n < 1:
            raise DataError("series must be non-empty")
        if length is not None and shift is not None:
            if (n - length) % shift != 0:
                raise DataError(
                    f"(n - length) = {n - length} not divisible by shift {shift}"
                )
            return cls(length, shift, (n - length) // shift + 1)

        def offsets(limit):
            yield 0
            for d in range(1, limit + 1):
                yield d
                yield -d

        l_target = length if length is not None else math.ceil(n / 3)
        for dl in offsets(n):
            l_cand = l_target + dl
            if length is not None and l_cand != length:
                break
            if not (1 <= l_cand <= n):
                continue
            s_target = shift if shift is not None else math.ceil(l_cand / 2)
            for ds in offsets(l_cand):
                s_cand = s_target + ds
                if shift is not None and s_cand != shift:
                    break
                if not (1 <= s_cand <= l_cand):
                    continue
                if (n - l_cand) % s_cand == 0:
                    return cls(l_cand, s_cand, (n - l_cand) // s_cand + 1)
        raise DataError(f"no sub-series plan found for n={n}")  # pragma: no cover


def make_subseries(series, plan: SubSeriesPlan):
    """Slice a series into the plan's overlapping pieces (views, ascending starts)."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("series must be 1-dimensional")
    plan.validate_for(x.shape[0])
    return [x[k * plan.shift: k * plan.shift + plan.length]
            for k in range(plan.count)]


def subseries_weights(plan: SubSeriesPlan, weights=None) -> np.ndarray:
    """Validate user weights for a plan, or return the uniform default."""
    if weights is None:
        return np.full(plan.count, 1.0 / plan.count)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (plan.count,):
        raise DataError(f"need {plan.count} weights, got shape {w.shape}")
    if (w <= 0).any():
        raise DataError("sub-series weights must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DataError(f"sub-series weights sum to {w.sum()}, expected 1")
    return w
