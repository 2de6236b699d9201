"""Design matrices for the lag-based (TS) and exchangeable-row (IID) framings."""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data_core import SalesPanel, SeriesView, from_day, open_positive_mask, to_day
from .errors import EmptySelection, InputError, LagExceedsLength

TS = "TS"
IID = "IID"

WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
MONTH_NAMES = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
               "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    column_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    row_days: np.ndarray
    row_stores: np.ndarray | None = None

    def __post_init__(self):
        n = self.y.shape[0]
        if n < 1:
            raise InputError("feature matrix needs at least one row")
        if self.X.shape != (n, len(self.column_names)):
            raise InputError(f"X shape {self.X.shape} does not match names/target")
        if len(set(self.column_names)) != len(self.column_names):
            raise InputError("column names must be unique")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InputError("feature matrix contains non-finite values")
        if self.row_days.shape != (n,):
            raise InputError("row_days length mismatch")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def row_dates(self) -> list[dt.date]:
        return [from_day(d) for d in self.row_days]

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(
            self.column_names,
            self.X[idx],
            self.y[idx],
            self.row_days[idx],
            None if self.row_stores is None else self.row_stores[idx],
        )

    def with_column(self, name: str, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            self.column_names + (name,),
            np.column_stack([self.X, values]),
            self.y,
            self.row_days,
            self.row_stores,
        )

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.column_names.index(c) for c in names]
        return FeatureMatrix(tuple(names), self.X[:, idx], self.y, self.row_days, self.row_stores)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.column_names.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.column_names) + ["target"])
        for row, t in zip(self.X, self.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])
        return buf.getvalue()


@dataclass(frozen=True)
class FeatureSpec:
    framing: str = IID
    lags: frozenset[int] = field(default_factory=frozenset)
    include_promo: bool = True
    calendar: frozenset[str] = frozenset({"weekday", "monthday", "month"})

    def __post_init__(self):
        if self.framing not in (TS, IID):
            raise InputError(f"unknown framing {self.framing!r}")
        object.__setattr__(self, "lags", frozenset(int(k) for k in self.lags))
        object.__setattr__(self, "calendar", frozenset(self.calendar))
        if self.framing == TS and not self.lags:
            raise InputError("TS framing requires at least one lag")
        if any(k < 1 for k in self.lags):
            raise InputError("lags must be positive")
        unknown = self.calendar - {"weekday", "monthday", "month"}
        if unknown:
            raise InputError(f"unknown calendar features: {sorted(unknown)}")


def lag_name(k: int) -> str:
    return "prevLogSales" if k == 1 else f"lag{k}LogSales"


def calendar_names(calendar: Iterable[str]) -> list[str]:
    cal = set(calendar)
    names = []
    if "weekday" in cal:
        names += [f"dow_{w}" for w in WEEKDAY_NAMES[1:]]
    if "month" in cal:
        names += [f"month_{m}" for m in MONTH_NAMES[1:]]
    if "monthday" in cal:
        names.append("monthday")
    return names


def calendar_block(days: np.ndarray, calendar: Iterable[str]) -> np.ndarray:
    """Calendar columns in :func:`calendar_names` order.

    Weekday and month are one-hot with Monday and January as dropped
    reference levels; day-of-month stays numeric.
    """
    cal = set(calendar)
    dates = [from_day(d) for d in days]
    blocks = []
    if "weekday" in cal:
        wd = np.array([d.weekday() for d in dates])
        blocks.append((wd[:, None] == np.arange(1, 7)[None, :]).astype(float))
    if "month" in cal:
        mo = np.array([d.month for d in dates])
        blocks.append((mo[:, None] == np.arange(2, 13)[None, :]).astype(float))
    if "monthday" in cal:
        blocks.append(np.array([[float(d.day)] for d in dates]).reshape(-1, 1))
    if not blocks:
        return np.empty((len(dates), 0))
    return np.hstack(blocks)


def ts_column_names(spec: FeatureSpec) -> tuple[str, ...]:
    names = [lag_name(k) for k in sorted(spec.lags)]
    names += calendar_names(spec.calendar)
    if spec.include_promo:
        names.append("promo")
    return tuple(names)


def ts_row(history: np.ndarray, day: int, promo: bool, spec: FeatureSpec) -> np.ndarray:
    """One TS-framed feature row given the log-sales history before ``day``.

    Used for recursive multi-step forecasting, where ``history`` ends with
    earlier predictions.
    """
    parts = [np.array([history[-k] for k in sorted(spec.lags)], dtype=float)]
    parts.append(calendar_block(np.array([day]), spec.calendar)[0])
    if spec.include_promo:
        parts.append(np.array([float(promo)]))
    return np.concatenate(parts)


def build_ts_features(
    series: SeriesView, promo: np.ndarray | None, spec: FeatureSpec
) -> FeatureMatrix:
    """Lagged log-sales plus optional calendar and promo columns.

    The first ``max(lags)`` rows are dropped and ``y[t] = log_sales[t]``.
    ``promo`` defaults to the series' own promo flags.
    """
    if spec.framing != TS:
        raise InputError("build_ts_features needs a TS FeatureSpec")
    n = len(series)
    m = max(spec.lags)
    if m >= n:
        raise LagExceedsLength(f"max lag {m} needs more than {n} points")
    promo = series.promo if promo is None else np.asarray(promo, dtype=bool)
    if promo.shape != (n,):
        raise InputError("promo must align with the series")
    ls = series.log_sales
    cols = [ls[m - k:n - k] for k in sorted(spec.lags)]
    X = np.column_stack(cols) if cols else np.empty((n - m, 0))
    cal = calendar_block(series.days[m:], spec.calendar)
    X = np.hstack([X, cal])
    if spec.include_promo:
        X = np.hstack([X, promo[m:, None].astype(float)])
    return FeatureMatrix(
        ts_column_names(spec),
        X,
        ls[m:].copy(),
        series.days[m:].copy(),
        np.full(n - m, series.store_id),
    )


def store_mean_log_sales(panel: SalesPanel, store: int, cutoff: dt.date | int) -> float:
    """Mean of ln(sales) over the store's open, positive-sales days up to ``cutoff``."""
    cutoff_day = cutoff if isinstance(cutoff, (int, np.integer)) else to_day(cutoff)
    sl = panel.store_rows(store)
    keep = open_positive_mask(panel)[sl] & (panel.day[sl] <= cutoff_day)
    if not np.any(keep):
        raise EmptySelection(f"store {store} has no qualifying rows on or before the cutoff", (int(store),))
    return float(np.mean(np.log(panel.sales[sl][keep])))


def iid_column_names(spec: FeatureSpec) -> tuple[str, ...]:
    names = calendar_names(spec.calendar)
    if spec.include_promo:
        names.append("promo")
    names.append("meanLogSales")
    return tuple(names)


def build_iid_features(
    panel: SalesPanel,
    stores: Iterable[int],
    spec: FeatureSpec,
    train_cutoff: dt.date | int,
) -> FeatureMatrix:
    """One row per (store, open day) with calendar, promo and store-mean columns.

    ``meanLogSales`` is computed from rows dated on or before ``train_cutoff``
    only, so validation targets never leak into it. Rows after the cutoff are
    still emitted; callers split them off by date.
    """
    if spec.framing != IID:
        raise InputError("build_iid_features needs an IID FeatureSpec")
    stores = sorted(int(s) for s in stores)
    if not stores:
        raise EmptySelection("no stores selected")
    means = {}
    empty = []
    for s in stores:
        try:
            means[s] = store_mean_log_sales(panel, s, train_cutoff)
        except EmptySelection:
            empty.append(s)
    if empty:
        raise EmptySelection(
            f"stores without rows on or before the cutoff: {empty}", tuple(empty)
        )

    blocks, ys, days, store_ids = [], [], [], []
    ok = open_positive_mask(panel)
    for s in stores:
        sl = panel.store_rows(s)
        keep = ok[sl]
        d = panel.day[sl][keep]
        cols = [calendar_block(d, spec.calendar)]
        if spec.include_promo:
            cols.append(panel.promo[sl][keep][:, None].astype(float))
        cols.append(np.full((d.shape[0], 1), means[s]))
        blocks.append(np.hstack(cols))
        ys.append(np.log(panel.sales[sl][keep]))
        days.append(d)
        store_ids.append(np.full(d.shape[0], s))
    return FeatureMatrix(
        iid_column_names(spec),
        np.vstack(blocks),
        np.concatenate(ys),
        np.concatenate(days),
        np.concatenate(store_ids),
    )
