"""Store-sales panels: loading, log transform, calendar splits, synthetic data.

Dates are held internally as integer days since 1970-01-01 and formatted as
ISO-8601 at the edges.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    DuplicateKey,
    EmptySeries,
    InputError,
    MalformedRow,
    MissingColumn,
    SpanTooShort,
    UnknownStore,
)

_EPOCH_ORDINAL = dt.date(1970, 1, 1).toordinal()

DEFAULT_SCHEMA: dict[str, str] = {
    "store": "Store",
    "date": "Date",
    "sales": "Sales",
    "customers": "Customers",
    "open": "Open",
    "promo": "Promo",
}

CANONICAL_HEADER = ("Store", "Date", "Sales", "Customers", "Open", "Promo")


def to_day(d: dt.date) -> int:
    return d.toordinal() - _EPOCH_ORDINAL


def from_day(day: int) -> dt.date:
    return dt.date.fromordinal(int(day) + _EPOCH_ORDINAL)


def iso(day: int) -> str:
    return from_day(day).isoformat()


def parse_date(text: str, dayfirst: bool = False) -> dt.date:
    text = text.strip()
    if dayfirst:
        d, m, y = text.replace("-", "/").split("/")
        return dt.date(int(y), int(m), int(d))
    return dt.date.fromisoformat(text)


def subtract_months(d: dt.date, months: int) -> dt.date:
    """Shift ``d`` back by whole calendar months, clamping to the month end."""
    idx = d.year * 12 + (d.month - 1) - months
    year, month = divmod(idx, 12)
    month += 1
    if month == 12:
        last = 31
    else:
        last = (dt.date(year, month + 1, 1) - dt.timedelta(days=1)).day
    return dt.date(year, month, min(d.day, last))


@dataclass(frozen=True)
class SalesRecord:
    store_id: int
    date: dt.date
    sales: float
    customers: float
    promo: bool
    open: bool

    def __post_init__(self):
        if self.store_id < 1:
            raise InputError(f"store_id must be positive, got {self.store_id}")
        if not (self.sales >= 0):
            raise InputError(f"sales must be non-negative, got {self.sales}")
        if not (self.customers >= 0):
            raise InputError(f"customers must be non-negative, got {self.customers}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class SalesPanel:
    """Immutable multi-store daily sales table, sorted by (store, date).

    Columns are numpy arrays: ``store``, ``day``, ``sales``, ``customers``,
    ``promo`` and ``open``. Per-store rows are contiguous; use
    :meth:`store_rows` for a slice.
    """

    def __init__(self, store, day, sales, customers, promo, open_):
        store = np.asarray(store, dtype=np.int64)
        day = np.asarray(day, dtype=np.int64)
        sales = np.asarray(sales, dtype=float)
        customers = np.asarray(customers, dtype=float)
        promo = np.asarray(promo, dtype=bool)
        open_ = np.asarray(open_, dtype=bool)
        n = store.shape[0]
        for a in (day, sales, customers, promo, open_):
            if a.shape != (n,):
                raise InputError("panel columns must be 1-d and of equal length")
        if n and (store.min() < 1):
            raise InputError("store ids must be positive")
        if np.any(~(sales >= 0)) or np.any(~(customers >= 0)):
            raise InputError("sales and customers must be non-negative")

        order = np.lexsort((day, store))
        store, day = store[order], day[order]
        sales, customers = sales[order], customers[order]
        promo, open_ = promo[order], open_[order]
        dup = (np.diff(store) == 0) & (np.diff(day) == 0)
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise DuplicateKey(int(store[i]), iso(day[i]))

        self.store = _frozen(store)
        self.day = _frozen(day)
        self.sales = _frozen(sales)
        self.customers = _frozen(customers)
        self.promo = _frozen(promo)
        self.open = _frozen(open_)

        ids, starts = np.unique(store, return_index=True)
        ends = np.append(starts[1:], n)
        self._index = {int(s): (int(a), int(b)) for s, a, b in zip(ids, starts, ends)}
        self._check_invariants()

    def _check_invariants(self):
        for s, (a, b) in self._index.items():
            assert np.all(self.store[a:b] == s)
            assert np.all(np.diff(self.day[a:b]) > 0)

    @classmethod
    def from_records(cls, records: Iterable[SalesRecord]) -> "SalesPanel":
        recs = list(records)
        return cls(
            [r.store_id for r in recs],
            [to_day(r.date) for r in recs],
            [r.sales for r in recs],
            [r.customers for r in recs],
            [r.promo for r in recs],
            [r.open for r in recs],
        )

    def __len__(self) -> int:
        return int(self.store.shape[0])

    def __iter__(self) -> Iterator[SalesRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SalesPanel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("store", "day", "sales", "customers", "promo", "open")
        )

    def record(self, i: int) -> SalesRecord:
        return SalesRecord(
            int(self.store[i]),
            from_day(self.day[i]),
            float(self.sales[i]),
            float(self.customers[i]),
            bool(self.promo[i]),
            bool(self.open[i]),
        )

    @property
    def stores(self) -> tuple[int, ...]:
        return tuple(self._index)

    def store_rows(self, store: int) -> slice:
        try:
            a, b = self._index[int(store)]
        except KeyError:
            raise UnknownStore(store) from None
        return slice(a, b)

    def subset(self, mask: np.ndarray) -> "SalesPanel":
        return SalesPanel(
            self.store[mask], self.day[mask], self.sales[mask],
            self.customers[mask], self.promo[mask], self.open[mask],
        )

    def to_csv(self) -> str:
        """Canonical CSV: Rossmann column names, ISO dates, shortest-repr floats."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CANONICAL_HEADER)
        for i in range(len(self)):
            w.writerow([
                int(self.store[i]),
                iso(self.day[i]),
                _fmt_num(self.sales[i]),
                _fmt_num(self.customers[i]),
                int(self.open[i]),
                int(self.promo[i]),
            ])
        return buf.getvalue()


def _fmt_num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "t", "yes"):
        return True
    if t in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_sales_csv(
    source: IO[bytes] | IO[str] | bytes | str,
    schema: Mapping[str, str] | None = None,
    dayfirst: bool = False,
) -> SalesPanel:
    """Parse a UTF-8 CSV with a header row into a :class:`SalesPanel`.

    ``schema`` maps logical fields (store, date, sales, customers, open, promo)
    to column names; missing keys fall back to the Rossmann names. Line
    numbers in :class:`MalformedRow` count the header as line 1.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    cols = {**DEFAULT_SCHEMA, **(schema or {})}

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn(cols["store"]) from None
    header = [h.strip().lstrip("﻿") for h in header]
    pos = {}
    for key, name in cols.items():
        if name not in header:
            raise MissingColumn(name)
        pos[key] = header.index(name)

    store, day, sales, customers, promo, open_ = [], [], [], [], [], []
    seen: set[tuple[int, int]] = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            s = int(row[pos["store"]])
            d = to_day(parse_date(row[pos["date"]], dayfirst))
            sa = float(row[pos["sales"]])
            cu = float(row[pos["customers"]])
            op = _parse_bool(row[pos["open"]])
            pr = _parse_bool(row[pos["promo"]])
        except (ValueError, IndexError) as exc:
            raise MalformedRow(line, str(exc)) from None
        if s < 1 or not (sa >= 0) or not (cu >= 0) or math.isinf(sa) or math.isinf(cu):
            raise MalformedRow(line, "store must be positive; sales/customers non-negative")
        if (s, d) in seen:
            raise DuplicateKey(s, iso(d))
        seen.add((s, d))
        store.append(s)
        day.append(d)
        sales.append(sa)
        customers.append(cu)
        promo.append(pr)
        open_.append(op)
    return SalesPanel(store, day, sales, customers, promo, open_)


@dataclass(frozen=True, eq=False)
class SeriesView:
    """One store's open-day sales on the natural-log scale.

    ``promo`` and ``customers`` ride along so downstream feature builders do
    not need the panel again.
    """

    store_id: int
    days: np.ndarray
    log_sales: np.ndarray
    promo: np.ndarray
    customers: np.ndarray

    def __post_init__(self):
        n = self.days.shape[0]
        if n < 1:
            raise EmptySeries(f"store {self.store_id}: empty series")
        if not np.all(np.isfinite(self.log_sales)):
            raise InputError("log_sales must be finite")
        if np.any(np.diff(self.days) <= 0):
            raise InputError("series days must be strictly ascending")
        for a in (self.log_sales, self.promo, self.customers):
            if a.shape != (n,):
                raise InputError("series columns must have equal length")

    def __len__(self) -> int:
        return int(self.days.shape[0])

    @property
    def dates(self) -> list[dt.date]:
        return [from_day(d) for d in self.days]

    @property
    def first_day(self) -> int:
        return int(self.days[0])

    @property
    def last_day(self) -> int:
        return int(self.days[-1])

    def take(self, mask_or_slice) -> "SeriesView":
        return SeriesView(
            self.store_id,
            self.days[mask_or_slice],
            self.log_sales[mask_or_slice],
            self.promo[mask_or_slice],
            self.customers[mask_or_slice],
        )

    @staticmethod
    def concat(a: "SeriesView", b: "SeriesView") -> "SeriesView":
        return SeriesView(
            a.store_id,
            np.concatenate([a.days, b.days]),
            np.concatenate([a.log_sales, b.log_sales]),
            np.concatenate([a.promo, b.promo]),
            np.concatenate([a.customers, b.customers]),
        )


def open_positive_mask(panel: SalesPanel) -> np.ndarray:
    return panel.open & (panel.sales > 0)


def log_series(panel: SalesPanel, store: int) -> SeriesView:
    """Closed days and zero-sales days are dropped, the rest log-transformed."""
    sl = panel.store_rows(store)
    keep = open_positive_mask(panel)[sl]
    if not np.any(keep):
        raise EmptySeries(f"store {store}: no open days with positive sales")
    return SeriesView(
        int(store),
        panel.day[sl][keep].copy(),
        np.log(panel.sales[sl][keep]),
        panel.promo[sl][keep].copy(),
        panel.customers[sl][keep].copy(),
    )


@dataclass(frozen=True)
class SplitSpec:
    validation_months: int = 2
    cutoff_date: dt.date | None = None

    def __post_init__(self):
        if self.validation_months < 1:
            raise InputError("validation_months must be positive")

    def cutoff_day(self, last_day: int) -> int:
        """Last day that belongs to the training side."""
        if self.cutoff_date is not None:
            return to_day(self.cutoff_date)
        return to_day(subtract_months(from_day(last_day), self.validation_months))


def train_validation_split(series: SeriesView, spec: SplitSpec = SplitSpec()):
    """Partition ``series`` at the calendar cutoff; validation is strictly after it."""
    cutoff = spec.cutoff_day(series.last_day)
    if not (series.first_day < cutoff < series.last_day):
        raise SpanTooShort(
            f"series {iso(series.first_day)}..{iso(series.last_day)} does not extend "
            f"past a cutoff of {iso(cutoff)}"
        )
    val = series.days > cutoff
    return series.take(~val), series.take(val)


@dataclass(frozen=True)
class GeneratorParams:
    """Parameters of the synthetic log-sales generator.

    log_sales = level + weekday_effect[dow] + promo_uplift * promo + AR(1) noise
    """

    weekday_effect: tuple[float, ...] = (0.12, 0.02, 0.0, -0.02, 0.05, 0.15, -0.25)
    ar_coef: float = 0.5
    noise_sd: float = 0.1
    promo_uplift: float = 0.3
    promo_rate: float = 0.4
    level_mean: float = 8.5
    level_sd: float = 0.3
    avg_ticket: float = 9.0
    customer_noise_sd: float = 0.05
    start: dt.date = field(default=dt.date(2013, 1, 1))

    def __post_init__(self):
        if len(self.weekday_effect) != 7:
            raise InputError("weekday_effect needs 7 entries (Monday first)")
        if not (0.0 <= self.promo_rate <= 1.0):
            raise InputError("promo_rate must lie in [0, 1]")
        if abs(self.ar_coef) >= 1:
            raise InputError("ar_coef must satisfy |ar_coef| < 1")


def synthesize_panel(
    seed: int, n_stores: int, n_days: int, gen: GeneratorParams = GeneratorParams()
) -> SalesPanel:
    """Deterministic synthetic panel with weekly seasonality, promos and AR(1) noise."""
    if n_stores < 1:
        raise InputError("n_stores must be >= 1")
    if n_days < 14:
        raise InputError("n_days must be >= 14")
    rng = np.random.default_rng(seed)
    start = to_day(gen.start)
    days = start + np.arange(n_days, dtype=np.int64)
    dow = np.array([from_day(d).weekday() for d in days[:7]])
    dow = np.resize(dow, n_days)
    week = np.asarray(gen.weekday_effect, dtype=float)[dow]
    stat_sd = gen.noise_sd / math.sqrt(1.0 - gen.ar_coef**2)

    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("store", "day", "sales", "cust", "promo")}
    for s in range(1, n_stores + 1):
        level = gen.level_mean + gen.level_sd * rng.standard_normal()
        promo = rng.random(n_days) < gen.promo_rate
        z = rng.standard_normal(n_days)
        noise = np.empty(n_days)
        noise[0] = stat_sd * z[0]
        for t in range(1, n_days):
            noise[t] = gen.ar_coef * noise[t - 1] + gen.noise_sd * z[t]
        log_sales = level + week + gen.promo_uplift * promo + noise
        log_cust = (
            log_sales - math.log(gen.avg_ticket)
            + gen.customer_noise_sd * rng.standard_normal(n_days)
        )
        cols["store"].append(np.full(n_days, s))
        cols["day"].append(days)
        cols["sales"].append(np.round(np.exp(log_sales), 2))
        cols["cust"].append(np.round(np.exp(log_cust)))
        cols["promo"].append(promo)

    store = np.concatenate(cols["store"])
    return SalesPanel(
        store,
        np.concatenate(cols["day"]),
        np.concatenate(cols["sales"]),
        np.concatenate(cols["cust"]),
        np.concatenate(cols["promo"]),
        np.ones(store.shape[0], dtype=bool),
    )
