import datetime as dt
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retailts.data_core import (
    GeneratorParams,
    SalesPanel,
    SalesRecord,
    SeriesView,
    SplitSpec,
    from_day,
    load_sales_csv,
    log_series,
    parse_date,
    subtract_months,
    synthesize_panel,
    to_day,
    train_validation_split,
)
from retailts.errors import (
    DuplicateKey,
    EmptySeries,
    MalformedRow,
    MissingColumn,
    SpanTooShort,
    UnknownStore,
)

CSV3 = """Store,DayOfWeek,Date,Sales,Customers,Open,Promo,StateHoliday,SchoolHoliday
2,5,2015-07-31,6064,625,1,1,0,1
1,5,2015-07-31,5263,555,1,1,0,1
1,4,2015-07-30,5020,546,1,1,0,1
"""


def _panel(sales, open_=None, start=dt.date(2015, 1, 1), store=1):
    n = len(sales)
    open_ = [True] * n if open_ is None else open_
    days = to_day(start) + np.arange(n)
    return SalesPanel(np.full(n, store), days, sales, np.full(n, 10.0), np.zeros(n, bool), open_)


def test_load_three_rows_sorted():
    p = load_sales_csv(CSV3)
    assert len(p) == 3
    assert p.stores == (1, 2)
    assert [from_day(d).isoformat() for d in p.day] == ["2015-07-30", "2015-07-31", "2015-07-31"]
    assert p.sales.tolist() == [5020.0, 5263.0, 6064.0]
    rec = p.record(0)
    assert rec == SalesRecord(1, dt.date(2015, 7, 30), 5020.0, 546.0, True, True)


def test_duplicate_key():
    text = CSV3 + "1,3,2015-07-01,1,1,1,0,0,0\n1,3,2015-07-01,2,2,1,0,0,0\n"
    with pytest.raises(DuplicateKey) as exc:
        load_sales_csv(text)
    assert exc.value.store == 1 and exc.value.date == "2015-07-01"


def test_malformed_row_counts_header_as_line_one():
    text = "Store,Date,Sales,Customers,Open,Promo\n1,2015-07-01,abc,1,1,0\n"
    with pytest.raises(MalformedRow) as exc:
        load_sales_csv(text)
    assert exc.value.line == 2


def test_missing_column():
    with pytest.raises(MissingColumn):
        load_sales_csv("Store,Date,Sales\n1,2015-07-01,5\n")


def test_schema_and_dayfirst():
    text = "shop,day,rev,cust,is_open,promo_flag\n7,31/07/2015,100,5,1,0\n"
    schema = {"store": "shop", "date": "day", "sales": "rev", "customers": "cust",
              "open": "is_open", "promo": "promo_flag"}
    p = load_sales_csv(text, schema, dayfirst=True)
    assert p.record(0).date == dt.date(2015, 7, 31)
    assert p.record(0).store_id == 7


def test_csv_round_trip(panel):
    again = load_sales_csv(panel.to_csv())
    assert again == panel


def test_panel_is_read_only(panel):
    with pytest.raises(ValueError):
        panel.sales[0] = 1.0


def test_unknown_store(panel):
    with pytest.raises(UnknownStore):
        panel.store_rows(99)


def test_log_series_e_powers():
    s = log_series(_panel([math.e, math.e ** 2]), 1)
    np.testing.assert_allclose(s.log_sales, [1.0, 2.0], atol=1e-15)


def test_zero_sales_dropped():
    s = log_series(_panel([0.0, math.e]), 1)
    np.testing.assert_allclose(s.log_sales, [1.0])


def test_closed_days_dropped_and_all_closed_raises():
    s = log_series(_panel([5.0, 6.0, 7.0], [True, False, True]), 1)
    assert len(s) == 2
    with pytest.raises(EmptySeries):
        log_series(_panel([5.0, 6.0], [False, False]), 1)


def test_subtract_months_clamps():
    assert subtract_months(dt.date(2015, 7, 31), 2) == dt.date(2015, 5, 31)
    assert subtract_months(dt.date(2015, 4, 30), 2) == dt.date(2015, 2, 28)
    assert subtract_months(dt.date(2015, 1, 15), 2) == dt.date(2014, 11, 15)


def test_split_two_months():
    start = dt.date(2015, 7, 31) - dt.timedelta(days=364)
    s = log_series(_panel(np.full(365, 100.0), start=start), 1)
    train, val = train_validation_split(s, SplitSpec(2))
    assert val.dates[0] == dt.date(2015, 6, 1)
    assert val.dates[-1] == dt.date(2015, 7, 31)
    assert train.dates[-1] == dt.date(2015, 5, 31)


def test_split_too_short():
    s = log_series(_panel(np.full(30, 100.0)), 1)
    with pytest.raises(SpanTooShort):
        train_validation_split(s, SplitSpec(2))


def test_explicit_cutoff():
    s = log_series(_panel(np.full(100, 100.0)), 1)
    train, val = train_validation_split(s, SplitSpec(cutoff_date=dt.date(2015, 2, 1)))
    assert train.last_day == to_day(dt.date(2015, 2, 1))
    assert val.first_day == train.last_day + 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(70, 400), months=st.integers(1, 2))
def test_split_partitions(n, months):
    rng = np.random.default_rng(n)
    s = log_series(_panel(rng.uniform(50, 150, n)), 1)
    train, val = train_validation_split(s, SplitSpec(months))
    back = SeriesView.concat(train, val)
    np.testing.assert_array_equal(back.days, s.days)
    np.testing.assert_array_equal(back.log_sales, s.log_sales)
    assert train.last_day < val.first_day


def test_synth_deterministic():
    a = synthesize_panel(7, 3, 60)
    b = synthesize_panel(7, 3, 60)
    assert a == b
    assert a.to_csv() == b.to_csv()
    assert synthesize_panel(8, 3, 60) != a


def test_synth_degenerate_generator_is_constant():
    gen = GeneratorParams(weekday_effect=(0.0,) * 7, ar_coef=0.0, noise_sd=0.0, promo_uplift=0.0)
    p = synthesize_panel(1, 2, 50, gen)
    for s in p.stores:
        sales = p.sales[p.store_rows(s)]
        assert np.all(sales == sales[0])


def test_synth_promo_frequency():
    p = synthesize_panel(42, 1, 10000, GeneratorParams(promo_rate=0.4))
    assert abs(p.promo.mean() - 0.4) <= 0.02


def test_parse_date_formats():
    assert parse_date("2015-07-31") == dt.date(2015, 7, 31)
    assert parse_date("31/07/2015", dayfirst=True) == dt.date(2015, 7, 31)
    with pytest.raises(ValueError):
        parse_date("yesterday")


def test_record_validation():
    with pytest.raises(ValueError):
        SalesRecord(1, dt.date(2015, 1, 1), -1.0, 0.0, False, True)


def test_load_from_binary_stream():
    p = load_sales_csv(io.BytesIO(CSV3.encode()))
    assert len(p) == 3
