import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retailts.errors import InputError, SeriesTooShort
from retailts.forecasters.arima import (
    ArimaModel,
    ArimaOrder,
    admissible,
    css,
    css_residuals,
    difference,
    fit_arima,
    fit_order,
    forecast_arima,
)


def ar1(phi, n, seed, c=0.0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 200)
    x = np.empty(n + 200)
    x[0] = e[0]
    for t in range(1, n + 200):
        x[t] = c + phi * x[t - 1] + e[t]
    return x[200:]


def model(p=0, d=0, q=0, phi=(), theta=(), c=0.0, last=(), resid=(), levels=()):
    return ArimaModel(ArimaOrder(p, d, q), np.array(phi, float), np.array(theta, float), c, 1.0,
                      0.0, 0.0, 1, np.array(last, float), np.array(resid, float), tuple(levels))


def css_loop(w, c, phi, theta, start=None):
    """Plain-loop CSS: innovations before t = p are zero; the sum runs from ``start``."""
    p, q = len(phi), len(theta)
    start = p if start is None else start
    e = np.zeros(len(w))
    for t in range(p, len(w)):
        val = w[t] - c - sum(phi[i] * w[t - 1 - i] for i in range(p))
        val -= sum(theta[j] * e[t - 1 - j] for j in range(q) if t - 1 - j >= p)
        e[t] = val
    return float(e[start:] @ e[start:])


def pi1_ols(x):
    """Lag-1 least-squares slope with intercept."""
    X = np.column_stack([np.ones(len(x) - 1), x[:-1]])
    return np.linalg.lstsq(X, x[1:], rcond=None)[0][1]


def test_forecast_intercept_only():
    np.testing.assert_allclose(forecast_arima(model(c=3.0), 5), [3.0] * 5)


def test_forecast_geometric_ar1():
    m = model(p=1, phi=[0.5], last=[1.0])
    np.testing.assert_allclose(forecast_arima(m, 4), [0.5, 0.25, 0.125, 0.0625])


def test_forecast_random_walk():
    m = model(d=1, levels=[7.0])
    np.testing.assert_allclose(forecast_arima(m, 6), [7.0] * 6)


def test_forecast_uses_last_residual_once():
    m = model(q=1, theta=[0.5], c=1.0, resid=[2.0])
    np.testing.assert_allclose(forecast_arima(m, 3), [2.0, 1.0, 1.0])


def test_css_matches_plain_loop(rng):
    w = rng.standard_normal(120)
    for phi, theta in [((), ()), ((0.4,), ()), ((0.3, -0.2), (0.5,)), ((), (0.6, 0.2))]:
        got = css(w, 0.1, np.array(phi), np.array(theta))
        assert got == pytest.approx(css_loop(w, 0.1, phi, theta), rel=1e-12)


def test_difference_levels():
    w, levels = difference(np.array([1.0, 3.0, 6.0, 10.0]), 2)
    np.testing.assert_array_equal(w, [1.0, 1.0])
    assert levels == (10.0, 4.0)


def test_admissible():
    assert admissible(np.array([0.5]), np.array([0.3]))
    assert not admissible(np.array([1.0]), np.empty(0))
    assert not admissible(np.empty(0), np.array([-1.2]))
    assert not admissible(np.array([0.995]), np.empty(0))


def test_ar1_recovery():
    x = ar1(0.8, 1000, 42)
    m = fit_arima(x, 3, 1, 2)
    assert m.order.d == 0 and m.order.p in (1, 2, 3)
    assert 0.7 <= m.phi[0] <= 0.9


@pytest.mark.parametrize("seed", range(6))
def test_ar1_css_fit_equals_ols_lag_regression(seed):
    """With an intercept and no MA part, CSS is least squares on the lagged value."""
    x = ar1(0.8, 1000, seed)
    m = fit_order(x, ArimaOrder(1, 0, 0))
    assert m.phi[0] == pytest.approx(pi1_ols(x), abs=1e-4)
    assert abs(m.phi[0] - 0.8) < 0.05


@pytest.mark.parametrize("seed", range(6))
def test_selected_model_fits_at_least_as_well_as_ols_ar1(seed):
    x = ar1(0.8, 1000, seed)
    m = fit_arima(x, 3, 1, 2)
    assert m.order.d == 0
    w = x[3:]  # common conditioning window of the (3, 1, 2) grid
    X = np.column_stack([np.ones(len(w) - 1), w[:-1]])
    r = w[1:] - X @ np.linalg.lstsq(X, w[1:], rcond=None)[0]
    assert m.css <= float(r @ r) * (1 + 1e-9)


def test_white_noise_selection():
    x = np.random.default_rng(3).standard_normal(500)
    m = fit_arima(x, 2, 1, 2)
    assert (m.order.p, m.order.d, m.order.q) in ((0, 0, 0), (1, 0, 0))
    if m.order.p:
        assert abs(m.phi[0]) < 0.15
    # independent recomputation of every candidate's fitted CSS and AIC
    for order in [(0, 0, 0), (1, 0, 0), (0, 0, 1)]:
        f = fit_order(x, ArimaOrder(*order), n_cond=3)
        loop = css_loop(x, f.intercept, f.phi, f.theta, start=3)
        assert f.css == pytest.approx(loop, rel=1e-10)
        n = len(x) - 3
        assert f.aic == pytest.approx(n * math.log(loop / n) + 2 * (sum(order) + 1), rel=1e-10)
        assert m.aic <= f.aic


def test_constant_series():
    x = np.full(100, 4.2)
    m = fit_arima(x, 2, 1, 1)
    assert m.order.d == 0
    np.testing.assert_allclose(forecast_arima(m, 5), 4.2, atol=1e-8)


def test_fit_never_worse_than_start():
    x = ar1(0.5, 300, 9, c=1.0)
    m = fit_order(x, ArimaOrder(2, 0, 1))
    start = css(x, float(x.mean() * 0.5), np.array([0.25, 0.0]), np.zeros(1))
    assert m.css <= start + 1e-12


def test_too_short():
    with pytest.raises(SeriesTooShort):
        fit_arima(np.arange(20.0), 3, 1, 2)
    with pytest.raises(InputError):
        forecast_arima(model(c=1.0), 0)


def test_dict_round_trip():
    m = fit_arima(ar1(0.6, 200, 1), 1, 1, 1)
    again = ArimaModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(forecast_arima(m, 10), forecast_arima(again, 10))


@settings(max_examples=25, deadline=None)
@given(phi=st.floats(-0.9, 0.9), c=st.floats(-2, 2), h=st.integers(1, 30))
def test_ar1_forecast_closed_form(phi, c, h):
    m = model(p=1, phi=[phi], c=c, last=[1.5])
    k = np.arange(1, h + 1)
    mean = c / (1 - phi)
    np.testing.assert_allclose(forecast_arima(m, h), mean + (1.5 - mean) * phi ** k, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), theta=st.floats(-0.8, 0.8))
def test_residual_recursion_inverts_ma(seed, theta):
    e = np.random.default_rng(seed).standard_normal(50)
    w = e.copy()
    w[1:] += theta * e[:-1]
    r = css_residuals(w, 0.0, np.empty(0), np.array([theta]))
    # with e_0 treated as the first innovation the recursion recovers e exactly
    np.testing.assert_allclose(r, e, atol=1e-9)
