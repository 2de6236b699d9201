import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from retailts.copulas import (
    GammaMarginal,
    GaussianCopulaParams,
    JointModel,
    PseudoObservations,
    TCopulaParams,
    copula_pdf,
    fit_gamma_marginal,
    fit_gaussian_copula,
    fit_t_copula,
    gamma_ppf,
    kendall_tau,
    moment_gamma,
    order_statistic_index,
    params_from_dict,
    pdf_grid,
    pseudo_observations,
    sample_copula,
    tau_to_rho,
    value_at_risk,
)
from retailts.errors import BoundaryInput, InputError, LengthMismatch, NonPositiveData


def brute_tau_b(x, y):
    """Independent pair counter: every pair visited once, ties tallied per variable."""
    x, y = [float(a) for a in x], [float(b) for b in y]
    n = len(x)
    conc = disc = tie_x = tie_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0:
                tie_x += 1
            if dy == 0:
                tie_y += 1
            if dx * dy > 0:
                conc += 1
            elif dx * dy < 0:
                disc += 1
    pairs = n * (n - 1) // 2
    denom = math.sqrt((pairs - tie_x) * (pairs - tie_y))
    return 0.0 if denom == 0 else (conc - disc) / denom


def test_pseudo_observation_examples():
    np.testing.assert_allclose(pseudo_observations([10, 30, 20]).U[:, 0], [0.25, 0.75, 0.5])
    np.testing.assert_allclose(pseudo_observations([5, 5]).U[:, 0], [0.5, 0.5])
    with pytest.raises(BoundaryInput):
        PseudoObservations(np.array([[0.0, 0.5]]))


def test_tau_examples():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert kendall_tau([1, 1, 1], [1, 2, 3]) == 0.0
    with pytest.raises(LengthMismatch):
        kendall_tau([1, 2], [1, 2, 3])


@pytest.mark.parametrize("seed", range(50))
def test_tau_matches_brute_force_exactly(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    # small integer supports force plenty of ties in some datasets
    k = int(rng.choice([3, 10, 1000]))
    x = rng.integers(0, k, n).astype(float)
    y = (x + rng.integers(0, k, n)).astype(float) if seed % 2 else rng.integers(0, k, n).astype(float)
    assert kendall_tau(x, y) == brute_tau_b(x, y)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=2, max_size=40))
def test_tau_properties(pairs):
    x = np.array([p[0] for p in pairs], float)
    y = np.array([p[1] for p in pairs], float)
    t = kendall_tau(x, y)
    assert -1.0 <= t <= 1.0
    assert t == kendall_tau(y, x)
    assert t == pytest.approx(-kendall_tau(x, -y), abs=1e-15)
    # strictly increasing transforms leave tau unchanged
    assert kendall_tau(np.exp(x / 10), y ** 3) == pytest.approx(t, abs=1e-15)
    ref = stats.kendalltau(x, y).statistic
    if np.isfinite(ref):
        assert t == pytest.approx(ref, abs=1e-12)


def test_tau_to_rho():
    assert tau_to_rho(1 / 3) == pytest.approx(0.5)


def test_gaussian_rho_zero_is_independence():
    u = np.linspace(0.01, 0.99, 30)
    uu, vv = np.meshgrid(u, u)
    np.testing.assert_allclose(copula_pdf(GaussianCopulaParams(0.0), uu, vv), 1.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(rho=st.floats(-0.95, 0.95), nu=st.floats(2.5, 60), u=st.floats(0.001, 0.999), v=st.floats(0.001, 0.999))
def test_density_exchangeable_and_positive(rho, nu, u, v):
    for p in (GaussianCopulaParams(rho), TCopulaParams(rho, nu)):
        a, b = copula_pdf(p, u, v), copula_pdf(p, v, u)
        assert a > 0
        assert a == pytest.approx(b, rel=1e-12)


def test_t_density_matches_scipy_multivariate():
    p = TCopulaParams(0.5, 5.0)
    u, v = np.array([0.1, 0.4, 0.9]), np.array([0.2, 0.7, 0.95])
    x, y = stats.t.ppf(u, 5), stats.t.ppf(v, 5)
    joint = stats.multivariate_t(shape=[[1, 0.5], [0.5, 1]], df=5).pdf(np.column_stack([x, y]))
    want = joint / (stats.t.pdf(x, 5) * stats.t.pdf(y, 5))
    np.testing.assert_allclose(copula_pdf(p, u, v), want, rtol=1e-10)


def test_boundary_rejected():
    with pytest.raises(BoundaryInput):
        copula_pdf(GaussianCopulaParams(0.3), 0.0, 0.5)
    with pytest.raises(InputError):
        TCopulaParams(0.3, 2.0)


@pytest.mark.parametrize("params", [GaussianCopulaParams(0.6), TCopulaParams(0.5, 5.0), TCopulaParams(-0.3, 3.0)])
def test_density_integrates_to_one(params):
    _, dens = pdf_grid(params, 400)
    assert dens.mean() == pytest.approx(1.0, abs=0.02)


def test_independent_uniforms_fit_small_rho():
    U = PseudoObservations(np.random.default_rng(0).uniform(size=(2000, 2)))
    assert abs(fit_gaussian_copula(U).params.rho) < 0.08


def test_gaussian_round_trip():
    U = sample_copula(GaussianCopulaParams(0.7), 5000, 42)
    fit = fit_gaussian_copula(pseudo_observations(U.U))
    assert 0.65 <= fit.params.rho <= 0.75
    assert fit.loglik >= fit.start_loglik


@pytest.mark.slow
def test_t_round_trip():
    U = sample_copula(TCopulaParams(0.5, 5.0), 5000, 42)
    fit = fit_t_copula(pseudo_observations(U.U))
    assert 0.45 <= fit.params.rho <= 0.55
    assert 3.0 <= fit.params.nu <= 8.0
    d = fit.to_dict()
    assert {"family", "rho", "nu", "loglik", "n", "aic"} <= set(d)


@pytest.mark.slow
def test_t_fit_on_gaussian_data_goes_to_large_nu():
    U = sample_copula(GaussianCopulaParams(0.5), 5000, 42)
    assert fit_t_copula(pseudo_observations(U.U)).params.nu >= 15


def test_sample_tau_and_determinism():
    a = sample_copula(GaussianCopulaParams(0.5), 4000, 7)
    b = sample_copula(GaussianCopulaParams(0.5), 4000, 7)
    np.testing.assert_array_equal(a.U, b.U)
    assert kendall_tau(a.column(0), a.column(1)) == pytest.approx(1 / 3, abs=0.04)
    t = sample_copula(TCopulaParams(0.5, 4.0), 4000, 7)
    assert kendall_tau(t.column(0), t.column(1)) == pytest.approx(1 / 3, abs=0.04)


def test_params_dict_round_trip():
    for p in (GaussianCopulaParams(0.2), TCopulaParams(-0.4, 7.5)):
        assert params_from_dict(p.to_dict()) == p


def test_moment_start_example():
    g = moment_gamma([3.0, 5.0])
    assert (g.shape, g.scale) == pytest.approx((8.0, 0.5))


def test_exponential_median():
    assert float(gamma_ppf(0.5, 1.0, 1.0)) == pytest.approx(math.log(2), abs=1e-8)


def test_gamma_fit_round_trips():
    x = np.random.default_rng(42).exponential(size=5000)
    assert 0.9 <= fit_gamma_marginal(x).shape <= 1.1
    y = np.random.default_rng(42).gamma(3.0, 2.0, size=5000)
    g = fit_gamma_marginal(y)
    assert abs(g.shape - 3.0) <= 0.3
    # the MLE equation holds at the returned shape
    from scipy.special import digamma
    lhs = math.log(g.shape) - digamma(g.shape)
    assert lhs == pytest.approx(math.log(y.mean()) - np.log(y).mean(), abs=1e-10)


def test_gamma_rejects_non_positive():
    with pytest.raises(NonPositiveData):
        fit_gamma_marginal(np.r_[np.ones(20), 0.0])


@settings(max_examples=40, deadline=None)
@given(k=st.floats(0.2, 50), theta=st.floats(0.01, 100), u=st.floats(1e-6, 1 - 1e-6))
def test_gamma_ppf_inverts_cdf(k, theta, u):
    g = GammaMarginal(k, theta)
    x = g.ppf(u)
    assert float(g.cdf(x)) == pytest.approx(u, abs=1e-9)
    assert float(x) == pytest.approx(stats.gamma.ppf(u, k, scale=theta), rel=1e-6, abs=1e-300)


def test_var_order_statistic_examples():
    assert value_at_risk(np.arange(1, 101), 0.95) == 95
    assert value_at_risk(np.arange(1, 101), 0.95, tail="lower") == 5
    assert value_at_risk(np.full(10, 3.3), 0.9) == 3.3
    assert order_statistic_index(0.95, 100) == 95
    with pytest.raises(InputError):
        value_at_risk([1.0], 1.0)


def test_var_normal_monte_carlo():
    z = np.random.default_rng(42).standard_normal(100_000)
    assert value_at_risk(z, 0.95) == pytest.approx(1.6449, abs=0.03)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0.01, 0.99))
def test_var_is_a_sample_point_with_right_rank(xs, level):
    v = value_at_risk(xs, level)
    assert v in xs
    k = order_statistic_index(level, len(xs))
    assert sum(x <= v for x in xs) >= k


def test_joint_model_sampling_and_round_trip():
    jm = JointModel(TCopulaParams(0.6, 6.0), (GammaMarginal(2.0, 3.0), GammaMarginal(50.0, 0.2)))
    s = jm.sample(3000, 1)
    assert s.shape == (3000, 2) and np.all(s > 0)
    assert s[:, 0].mean() == pytest.approx(6.0, rel=0.05)
    again = JointModel.from_dict(jm.to_dict())
    np.testing.assert_array_equal(again.sample(100, 5), jm.sample(100, 5))
