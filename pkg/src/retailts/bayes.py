"""Gibbs samplers for Gaussian and Student-t linear regression, plus chain diagnostics.

The Student-t model is written as a scale mixture of normals: each
observation carries a latent precision weight ``lam_i ~ Gamma(nu/2, nu/2)``,
which keeps every other full conditional conjugate. Its degrees of freedom
get a random-walk Metropolis step on ``log(nu - 2)``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .copulas import order_statistic_index
from .errors import (
    ChainTooShort,
    EmptyChain,
    InputError,
    KindMismatch,
    MetropolisStuck,
    SingularPrecision,
)
from .features import FeatureMatrix

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"

NU_MAX = 100.0
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class RegressionPrior:
    """Normal prior on coefficients, inverse-gamma(a0, d0) prior on the error variance.

    ``B0`` is a precision matrix. ``None`` fields expand to the weakly
    informative defaults once the coefficient count is known.
    """

    b0: np.ndarray | None = None
    B0: np.ndarray | None = None
    a0: float = 0.01
    d0: float = 0.01
    precision_scale: float = 1e-4

    def __post_init__(self):
        if not (self.a0 > 0 and self.d0 > 0):
            raise InputError("a0 and d0 must be positive")

    def resolve(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        b0 = np.zeros(p) if self.b0 is None else np.asarray(self.b0, dtype=float)
        B0 = self.precision_scale * np.eye(p) if self.B0 is None else np.asarray(self.B0, dtype=float)
        if b0.shape != (p,) or B0.shape != (p, p):
            raise InputError(f"prior dimensions do not match {p} coefficients")
        if not np.allclose(B0, B0.T):
            raise InputError("prior precision must be symmetric")
        if np.min(np.linalg.eigvalsh(B0)) < -1e-12:
            raise InputError("prior precision must be positive semidefinite")
        return b0, B0


@dataclass(frozen=True, eq=False)
class McmcChain:
    """All iterations of one chain; ``kept`` drops the burn-in rows."""

    param_names: tuple[str, ...]
    draws: np.ndarray
    burn_in: int = 0
    seed: int | None = None
    kind: str = GAUSSIAN
    acceptance: dict[str, float] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.param_names):
            raise InputError("draws must be iterations x parameters")
        if not (0 <= self.burn_in < max(self.draws.shape[0], 1)):
            raise InputError("burn_in must be smaller than the number of iterations")
        if not np.all(np.isfinite(self.draws)):
            raise InputError("chain contains non-finite draws")

    @property
    def kept(self) -> np.ndarray:
        return self.draws[self.burn_in:]

    def param(self, name: str, kept: bool = True) -> np.ndarray:
        j = self.param_names.index(name)
        return (self.kept if kept else self.draws)[:, j]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "burn_in", *self.param_names])
        for i, row in enumerate(self.draws):
            w.writerow([i, int(i < self.burn_in), *(repr(float(v)) for v in row)])
        return buf.getvalue()


def _design(fm: FeatureMatrix) -> tuple[np.ndarray, tuple[str, ...]]:
    X = np.column_stack([np.ones(fm.n), fm.X])
    return X, ("intercept", *fm.column_names)


def _draw_beta(rng, XtWX, XtWy, sigma2, b0, B0):
    """beta | rest ~ N(P^-1 (B0 b0 + X'Wy / s2), P^-1) with P = B0 + X'WX / s2."""
    P = B0 + XtWX / sigma2
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise SingularPrecision("posterior precision is not positive definite") from None
    rhs = B0 @ b0 + XtWy / sigma2
    mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return mean + np.linalg.solve(L.T, rng.standard_normal(mean.shape[0]))


def _draw_sigma2(rng, a0, d0, n, wss):
    return 1.0 / rng.gamma(a0 + 0.5 * n, 1.0 / (d0 + 0.5 * wss))


def _check_run(fm: FeatureMatrix, iters: int, burn_in: int):
    if not fm.n > fm.X.shape[1] + 1:
        raise InputError("need more rows than coefficients")
    if not (iters > burn_in >= 0):
        raise InputError("need iters > burn_in >= 0")


def gibbs_gaussian_regression(
    fm: FeatureMatrix,
    prior: RegressionPrior = RegressionPrior(),
    iters: int = 11000,
    burn_in: int = 1000,
    seed: int = 0,
    fixed_sigma2: float | None = None,
) -> McmcChain:
    """Conjugate Gibbs sampler for ``y = X beta + e``, ``e ~ N(0, sigma2)``.

    An intercept column is prepended. ``fixed_sigma2`` skips the variance
    update, which is only useful for checking the coefficient conditional.
    """
    _check_run(fm, iters, burn_in)
    X, names = _design(fm)
    y = fm.y
    n, p = X.shape
    b0, B0 = prior.resolve(p)
    if np.linalg.matrix_rank(X) < p and np.min(np.linalg.eigvalsh(B0)) <= 0:
        raise SingularPrecision("rank-deficient design with an improper coefficient prior")
    rng = np.random.default_rng(seed)
    XtX, Xty = X.T @ X, X.T @ y

    sigma2 = float(np.var(y)) if fixed_sigma2 is None else float(fixed_sigma2)
    sigma2 = max(sigma2, 1e-12)
    out = np.empty((iters, p + 1))
    for it in range(iters):
        beta = _draw_beta(rng, XtX, Xty, sigma2, b0, B0)
        if fixed_sigma2 is None:
            r = y - X @ beta
            sigma2 = _draw_sigma2(rng, prior.a0, prior.d0, n, float(r @ r))
        out[it, :p] = beta
        out[it, p] = sigma2
        if not np.all(np.isfinite(out[it])):
            raise ArithmeticError(f"non-finite draw at iteration {it}")
    return McmcChain((*names, "sigma2"), out, burn_in, seed, GAUSSIAN)


def _nu_log_target(nu: float, r2s: np.ndarray) -> float:
    """log p(nu | beta, sigma2, y) with the latent weights integrated out, flat prior on (2, 100]."""
    if not (2.0 < nu <= NU_MAX):
        return -math.inf
    n = r2s.shape[0]
    return float(
        n * (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu))
        - (nu + 1) / 2 * np.sum(np.log1p(r2s / nu))
    )


def fit_student_t_regression(
    fm: FeatureMatrix,
    prior: RegressionPrior = RegressionPrior(),
    iters: int = 11000,
    burn_in: int = 1000,
    seed: int = 0,
    promo_column: str | None = "promo",
    nu_init: float = 10.0,
    step: float = 0.4,
    force_unit_weights: bool = False,
) -> McmcChain:
    """Student-t errors via latent precision weights; Bernoulli promo rate alongside.

    Each sweep draws beta, sigma2, then (nu, weights) as a block: nu from its
    conditional with the weights integrated out, then the weights given nu.
    The Metropolis step size adapts toward 0.3 acceptance during burn-in and
    is frozen afterwards. ``force_unit_weights`` pins every weight at 1 and
    skips the nu update, reducing the sampler to the Gaussian one.
    """
    _check_run(fm, iters, burn_in)
    X, names = _design(fm)
    y = fm.y
    n, p = X.shape
    b0, B0 = prior.resolve(p)
    rng = np.random.default_rng(seed)

    promo = None
    if promo_column is not None:
        if promo_column not in fm.column_names:
            raise InputError(f"feature matrix has no {promo_column!r} column")
        promo = fm.column(promo_column)
        if not np.all((promo == 0) | (promo == 1)):
            raise InputError("promo column must be binary")

    lam = np.ones(n)
    sigma2 = max(float(np.var(y)), 1e-12)
    nu = float(nu_init)
    eta_step = step
    accepted = 0
    window_acc = 0
    extra = 2 if promo is not None else 1
    out = np.empty((iters, p + 1 + extra))
    for it in range(iters):
        Xw = X * lam[:, None]
        beta = _draw_beta(rng, Xw.T @ X, Xw.T @ y, sigma2, b0, B0)
        r = y - X @ beta
        sigma2 = _draw_sigma2(rng, prior.a0, prior.d0, n, float(lam @ (r * r)))
        if not force_unit_weights:
            r2s = r * r / sigma2
            eta = math.log(nu - 2.0)
            prop_eta = eta + eta_step * rng.standard_normal()
            prop = 2.0 + math.exp(prop_eta)
            # flat prior on nu: the log(nu - 2) Jacobian enters the ratio
            log_a = (_nu_log_target(prop, r2s) + prop_eta) - (_nu_log_target(nu, r2s) + eta)
            if math.log(rng.random()) < log_a:
                nu = prop
                accepted += it >= burn_in
                window_acc += 1
            lam = rng.gamma((nu + 1.0) / 2.0, 2.0 / (nu + r2s))
            if it < burn_in and (it + 1) % 50 == 0:
                rate = window_acc / 50.0
                eta_step *= math.exp(rate - 0.3)
                window_acc = 0
        out[it, :p] = beta
        out[it, p] = sigma2
        out[it, p + 1] = nu
        if promo is not None:
            k = float(promo.sum())
            out[it, p + 2] = rng.beta(1.0 + k, 1.0 + n - k)
        if not np.all(np.isfinite(out[it])):
            raise ArithmeticError(f"non-finite draw at iteration {it}")

    kept = iters - burn_in
    acc = accepted / kept if not force_unit_weights else 1.0
    if not force_unit_weights and acc < 0.05:
        warnings.warn(f"nu acceptance rate {acc:.3f} below 0.05", MetropolisStuck, stacklevel=2)
    pnames = (*names, "sigma2", "nu") + (("p_promo",) if promo is not None else ())
    return McmcChain(
        pnames, out, burn_in, seed, STUDENT_T,
        acceptance={"nu": acc},
        extras={"nu_step": eta_step},
    )


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Sample autocorrelation at lags 0..N-1 via FFT (biased normalisation)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    z = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(z, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """N / (1 + 2 sum rho_k), summing adjacent-lag pairs until the first negative pair."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    k = 0
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
        k += 2
    return n / tau


def _spectral_zero(x: np.ndarray) -> float:
    """Batch-means estimate of the spectral density at frequency zero."""
    n = x.shape[0]
    b = max(1, int(math.floor(math.sqrt(n))))
    k = n // b
    if k < 2:
        return float(np.var(x, ddof=1)) if n > 1 else 0.0
    means = x[: k * b].reshape(k, b).mean(axis=1)
    return b * float(np.var(means, ddof=1))


def geweke_z(x: np.ndarray, first: float = 0.1, last: float = 0.5) -> float:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if np.ptp(x) == 0:
        return 0.0
    a = x[: int(first * n)]
    b = x[n - int(last * n):]
    var = _spectral_zero(a) / a.shape[0] + _spectral_zero(b) / b.shape[0]
    if var <= 0:
        return 0.0
    return float((a.mean() - b.mean()) / math.sqrt(var))


def trace_diagnostics(chain: McmcChain) -> dict[str, dict[str, float]]:
    kept = chain.kept
    if kept.shape[0] < 200:
        raise ChainTooShort(f"need at least 200 post-burn-in draws, got {kept.shape[0]}")
    return {
        name: {"ess": effective_sample_size(kept[:, j]), "geweke_z": geweke_z(kept[:, j])}
        for j, name in enumerate(chain.param_names)
    }


def posterior_summary(chain: McmcChain) -> dict[str, dict[str, float]]:
    kept = chain.kept
    if kept.shape[0] == 0:
        raise EmptyChain("no post-burn-in draws")
    n = kept.shape[0]
    out = {}
    for j, name in enumerate(chain.param_names):
        col = kept[:, j]
        srt = np.sort(col)
        row = {"mean": float(col.mean()), "sd": float(col.std(ddof=1)) if n > 1 else 0.0}
        for q in QUANTILES:
            row[f"q{int(round(q * 100)):02d}"] = float(srt[order_statistic_index(q, n) - 1])
        out[name] = row
    return out


def posterior_predictive(
    chain: McmcChain, model_kind: str, x_new, n_draws: int, seed: int = 0
) -> np.ndarray:
    """Monte-Carlo draws of log-sales at covariates ``x_new`` (without the intercept entry)."""
    if model_kind not in (GAUSSIAN, STUDENT_T):
        raise InputError(f"unknown model kind {model_kind!r}")
    if model_kind != chain.kind or (model_kind == STUDENT_T and "nu" not in chain.param_names):
        raise KindMismatch(f"chain of kind {chain.kind!r} cannot drive a {model_kind!r} predictive")
    kept = chain.kept
    if kept.shape[0] == 0:
        raise EmptyChain("no post-burn-in draws")
    p = chain.param_names.index("sigma2")
    x = np.concatenate([[1.0], np.asarray(x_new, dtype=float).ravel()])
    if x.shape[0] != p:
        raise InputError(f"x_new needs {p - 1} entries")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, kept.shape[0], size=n_draws)
    mu = kept[idx, :p] @ x
    sd = np.sqrt(kept[idx, p])
    if model_kind == GAUSSIAN:
        eps = rng.standard_normal(n_draws)
    else:
        nu = kept[idx, chain.param_names.index("nu")]
        eps = rng.standard_t(nu)
    return mu + sd * eps
