"""Bivariate elliptical copulas, gamma marginals and value-at-risk.

Copulas are fitted by pseudo-likelihood on rank-transformed data; marginals
are fitted separately and joined back through inverse CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import special, stats
from scipy.optimize import minimize, minimize_scalar

from .errors import (
    BoundaryInput,
    DegenerateData,
    EmptyInput,
    InputError,
    LengthMismatch,
    NonPositiveData,
    OptimizerDiverged,
    TooFewRows,
)

RHO_BOUND = 0.999
NU_GRID = (3.0, 5.0, 8.0, 12.0, 20.0, 30.0)
NU_MAX = 500.0
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class PseudoObservations:
    U: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if U.ndim != 2:
            raise InputError("pseudo-observations must be an n x d matrix")
        if not np.all((U > 0) & (U < 1)):
            raise BoundaryInput("pseudo-observations must lie strictly inside (0, 1)")
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return int(self.U.shape[0])

    @property
    def d(self) -> int:
        return int(self.U.shape[1])

    def column(self, j: int) -> np.ndarray:
        return self.U[:, j]


def pseudo_observations(X) -> PseudoObservations:
    """Column-wise average ranks divided by n + 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise TooFewRows("pseudo-observations need at least 2 rows")
    R = stats.rankdata(X, method="average", axis=0)
    return PseudoObservations(R / (n + 1.0))


def _pair_counts(u: np.ndarray, v: np.ndarray) -> tuple[int, int, int, int]:
    """(concordant - discordant, total pairs, pairs tied in u, pairs tied in v)."""
    n = u.shape[0]
    s = 0
    tu = 0
    tv = 0
    for i in range(n - 1):
        du = np.sign(u[i + 1:] - u[i])
        dv = np.sign(v[i + 1:] - v[i])
        s += int(np.sum(du * dv))
        tu += int(np.count_nonzero(du == 0))
        tv += int(np.count_nonzero(dv == 0))
    return s, n * (n - 1) // 2, tu, tv


def kendall_tau(u, v) -> float:
    """Tie-adjusted Kendall rank correlation (tau-b) by an O(n^2) pair scan.

    A column with no variation yields 0.0.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise LengthMismatch("kendall_tau inputs differ in length")
    if u.shape[0] < 2:
        raise TooFewRows("kendall_tau needs at least 2 points")
    s, n0, tu, tv = _pair_counts(u, v)
    denom = math.sqrt(float(n0 - tu) * float(n0 - tv))
    if denom == 0:
        return 0.0
    return s / denom


@dataclass(frozen=True)
class GaussianCopulaParams:
    rho: float

    family = "gaussian"

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise InputError("Gaussian copula needs |rho| < 1")

    @property
    def n_params(self) -> int:
        return 1

    def to_dict(self) -> dict:
        return {"family": self.family, "rho": self.rho}


@dataclass(frozen=True)
class TCopulaParams:
    rho: float
    nu: float

    family = "t"

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise InputError("t copula needs |rho| < 1")
        if not self.nu > 2:
            raise InputError("t copula needs nu > 2")

    @property
    def n_params(self) -> int:
        return 2

    def to_dict(self) -> dict:
        return {"family": self.family, "rho": self.rho, "nu": self.nu}


CopulaParams = Union[GaussianCopulaParams, TCopulaParams]


def params_from_dict(doc: dict) -> CopulaParams:
    if doc["family"] == "gaussian":
        return GaussianCopulaParams(float(doc["rho"]))
    if doc["family"] == "t":
        return TCopulaParams(float(doc["rho"]), float(doc["nu"]))
    raise InputError(f"unknown copula family {doc['family']!r}")


@dataclass(frozen=True)
class CopulaFit:
    params: CopulaParams
    loglik: float
    start_loglik: float
    n: int

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.params.n_params

    def to_dict(self) -> dict:
        return {
            **self.params.to_dict(),
            "loglik": self.loglik,
            "start_loglik": self.start_loglik,
            "n": self.n,
            "aic": self.aic,
        }


def gaussian_log_density(rho: float, u, v) -> np.ndarray:
    x = special.ndtri(u)
    y = special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * math.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def t_log_density(rho: float, nu: float, u, v) -> np.ndarray:
    x = stats.t.ppf(u, nu)
    y = stats.t.ppf(v, nu)
    r2 = 1.0 - rho * rho
    q = (x * x - 2.0 * rho * x * y + y * y) / (nu * r2)
    joint = (
        special.gammaln((nu + 2.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - math.log(nu * math.pi)
        - 0.5 * math.log(r2)
        - (nu + 2.0) / 2.0 * np.log1p(q)
    )
    return joint - stats.t.logpdf(x, nu) - stats.t.logpdf(y, nu)


def _check_interior(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all((u > 0) & (u < 1)) and np.all((v > 0) & (v < 1))):
        raise BoundaryInput("copula arguments must lie strictly inside (0, 1)")
    return u, v


def copula_log_pdf(params: CopulaParams, u, v) -> np.ndarray:
    u, v = _check_interior(u, v)
    if isinstance(params, GaussianCopulaParams):
        return gaussian_log_density(params.rho, u, v)
    return t_log_density(params.rho, params.nu, u, v)


def copula_pdf(params: CopulaParams, u, v) -> np.ndarray | float:
    out = np.exp(copula_log_pdf(params, u, v))
    return float(out) if np.ndim(out) == 0 else out


def _bivariate(U: PseudoObservations, min_n: int) -> tuple[np.ndarray, np.ndarray]:
    if U.d != 2:
        raise InputError(f"bivariate fit needs d = 2, got {U.d}")
    if U.n < min_n:
        raise TooFewRows(f"need at least {min_n} observations, got {U.n}")
    return U.column(0), U.column(1)


def tau_to_rho(tau: float) -> float:
    return math.sin(math.pi * tau / 2.0)


def _start_rho(u, v) -> tuple[float, float]:
    tau = kendall_tau(u, v)
    if abs(tau) >= 1.0:
        raise DegenerateData("perfectly (anti-)concordant data has no interior copula fit")
    rho0 = float(np.clip(tau_to_rho(tau), -RHO_BOUND, RHO_BOUND))
    return tau, rho0


def fit_gaussian_copula(U: PseudoObservations) -> CopulaFit:
    """Kendall inversion start, then bounded one-dimensional likelihood refinement."""
    u, v = _bivariate(U, 10)
    _, rho0 = _start_rho(u, v)

    def nll(r):
        return -float(np.sum(gaussian_log_density(r, u, v)))

    start = -nll(rho0)
    res = minimize_scalar(nll, bounds=(-RHO_BOUND, RHO_BOUND), method="bounded", options={"xatol": 1e-9})
    rho, ll = (float(res.x), -float(res.fun)) if -res.fun > start else (rho0, start)
    return CopulaFit(GaussianCopulaParams(rho), ll, start, U.n)


def fit_t_copula(U: PseudoObservations) -> CopulaFit:
    """Pseudo-maximum-likelihood over (rho, log(nu - 2)) with a Nelder-Mead simplex."""
    u, v = _bivariate(U, 30)
    _, rho0 = _start_rho(u, v)

    def ll(r, nu):
        return float(np.sum(t_log_density(r, nu, u, v)))

    nu0 = max(NU_GRID, key=lambda nu: ll(rho0, nu))
    start = ll(rho0, nu0)

    def nll(z):
        r, eta = z
        nu = 2.0 + math.exp(eta) if eta < 50 else math.inf
        if abs(r) >= RHO_BOUND or not (nu <= NU_MAX):
            return math.inf
        val = -ll(r, nu)
        return val if math.isfinite(val) else math.inf

    res = minimize(
        nll,
        np.array([rho0, math.log(nu0 - 2.0)]),
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 2000},
    )
    if not math.isfinite(res.fun):
        raise OptimizerDiverged("t-copula likelihood is not finite at the optimum")
    if -res.fun >= start:
        rho, nu, best = float(res.x[0]), 2.0 + math.exp(float(res.x[1])), -float(res.fun)
    else:
        rho, nu, best = rho0, nu0, start
    return CopulaFit(TCopulaParams(rho, nu), best, start, U.n)


def _clip_unit(p: np.ndarray) -> np.ndarray:
    return np.clip(p, _TINY, _ONE_MINUS)


def sample_copula(params: CopulaParams, n: int, seed) -> PseudoObservations:
    """Elliptical sampling mapped to uniforms through the marginal CDF."""
    if n < 1:
        raise InputError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    rho = params.rho
    x = z[:, 0]
    y = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    if isinstance(params, TCopulaParams):
        w = np.sqrt(rng.chisquare(params.nu, size=n) / params.nu)
        U = np.column_stack([stats.t.cdf(x / w, params.nu), stats.t.cdf(y / w, params.nu)])
    else:
        U = np.column_stack([special.ndtr(x), special.ndtr(y)])
    return PseudoObservations(_clip_unit(U))


@dataclass(frozen=True)
class GammaMarginal:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InputError("gamma shape and scale must be positive")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def var(self) -> float:
        return self.shape * self.scale**2

    def cdf(self, x):
        return special.gammainc(self.shape, np.asarray(x, dtype=float) / self.scale)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, th = self.shape, self.scale
        return (k - 1.0) * np.log(x) - x / th - special.gammaln(k) - k * math.log(th)

    def loglik(self, x) -> float:
        return float(np.sum(self.logpdf(x)))

    def ppf(self, u, tol: float = 1e-10) -> np.ndarray:
        return gamma_ppf(u, self.shape, self.scale, tol)

    def to_dict(self) -> dict:
        return {"family": "gamma", "shape": self.shape, "scale": self.scale}


def gamma_ppf(u, shape: float, scale: float, tol: float = 1e-10, max_iter: int = 400) -> np.ndarray:
    """Inverse gamma CDF by a bracketed root-find alternating secant and bisection steps."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if not np.all((u > 0) & (u < 1)):
        raise BoundaryInput("quantile levels must lie strictly inside (0, 1)")

    def F(x):
        return special.gammainc(shape, x / scale)

    lo = np.zeros_like(u)
    flo = np.zeros_like(u)
    hi = np.full_like(u, shape * scale + 10.0 * math.sqrt(shape) * scale + scale)
    fhi = F(hi)
    while np.any(fhi < u):
        grow = fhi < u
        lo = np.where(grow, hi, lo)
        flo = np.where(grow, fhi, flo)
        hi = np.where(grow, hi * 2.0, hi)
        fhi = F(hi)

    for it in range(max_iter):
        # relative width so tiny quantiles of small-shape gammas keep full precision
        if np.all(hi - lo <= tol * np.maximum(hi, 1e-300)):
            break
        mid = 0.5 * (lo + hi)
        if it % 2 == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                sec = lo + (u - flo) * (hi - lo) / (fhi - flo)
            ok = np.isfinite(sec) & (sec > lo) & (sec < hi)
            x = np.where(ok, sec, mid)
        else:
            x = mid
        fx = F(x)
        below = fx < u
        lo = np.where(below, x, lo)
        flo = np.where(below, fx, flo)
        hi = np.where(below, hi, x)
        fhi = np.where(below, fhi, fx)
    # final secant interpolation inside the (tiny) bracket
    with np.errstate(divide="ignore", invalid="ignore"):
        x = lo + (u - flo) * (hi - lo) / (fhi - flo)
    x = np.where(np.isfinite(x) & (x >= lo) & (x <= hi), x, 0.5 * (lo + hi))
    return float(x[0]) if scalar else x


def fit_gamma_marginal(x, tol: float = 1e-12, max_iter: int = 100) -> GammaMarginal:
    """Method-of-moments start, Newton steps on the shape's MLE equation.

    Solves ``log(k) - digamma(k) = log(mean(x)) - mean(log(x))`` and sets
    ``scale = mean(x) / k``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] < 10:
        raise TooFewRows("gamma fit needs at least 10 observations")
    if not np.all(x > 0):
        raise NonPositiveData("gamma marginals need strictly positive data")
    m = float(x.mean())
    s2 = float(x.var(ddof=1))
    k = m * m / s2 if s2 > 0 else 1e6
    target = math.log(m) - float(np.mean(np.log(x)))
    if target <= 0:
        # all values (numerically) equal
        return GammaMarginal(float(k), float(m / k))
    for _ in range(max_iter):
        f = math.log(k) - special.digamma(k) - target
        fp = 1.0 / k - special.polygamma(1, k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= tol * k:
            k = k_new
            break
        k = k_new
    return GammaMarginal(float(k), float(m / k))


def moment_gamma(x) -> GammaMarginal:
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    s2 = float(x.var(ddof=1))
    return GammaMarginal(m * m / s2, s2 / m)


def inverse_cdf_map(U: PseudoObservations, marginals: Sequence[GammaMarginal]) -> np.ndarray:
    if len(marginals) != U.d:
        raise InputError(f"{len(marginals)} marginals for {U.d} columns")
    return np.column_stack([m.ppf(U.column(j)) for j, m in enumerate(marginals)])


@dataclass(frozen=True)
class JointModel:
    copula: CopulaParams
    marginals: tuple[GammaMarginal, ...]

    def __post_init__(self):
        if len(self.marginals) != 2:
            raise InputError("joint model is bivariate")

    def sample(self, n: int, seed) -> np.ndarray:
        return inverse_cdf_map(sample_copula(self.copula, n, seed), self.marginals)

    def to_dict(self) -> dict:
        return {"copula": self.copula.to_dict(), "marginals": [m.to_dict() for m in self.marginals]}

    @classmethod
    def from_dict(cls, doc: dict) -> "JointModel":
        return cls(
            params_from_dict(doc["copula"]),
            tuple(GammaMarginal(float(m["shape"]), float(m["scale"])) for m in doc["marginals"]),
        )


def order_statistic_index(level: float, n: int) -> int:
    """1-based index ``ceil(level * n)`` clamped to [1, n]; guards float noise like 0.95*100."""
    k = math.ceil(round(level * n, 9))
    return min(max(k, 1), n)


def value_at_risk(samples, level: float, tail: str = "upper") -> float:
    """Order-statistic quantile of ``samples``.

    ``tail="upper"`` returns the ``ceil(level * n)``-th smallest value (the
    convention for a loss variable). ``tail="lower"`` treats ``level`` as a
    confidence level on a gain variable such as sales and returns the
    ``ceil((1 - level) * n)``-th smallest value.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptyInput("value_at_risk of an empty sample")
    if not (0 < level < 1):
        raise InputError("level must lie in (0, 1)")
    if tail == "upper":
        k = order_statistic_index(level, x.size)
    elif tail == "lower":
        k = order_statistic_index(1.0 - level, x.size)
    else:
        raise InputError(f"unknown tail {tail!r}")
    return float(x[k - 1])


def pdf_grid(params: CopulaParams, m: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Density on an m x m midpoint grid; returns (grid points, density matrix)."""
    g = (np.arange(m) + 0.5) / m
    uu, vv = np.meshgrid(g, g, indexing="ij")
    return g, np.asarray(copula_pdf(params, uu.ravel(), vv.ravel())).reshape(m, m)
