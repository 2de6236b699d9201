"""Non-seasonal ARIMA fitted by conditional sum of squares with AIC order search."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..data_core import SeriesView
from ..errors import InputError, OptimizerDiverged, SeriesTooShort

logger = logging.getLogger(__name__)

_MAXITER = 500
_RTOL = 1e-8
# minimum root modulus for the AR and MA polynomials
ROOT_MARGIN = 1.01


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise InputError("ARIMA orders must be non-negative")
        if self.d not in (0, 1, 2):
            raise InputError("differencing order must be 0, 1 or 2")

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True, eq=False)
class ArimaModel:
    order: ArimaOrder
    phi: np.ndarray
    theta: np.ndarray
    intercept: float
    sigma2: float
    aic: float
    css: float
    n_resid: int
    last_values: np.ndarray  # tail of the differenced series, most recent last
    last_residuals: np.ndarray  # tail of the innovations, most recent last
    last_levels: tuple[float, ...]  # final value of x, diff(x), ... for undifferencing

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InputError("sigma2 must be positive")
        if self.phi.shape != (self.order.p,) or self.theta.shape != (self.order.q,):
            raise InputError("coefficient counts do not match the order")

    def to_dict(self) -> dict:
        return {
            "kind": "arima",
            "order": [self.order.p, self.order.d, self.order.q],
            "phi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "intercept": self.intercept,
            "sigma2": self.sigma2,
            "aic": self.aic,
            "css": self.css,
            "n_resid": self.n_resid,
            "last_values": self.last_values.tolist(),
            "last_residuals": self.last_residuals.tolist(),
            "last_levels": list(self.last_levels),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ArimaModel":
        return cls(
            ArimaOrder(*doc["order"]),
            np.asarray(doc["phi"], dtype=float),
            np.asarray(doc["theta"], dtype=float),
            float(doc["intercept"]),
            float(doc["sigma2"]),
            float(doc["aic"]),
            float(doc["css"]),
            int(doc["n_resid"]),
            np.asarray(doc["last_values"], dtype=float),
            np.asarray(doc["last_residuals"], dtype=float),
            tuple(float(v) for v in doc["last_levels"]),
        )


def difference(x: np.ndarray, d: int) -> tuple[np.ndarray, tuple[float, ...]]:
    """Apply ``d`` first differences; also return the last value at each level."""
    levels = []
    w = np.asarray(x, dtype=float)
    for _ in range(d):
        levels.append(float(w[-1]))
        w = np.diff(w)
    return w, tuple(levels)


def css_residuals(w: np.ndarray, intercept: float, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One-step innovations for t >= p with pre-sample innovations fixed at zero."""
    p = phi.shape[0]
    n = w.shape[0]
    ar = w[p:] - intercept
    for i in range(p):
        ar = ar - phi[i] * w[p - 1 - i:n - 1 - i]
    if theta.shape[0] == 0:
        return ar
    return lfilter([1.0], np.concatenate([[1.0], theta]), ar)


def css(w: np.ndarray, intercept: float, phi: np.ndarray, theta: np.ndarray, skip: int = 0) -> float:
    """Sum of squared innovations, leaving out the first ``skip`` of them."""
    with np.errstate(over="ignore", invalid="ignore"):
        e = css_residuals(w, intercept, phi, theta)[skip:]
        val = float(e @ e)
    return val if math.isfinite(val) else math.inf


def admissible(phi: np.ndarray, theta: np.ndarray, margin: float = ROOT_MARGIN) -> bool:
    """Stationary AR part and invertible MA part, with roots kept off the unit circle."""
    for poly in (np.concatenate([[1.0], -phi]), np.concatenate([[1.0], theta])):
        coef = np.trim_zeros(poly[::-1], "f")
        if coef.shape[0] > 1 and np.any(np.abs(np.roots(coef)) < margin):
            return False
    return True


def yule_walker(w: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return np.empty(0)
    z = w - w.mean()
    n = z.shape[0]
    denom = float(z @ z)
    if denom <= 0:
        return np.zeros(p)
    acf = np.array([float(z[: n - k] @ z[k:]) / denom for k in range(p + 1)])
    R = acf[np.abs(np.subtract.outer(np.arange(p), np.arange(p)))]
    try:
        phi = np.linalg.solve(R, acf[1:])
    except np.linalg.LinAlgError:
        return np.zeros(p)
    # keep the start point inside the stationary region
    while not admissible(phi, np.empty(0)):
        phi = phi * 0.5
    return phi


def _aic(ss: float, n: int, k: int) -> float:
    return n * math.log(max(ss / n, 1e-300)) + 2 * k


def fit_order(x: np.ndarray, order: ArimaOrder, n_cond: int | None = None) -> ArimaModel:
    """Fit one ARIMA order by CSS with a Nelder-Mead simplex and one restart.

    The squared innovations are summed from observation ``n_cond`` of ``x``
    onward (default ``p + d``, the first one the recursion can produce).
    Candidates compared by AIC should share one ``n_cond``.
    """
    p, d, q = order.p, order.d, order.q
    if n_cond is None:
        n_cond = p + d
    if n_cond < p + d:
        raise InputError(f"n_cond={n_cond} is below p + d for {order}")
    w, levels = difference(x, d)
    skip = n_cond - p - d
    if w.shape[0] - p - skip <= p + q + 1:
        raise SeriesTooShort(f"{w.shape[0]} points after differencing cannot fit {order}")
    use_c = d < 2

    def unpack(v):
        c = v[0] if use_c else 0.0
        off = 1 if use_c else 0
        return c, v[off:off + p], v[off + p:off + p + q]

    phi0 = yule_walker(w, p)
    c0 = float(w.mean() * (1.0 - phi0.sum())) if use_c else 0.0
    start = np.concatenate([[c0] if use_c else [], phi0, np.zeros(q)])

    def objective(v):
        c, phi, theta = unpack(v)
        if not admissible(phi, theta):
            return math.inf
        return css(w, c, phi, theta, skip)

    f0 = objective(start)
    best_v, best_f = start, f0
    if start.size:
        for _ in range(2):
            res = minimize(
                objective,
                best_v,
                method="Nelder-Mead",
                options={
                    "maxiter": _MAXITER,
                    "xatol": _RTOL,
                    "fatol": _RTOL * max(best_f, 1e-300) if math.isfinite(best_f) else _RTOL,
                },
            )
            if res.fun < best_f:
                best_v, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    if not math.isfinite(best_f):
        raise OptimizerDiverged(f"non-finite CSS for order {order}")
    # the contract: never worse than the start point
    assert best_f <= f0

    c, phi, theta = unpack(best_v)
    e = css_residuals(w, c, phi, theta)
    n = e.shape[0] - skip
    return ArimaModel(
        order=order,
        phi=np.array(phi, dtype=float),
        theta=np.array(theta, dtype=float),
        intercept=float(c),
        sigma2=max(best_f / n, 1e-300),
        aic=_aic(best_f, n, p + q + 1),
        css=best_f,
        n_resid=n,
        last_values=w[max(0, w.shape[0] - p):].copy() if p else np.empty(0),
        last_residuals=e[max(0, e.shape[0] - q):].copy() if q else np.empty(0),
        last_levels=levels,
    )


def fit_arima(
    train: SeriesView | np.ndarray, max_p: int = 3, max_d: int = 1, max_q: int = 2
) -> ArimaModel:
    """Grid search over (p, d, q) up to the maxima, keeping the lowest-AIC fit.

    Every candidate conditions on the first ``max_p + max_d`` observations so
    that CSS, and hence AIC, is summed over the same observations. Ties keep
    the first candidate in (p, d, q) lexicographic order.
    """
    x = train.log_sales if isinstance(train, SeriesView) else np.asarray(train, dtype=float)
    if max_d not in (0, 1, 2) or max_p < 0 or max_q < 0:
        raise InputError("invalid ARIMA maxima")
    need = 10 * (max_p + max_q + 1)
    if x.shape[0] < need:
        raise SeriesTooShort(f"need at least {need} points, got {x.shape[0]}")

    fits = []
    for p, d, q in itertools.product(range(max_p + 1), range(max_d + 1), range(max_q + 1)):
        m = fit_order(x, ArimaOrder(p, d, q), n_cond=max_p + max_d)
        logger.debug("ARIMA%s aic=%.4f", m.order, m.aic)
        fits.append(m)
    best = min(fits, key=lambda m: m.aic)
    assert all(best.aic <= m.aic for m in fits)
    return best


def forecast_arima(model: ArimaModel, horizon: int) -> np.ndarray:
    """Recursive point forecast with future innovations at zero."""
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    p, q = model.order.p, model.order.q
    hist = list(model.last_values)
    errs = list(model.last_residuals)
    out = np.empty(horizon)
    for h in range(horizon):
        val = model.intercept
        for i in range(p):
            val += model.phi[i] * hist[-1 - i]
        for j in range(q):
            k = len(errs) - 1 - j
            if k >= 0:
                val += model.theta[j] * errs[k]
        out[h] = val
        hist.append(val)
        errs.append(0.0)
    for level in reversed(model.last_levels):
        out = level + np.cumsum(out)
    return out
