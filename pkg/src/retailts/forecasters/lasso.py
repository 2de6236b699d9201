"""L1-penalized least squares by cyclic coordinate descent on standardized columns.

Objective on the standardized scale::

    (1 / 2n) * ||y - mean(y) - Z beta||^2 + lam * ||beta||_1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DidNotConverge, InputError
from ..features import FeatureMatrix

TOL = 1e-7
MAX_SWEEPS = 10_000
_LOOSE_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class LassoModel:
    column_names: tuple[str, ...]
    beta: np.ndarray  # original-scale coefficients
    intercept: float  # original-scale intercept
    lam: float
    means: np.ndarray
    sds: np.ndarray  # 0 marks a dropped zero-variance column
    beta_std: np.ndarray
    y_mean: float
    sweeps: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ self.beta

    def to_dict(self) -> dict:
        return {
            "kind": "lasso",
            "column_names": list(self.column_names),
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "lambda": self.lam,
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "beta_std": self.beta_std.tolist(),
            "y_mean": self.y_mean,
            "sweeps": self.sweeps,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LassoModel":
        return cls(
            tuple(doc["column_names"]),
            np.asarray(doc["beta"], dtype=float),
            float(doc["intercept"]),
            float(doc["lambda"]),
            np.asarray(doc["means"], dtype=float),
            np.asarray(doc["sds"], dtype=float),
            np.asarray(doc["beta_std"], dtype=float),
            float(doc["y_mean"]),
            int(doc.get("sweeps", 0)),
        )


def soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def standardize(X: np.ndarray):
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    scale = np.maximum(np.abs(means), 1.0)
    sds = np.where(sds > 1e-12 * scale, sds, 0.0)
    keep = sds > 0
    Z = np.zeros_like(X, dtype=float)
    Z[:, keep] = (X[:, keep] - means[keep]) / sds[keep]
    return Z, means, sds


def lambda_max(fm: FeatureMatrix) -> float:
    """Smallest penalty at which every coefficient is zero."""
    Z, _, _ = standardize(fm.X)
    yc = fm.y - fm.y.mean()
    if Z.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Z.T @ yc)) / fm.n)


def fit_lasso(
    fm: FeatureMatrix, lam: float, tol: float = TOL, max_sweeps: int = MAX_SWEEPS
) -> LassoModel:
    if lam < 0:
        raise InputError("lambda must be non-negative")
    n = fm.n
    if n < 2:
        raise InputError("LASSO needs at least two rows")
    Z, means, sds = standardize(fm.X)
    y_mean = float(fm.y.mean())
    yc = fm.y - y_mean
    p = Z.shape[1]
    active = np.flatnonzero(sds > 0)

    # covariance updates: grad_j = <z_j, r> / n with r the current residual
    G = (Z.T @ Z) / n
    grad = (Z.T @ yc) / n
    beta = np.zeros(p)
    sweeps = 0
    delta = 0.0
    for sweeps in range(1, max_sweeps + 1):
        delta = 0.0
        for j in active:
            old = beta[j]
            rho = grad[j] + G[j, j] * old
            new = soft_threshold(rho, lam) / G[j, j]
            if new != old:
                diff = new - old
                grad -= G[:, j] * diff
                beta[j] = new
                delta = max(delta, abs(diff))
        if delta < tol:
            break
    else:
        if delta > _LOOSE_TOL:
            raise DidNotConverge(f"coordinate descent stalled at change {delta:.3g}")

    coef = np.zeros(p)
    coef[active] = beta[active] / sds[active]
    intercept = y_mean - float(coef @ means)
    return LassoModel(fm.column_names, coef, intercept, float(lam), means, sds, beta, y_mean, sweeps)


def kkt_violation(model: LassoModel, fm: FeatureMatrix) -> float:
    """Largest breach of the LASSO optimality conditions on the standardized scale."""
    Z, _, _ = standardize(fm.X)
    r = fm.y - fm.y.mean() - Z @ model.beta_std
    g = np.abs(Z.T @ r) / fm.n
    worst = 0.0
    for j in np.flatnonzero(model.sds > 0):
        if model.beta_std[j] != 0:
            worst = max(worst, abs(g[j] - model.lam))
        else:
            worst = max(worst, g[j] - model.lam)
    return worst


def lasso_objective(fm: FeatureMatrix, beta_std: np.ndarray, lam: float) -> float:
    Z, _, _ = standardize(fm.X)
    r = fm.y - fm.y.mean() - Z @ beta_std
    return float(r @ r) / (2 * fm.n) + lam * float(np.abs(beta_std).sum())


def select_lambda_cv(fm: FeatureMatrix, n_lambdas: int = 20, folds: int = 5) -> float:
    """Pick the penalty with the lowest contiguous-fold CV squared error.

    The grid is log-spaced from ``lambda_max`` down to ``1e-3 * lambda_max``.
    """
    lmax = lambda_max(fm)
    if lmax <= 0:
        return 0.0
    grid = np.geomspace(lmax, lmax * 1e-3, n_lambdas)
    bounds = np.linspace(0, fm.n, folds + 1).astype(int)
    scores = np.zeros(n_lambdas)
    for k in range(folds):
        test = np.zeros(fm.n, dtype=bool)
        test[bounds[k]:bounds[k + 1]] = True
        if test.all() or not test.any():
            continue
        train = fm.rows(~test)
        for i, lam in enumerate(grid):
            m = fit_lasso(train, lam)
            err = fm.y[test] - m.predict(fm.X[test])
            scores[i] += float(err @ err)
    return float(grid[int(np.argmin(scores))])
