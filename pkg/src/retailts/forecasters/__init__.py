"""Base learners: ARIMA, LASSO and gradient-boosted trees behind one ``predict``."""

from __future__ import annotations

import numpy as np

from ..errors import ColumnMismatch, InputError
from ..features import FeatureMatrix
from .arima import ArimaModel, ArimaOrder, fit_arima, forecast_arima
from .gbt import GbtModel, GbtParams, RegressionTree, fit_gbt
from .lasso import LassoModel, fit_lasso, kkt_violation, select_lambda_cv

__all__ = [
    "ArimaModel", "ArimaOrder", "fit_arima", "forecast_arima",
    "GbtModel", "GbtParams", "RegressionTree", "fit_gbt",
    "LassoModel", "fit_lasso", "kkt_violation", "select_lambda_cv",
    "predict", "check_columns",
]


def check_columns(expected: tuple[str, ...], fm: FeatureMatrix) -> None:
    if tuple(fm.column_names) != tuple(expected):
        raise ColumnMismatch(
            f"columns {list(fm.column_names)} do not match training columns {list(expected)}"
        )


def predict(model, data) -> np.ndarray:
    """Log-sales predictions: ``data`` is a horizon for ARIMA, a FeatureMatrix otherwise."""
    if isinstance(model, ArimaModel):
        return forecast_arima(model, int(data))
    if isinstance(model, (LassoModel, GbtModel)):
        if not isinstance(data, FeatureMatrix):
            raise InputError("feature models need a FeatureMatrix")
        check_columns(model.column_names, data)
        return model.predict(data.X)
    raise InputError(f"unsupported model type {type(model).__name__}")
