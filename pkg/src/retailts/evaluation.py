"""RMSE scoring and the per-store multi-method backtest."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data_core import SalesPanel, SeriesView, SplitSpec, iso, log_series, train_validation_split
from .ensemble import fit_blend, fit_stack, predict_blend, predict_stack
from .errors import EmptyInput, InputError, LengthMismatch, RetailTSError
from .features import IID, TS, FeatureSpec, build_iid_features, build_ts_features, ts_row
from .forecasters import (
    GbtParams,
    fit_arima,
    fit_gbt,
    fit_lasso,
    forecast_arima,
    select_lambda_cv,
)
from .forecasters.arima import fit_order

logger = logging.getLogger(__name__)

METHODS = ("arima", "lasso", "gbt", "gbt_ts", "gbt_iid", "blend", "stack")
FRAMING = {
    "arima": TS,
    "lasso": IID,
    "gbt": IID,
    "gbt_ts": TS,
    "gbt_iid": IID,
    "blend": "TS+IID",
    "stack": IID,
}

TS_SPEC = FeatureSpec(framing=TS, lags=frozenset(range(1, 8)), include_promo=True, calendar=frozenset())
IID_SPEC = FeatureSpec(framing=IID, include_promo=True)


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"shapes differ: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise EmptyInput("rmse of empty input")
    d = y - yhat
    return math.sqrt(float(d @ d) / d.size)


@dataclass
class BacktestConfig:
    arima_max: tuple[int, int, int] = (3, 1, 2)
    gbt: GbtParams = field(default_factory=GbtParams)
    stack_folds: int = 5
    blend_window: float = 0.2
    blend_protocol: str = "window"  # or "validation"
    lasso_lambda: float | None = None  # None: 5-fold CV

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arima_max"] = list(self.arima_max)
        return d


@dataclass
class BacktestReport:
    store_id: int
    rmse: dict[str, float]
    framing: dict[str, str]
    split: dict
    configs: dict
    errors: dict[str, str] = field(default_factory=dict)
    blend_window_rmse: dict[str, float] = field(default_factory=dict)
    validation_days: list[int] = field(default_factory=list)
    actual: list[float] = field(default_factory=list)
    predictions: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.rmse.items():
            if not (math.isfinite(v) and v >= 0):
                raise InputError(f"RMSE for {k} must be finite and non-negative")

    def to_dict(self, include_series: bool = True) -> dict:
        d = {
            "store_id": self.store_id,
            "rmse": dict(sorted(self.rmse.items())),
            "framing": dict(sorted(self.framing.items())),
            "split": self.split,
            "configs": self.configs,
            "errors": dict(sorted(self.errors.items())),
            "blend_window_rmse": dict(sorted(self.blend_window_rmse.items())),
        }
        if include_series:
            d["validation_dates"] = [iso(x) for x in self.validation_days]
            d["actual"] = self.actual
            d["predictions"] = dict(sorted(self.predictions.items()))
        return d

    def csv_rows(self) -> list[tuple[int, str, str, float]]:
        return [(self.store_id, m, self.framing[m], self.rmse[m]) for m in sorted(self.rmse)]


def recursive_ts_forecast(model, spec: FeatureSpec, history: np.ndarray, days, promo) -> np.ndarray:
    """Multi-step forecast feeding each prediction back in as a lag."""
    hist = list(np.asarray(history, dtype=float))
    out = np.empty(len(days))
    for i, (d, pr) in enumerate(zip(days, promo)):
        row = ts_row(np.asarray(hist), int(d), bool(pr), spec)
        out[i] = model.predict(row[None, :])[0]
        hist.append(out[i])
    return out


class _Pipelines:
    """Fit-on-train / predict-ahead helpers shared by the backtest methods."""

    def __init__(self, panel: SalesPanel, store: int, cfg: BacktestConfig):
        self.panel = panel
        self.store = store
        self.cfg = cfg
        self.models: dict = {}

    def iid(self, cutoff: int):
        fm = build_iid_features(self.panel, [self.store], IID_SPEC, cutoff)
        return fm

    def arima(self, train: SeriesView, ahead: SeriesView) -> tuple[np.ndarray, dict]:
        model = fit_arima(train, *self.cfg.arima_max)
        self.models["arima"] = model
        return forecast_arima(model, len(ahead)), {"order": str(model.order), "aic": model.aic}

    def gbt_iid(self, train: SeriesView, ahead: SeriesView) -> tuple[np.ndarray, dict]:
        fm = self.iid(train.last_day)
        tr = fm.rows(fm.row_days <= train.last_day)
        te = fm.rows(np.isin(fm.row_days, ahead.days))
        model = fit_gbt(tr, self.cfg.gbt)
        self.models["gbt_iid"] = model
        return model.predict(te.X), {"columns": list(fm.column_names), "trees": len(model.trees)}

    def gbt_ts(self, train: SeriesView, ahead: SeriesView) -> tuple[np.ndarray, dict]:
        fm = build_ts_features(train, None, TS_SPEC)
        model = fit_gbt(fm, self.cfg.gbt)
        self.models["gbt_ts"] = model
        pred = recursive_ts_forecast(model, TS_SPEC, train.log_sales, ahead.days, ahead.promo)
        return pred, {"columns": list(fm.column_names), "trees": len(model.trees)}

    def lasso(self, train: SeriesView, ahead: SeriesView) -> tuple[np.ndarray, dict]:
        fm = self.iid(train.last_day)
        tr = fm.rows(fm.row_days <= train.last_day)
        te = fm.rows(np.isin(fm.row_days, ahead.days))
        lam = self.cfg.lasso_lambda
        if lam is None:
            lam = select_lambda_cv(tr)
        model = fit_lasso(tr, lam)
        self.models["lasso"] = model
        return model.predict(te.X), {"lambda": lam}

    def stack(self, train: SeriesView, ahead: SeriesView) -> tuple[np.ndarray, dict]:
        fm = self.iid(train.last_day)
        tr = fm.rows(fm.row_days <= train.last_day)
        te = fm.rows(np.isin(fm.row_days, ahead.days))
        model = fit_stack(tr, self.cfg.gbt, self.cfg.stack_folds)
        self.models["stack"] = model
        return predict_stack(model, te), {"folds": self.cfg.stack_folds}


def backtest(
    panel: SalesPanel,
    store: int,
    methods=("arima", "gbt", "blend"),
    split: SplitSpec = SplitSpec(),
    seed: int = 0,
    config: BacktestConfig | None = None,
) -> BacktestReport:
    """Fit every requested method on the training window and score it on validation.

    ``seed`` seeds the boosted-tree subsampling. A method that raises is
    recorded under ``errors`` and the others still run.
    """
    cfg = config or BacktestConfig()
    cfg = BacktestConfig(**{**cfg.__dict__, "gbt": GbtParams(**{**cfg.gbt.__dict__, "seed": seed})})
    methods = list(dict.fromkeys(methods))
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise InputError(f"unknown methods: {unknown}")

    series = log_series(panel, store)
    train, val = train_validation_split(series, split)
    pipes = _Pipelines(panel, store, cfg)

    rm: dict[str, float] = {}
    preds: dict[str, list[float]] = {}
    errors: dict[str, str] = {}
    configs: dict = {"backtest": cfg.to_dict(), "seed": seed}
    blend_window: dict[str, float] = {}
    cache: dict[str, np.ndarray] = {}

    def run(name, fn):
        if name in cache:
            return cache[name]
        pred, info = fn(train, val)
        configs[name] = info
        cache[name] = pred
        return pred

    runners = {
        "arima": pipes.arima,
        "lasso": pipes.lasso,
        "gbt": pipes.gbt_iid,
        "gbt_iid": pipes.gbt_iid,
        "gbt_ts": pipes.gbt_ts,
        "stack": pipes.stack,
    }
    for name in methods:
        try:
            if name == "blend":
                pred = _blend(pipes, train, val, run, runners, blend_window, cfg, configs)
            else:
                pred = run(name, runners[name])
            rm[name] = rmse(val.log_sales, pred)
            preds[name] = [float(v) for v in pred]
        except RetailTSError as exc:
            logger.warning("store %s method %s failed: %s", store, name, exc)
            errors[name] = f"{type(exc).__name__}: {exc}"

    return BacktestReport(
        store_id=int(store),
        rmse=rm,
        framing={m: FRAMING[m] for m in rm},
        split={
            "validation_months": split.validation_months,
            "cutoff": iso(train.last_day),
            "train_rows": len(train),
            "validation_rows": len(val),
        },
        configs=configs,
        errors=errors,
        blend_window_rmse=blend_window,
        validation_days=[int(d) for d in val.days],
        actual=[float(v) for v in val.log_sales],
        predictions=preds,
    )


def rolling_arima_forecast(x: np.ndarray, start: int, horizon: int, arima_max) -> np.ndarray:
    """ARIMA forecasts of ``x[start:]`` in blocks of ``horizon`` steps from successive origins.

    The order is chosen once on ``x[:start]``; each later origin refits only the
    coefficients of that order on all data before it. Every block then has the
    same lead-time profile as the validation forecast it stands in for.
    """
    max_p, max_d, _ = arima_max
    first = fit_arima(x[:start], *arima_max)
    out = np.empty(x.shape[0] - start)
    for b0 in range(0, out.shape[0], horizon):
        b1 = min(out.shape[0], b0 + horizon)
        m = first if b0 == 0 else fit_order(x[: start + b0], first.order, n_cond=max_p + max_d)
        out[b0:b1] = forecast_arima(m, b1 - b0)
    return out


def _blend(pipes, train, val, run, runners, window_scores, cfg, configs):
    pred_a = run("arima", runners["arima"])
    pred_b = run("gbt", runners["gbt_iid"])
    if cfg.blend_protocol == "validation":
        model = fit_blend(pred_a, pred_b, val.log_sales)
    elif cfg.blend_protocol == "window":
        k = max(3, int(round(cfg.blend_window * len(train))))
        inner, window = train.take(slice(0, len(train) - k)), train.take(slice(len(train) - k, None))
        saved = dict(pipes.models)
        wa = rolling_arima_forecast(train.log_sales, len(train) - k, len(val), cfg.arima_max)
        wb, _ = pipes.gbt_iid(inner, window)
        pipes.models = saved  # keep the full-train fits, not the window refits
        model = fit_blend(wa, wb, window.log_sales)
        fitted = predict_blend(model, wa, wb)
        window_scores.update(
            arima=rmse(window.log_sales, wa),
            gbt=rmse(window.log_sales, wb),
            blend=rmse(window.log_sales, fitted),
        )
    else:
        raise InputError(f"unknown blend protocol {cfg.blend_protocol!r}")
    configs["blend"] = {**model.to_dict(), "protocol": cfg.blend_protocol}
    return predict_blend(model, pred_a, pred_b)


def backtest_many(panel: SalesPanel, stores, workers: int = 4, **kwargs) -> list[BacktestReport]:
    """Independent per-store backtests run concurrently, returned in store order."""
    stores = sorted(int(s) for s in stores)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda s: backtest(panel, s, **kwargs), stores))
    return reports
