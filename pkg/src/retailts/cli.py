"""``retailts`` command line: synthetic data, forecasting, copulas, vines and Bayesian regression.

Every run writes its outputs, a ``config.txt`` snapshot and a ``run.log`` to
one output directory. Feeding the snapshot back through ``--config`` rebuilds
the same run.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bayes import (
    RegressionPrior,
    fit_student_t_regression,
    gibbs_gaussian_regression,
    posterior_predictive,
    posterior_summary,
    trace_diagnostics,
)
from .copulas import (
    JointModel,
    fit_gamma_marginal,
    fit_gaussian_copula,
    fit_t_copula,
    kendall_tau,
    pdf_grid,
    pseudo_observations,
    value_at_risk,
)
from .data_core import (
    GeneratorParams,
    SalesPanel,
    SplitSpec,
    iso,
    load_sales_csv,
    log_series,
    open_positive_mask,
    parse_date,
    synthesize_panel,
    train_validation_split,
)
from .errors import BadFlag, InputError, RetailTSError, UnknownCommand
from .evaluation import (
    FRAMING,
    IID_SPEC,
    METHODS,
    TS_SPEC,
    BacktestConfig,
    _Pipelines,
    backtest_many,
    recursive_ts_forecast,
    rmse,
)
from .features import IID, FeatureSpec, build_iid_features
from .forecasters import ArimaModel, GbtModel, GbtParams, LassoModel, forecast_arima
from .report import emit_report, load_model, model_document
from .svg import PlotSpec, Series, write_svg
from .vine import fit_cvine, jittered_pseudo_observations, sample_cvine

ENV_OUT = "RETAILTS_OUT"
DEFAULT_OUT = "retailts-runs"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
MAX_SCATTER_POINTS = 2000

logger = logging.getLogger("retailts.cli")


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so ``cli_dispatch`` owns the exit code."""

    def error(self, message):
        raise BadFlag(message)


# ---------------------------------------------------------------- arguments


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _methods(text: str) -> list[str]:
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return out


def _unit(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("value must lie in (0, 1)")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output root (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    p.add_argument("--config", help="flat key=value file; flags on the command line override it")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument(
        "--deterministic", action=argparse.BooleanOptionalAction, default=False,
        help="write straight into --out instead of a timestamped subdirectory",
    )


def _panel_args(p, store=True, store_required=False):
    p.add_argument("--panel", required=True, help="canonical panel CSV (from synth or ingest)")
    if store:
        p.add_argument("--store", type=int, required=store_required, default=None)


def _split_args(p):
    p.add_argument("--validation-months", type=int, default=2)
    p.add_argument("--cutoff", default=None, help="explicit last training date, YYYY-MM-DD")


def _gbt_args(p):
    d = GbtParams()
    p.add_argument("--n-trees", type=int, default=d.n_trees)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--subsample", type=float, default=d.subsample)
    p.add_argument("--min-leaf", type=int, default=d.min_leaf)


def _mcmc_args(p):
    p.add_argument("--iters", type=int, default=11000)
    p.add_argument("--burn-in", type=int, default=1000)


def build_parser() -> _Parser:
    parser = _Parser(prog="retailts", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"retailts {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic multi-store panel")
    _common(p)
    g = GeneratorParams()
    p.add_argument("--stores", type=int, default=3)
    p.add_argument("--days", type=int, default=730)
    p.add_argument("--start", default=g.start.isoformat())
    p.add_argument("--ar-coef", type=float, default=g.ar_coef)
    p.add_argument("--noise-sd", type=float, default=g.noise_sd)
    p.add_argument("--promo-uplift", type=float, default=g.promo_uplift)
    p.add_argument("--promo-rate", type=float, default=g.promo_rate)
    p.add_argument("--weekday-scale", type=float, default=1.0, help="multiplies the weekday effects")

    p = sub.add_parser("ingest", help="load a sales CSV into the canonical panel format")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--dayfirst", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--schema", default="", help="field=Column pairs, e.g. store=StoreId,date=Day")

    p = sub.add_parser("forecast", help="fit one forecaster on the training window and score it")
    _common(p)
    _panel_args(p, store_required=True)
    _split_args(p)
    _gbt_args(p)
    p.add_argument("--method", choices=("arima", "lasso", "gbt", "gbt_ts"), default="arima")
    p.add_argument("--model", default=None, help="score a saved model.json instead of fitting")
    p.add_argument("--lasso-lambda", type=float, default=None)

    p = sub.add_parser("blend", help="ARIMA + GBT linear blend")
    _common(p)
    _panel_args(p, store_required=True)
    _split_args(p)
    _gbt_args(p)
    p.add_argument("--blend-protocol", choices=("window", "validation"), default="window")
    p.add_argument("--blend-window", type=_unit, default=0.2)

    p = sub.add_parser("stack", help="LASSO level-1, GBT level-2 stacking")
    _common(p)
    _panel_args(p, store_required=True)
    _split_args(p)
    _gbt_args(p)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("backtest", help="multi-method validation RMSE per store")
    _common(p)
    _panel_args(p)
    _split_args(p)
    _gbt_args(p)
    p.add_argument("--all-stores", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--methods", type=_methods, default=["arima", "gbt", "blend"])
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--blend-protocol", choices=("window", "validation"), default="window")
    p.add_argument("--blend-window", type=_unit, default=0.2)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("copula-fit", help="gamma marginals + bivariate copula")
    _common(p)
    _panel_args(p)
    p.add_argument("--family", choices=("t", "gaussian"), default="t")
    p.add_argument("--pair", choices=("customers", "lag"), default="customers",
                   help="second variable: customers or previous-day log-sales")

    p = sub.add_parser("copula-sample", help="simulate from a saved joint model and report VaR")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--level", type=_unit, default=0.95)

    p = sub.add_parser("vine-fit", help="C-vine over logSales, meanLogSales and promo")
    _common(p)
    _panel_args(p, store=False)
    p.add_argument("--stores", type=_ints, default=None, help="comma-separated ids; default all")
    p.add_argument("--n-sample", type=int, default=5000)

    for name, helptext in (("bayes-gaussian", "Gibbs sampler, Gaussian errors"),
                           ("bayes-student", "Gibbs sampler, Student-t errors and Bernoulli promo")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _panel_args(p, store=False)
        _mcmc_args(p)
        p.add_argument("--stores", type=_ints, default=None, help="comma-separated ids; default all")
        p.add_argument("--cutoff", default=None, help="use rows on or before this date only")
        p.add_argument("--calendar", action=argparse.BooleanOptionalAction, default=False,
                       help="add weekday/month/monthday covariates")
        p.add_argument("--predictive-draws", type=int, default=10000)
        p.add_argument("--level", type=_unit, default=0.95)

    p = sub.add_parser("report", help="collect report.json files from earlier runs")
    _common(p)
    p.add_argument("--inputs", required=True, help="comma-separated run directories")
    return parser


COMMANDS = (
    "synth", "ingest", "forecast", "blend", "stack", "backtest", "copula-fit",
    "copula-sample", "vine-fit", "bayes-gaussian", "bayes-student", "report",
)

# Not part of the snapshot: where results go and where the snapshot came from.
_UNSNAPPED = {"out", "config", "command"}


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise UnknownCommand(command)


def read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise BadFlag(f"{path}:{i}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def config_to_argv(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> list[str]:
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    argv: list[str] = []
    for key, value in cfg.items():
        if key in _UNSNAPPED:
            continue
        a = actions.get(key)
        if a is None:
            raise BadFlag(f"unknown config key {key!r}")
        flag = a.option_strings[0]
        if isinstance(a, argparse.BooleanOptionalAction):
            if value.lower() not in ("true", "false"):
                raise BadFlag(f"config key {key!r} needs true or false")
            argv.append(flag if value.lower() == "true" else "--no-" + flag[2:])
        elif value == "":
            continue  # unset optional value
        else:
            argv.append(f"{flag}={value}")
    return argv


def _snapshot_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def config_snapshot(command: str, args: argparse.Namespace) -> str:
    lines = [f"# retailts {command}"]
    for k in sorted(vars(args)):
        if k in _UNSNAPPED:
            continue
        lines.append(f"{k}={_snapshot_value(getattr(args, k))}")
    return "\n".join(lines) + "\n"


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    if not argv or argv[0] in ("-h", "--help", "--version"):
        parser.parse_args(argv)
        raise UnknownCommand("no command given")
    command = argv[0]
    if command not in COMMANDS:
        raise UnknownCommand(f"unknown command {command!r}")
    sub = _subparser(parser, command)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    prefix = config_to_argv(sub, read_config(known.config)) if known.config else []
    return parser.parse_args([command, *prefix, *argv[1:]])


# ---------------------------------------------------------------- run context


class Run:
    def __init__(self, args: argparse.Namespace):
        root = Path(args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)
        if args.deterministic:
            self.dir = root
        else:
            stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
            self.dir = root / f"{args.command}-{stamp}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.args = args
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write(self, name: str, data: bytes | str) -> None:
        if isinstance(data, str):
            data = data.encode("utf-8")
        with open(self.path(name), "wb") as fh:
            fh.write(data)
        self.files.append(name)
        logger.info("wrote %s", name)

    def report(self, results: dict, csv_results: dict | None = None) -> None:
        self.write("report.json", emit_report(results, "json"))
        self.write("report.csv", emit_report(csv_results if csv_results is not None else results, "csv"))

    def model(self, model) -> None:
        self.write("model.json", json.dumps(model_document(model), sort_keys=True, indent=2) + "\n")

    def figure(self, name: str, spec: PlotSpec) -> None:
        spec.path = None
        self.write(f"figures/{name}.svg", write_svg(spec))


# ---------------------------------------------------------------- helpers


def _load_panel(path: str) -> SalesPanel:
    with open(path, "rb") as fh:
        return load_sales_csv(fh)


def _split(args) -> SplitSpec:
    cutoff = parse_date(args.cutoff) if args.cutoff else None
    return SplitSpec(validation_months=args.validation_months, cutoff_date=cutoff)


def _gbt(args) -> GbtParams:
    return GbtParams(
        n_trees=args.n_trees, max_depth=args.max_depth, learning_rate=args.learning_rate,
        subsample=args.subsample, min_leaf=args.min_leaf, seed=args.seed,
    )


def _thin(n: int, cap: int = MAX_SCATTER_POINTS) -> np.ndarray:
    return np.arange(n) if n <= cap else np.linspace(0, n - 1, cap).round().astype(int)


def _forecast_figure(run: Run, name: str, store: int, days, actual, preds: dict) -> None:
    x = [float(d - days[0]) for d in days]
    series = [Series("actual", list(actual), x)]
    series += [Series(m, list(p), x) for m, p in sorted(preds.items())]
    run.figure(name, PlotSpec(
        "line", f"Store {store}: validation forecasts", series,
        xlabel=f"days since {iso(int(days[0]))}", ylabel="log sales",
    ))


def _backtest_config(args, **kw) -> BacktestConfig:
    return BacktestConfig(gbt=_gbt(args), **kw)


# ---------------------------------------------------------------- commands


def cmd_synth(run: Run, args) -> None:
    base = GeneratorParams()
    gen = GeneratorParams(
        weekday_effect=tuple(args.weekday_scale * w for w in base.weekday_effect),
        ar_coef=args.ar_coef, noise_sd=args.noise_sd, promo_uplift=args.promo_uplift,
        promo_rate=args.promo_rate, start=parse_date(args.start),
    )
    panel = synthesize_panel(args.seed, args.stores, args.days, gen)
    run.write("panel.csv", panel.to_csv())
    stores = {}
    series = []
    for s in panel.stores:
        v = log_series(panel, s)
        stores[str(s)] = {"rows": len(v), "mean_log_sales": float(np.mean(v.log_sales)),
                          "promo_share": float(np.mean(v.promo))}
        if len(series) < 3:
            series.append(Series(f"store {s}", list(v.log_sales), [float(d - v.days[0]) for d in v.days]))
    run.report({"command": "synth", "rows": len(panel), "stores": stores})
    run.figure("log_sales", PlotSpec("line", "Synthetic daily log sales", series,
                                     xlabel="day", ylabel="log sales"))


def cmd_ingest(run: Run, args) -> None:
    schema = {}
    for part in filter(None, (t.strip() for t in args.schema.split(","))):
        if "=" not in part:
            raise BadFlag(f"schema entry {part!r} must be field=Column")
        k, v = part.split("=", 1)
        schema[k.strip().lower()] = v.strip()
    with open(args.input, "rb") as fh:
        panel = load_sales_csv(fh, schema or None, dayfirst=args.dayfirst)
    run.write("panel.csv", panel.to_csv())
    ok = open_positive_mask(panel)
    stores = {}
    for s in panel.stores:
        sl = panel.store_rows(s)
        stores[str(s)] = {"rows": int(sl.stop - sl.start), "open_positive_rows": int(ok[sl].sum()),
                          "first": iso(int(panel.day[sl][0])), "last": iso(int(panel.day[sl][-1]))}
    run.report({"command": "ingest", "rows": len(panel), "stores": stores})


def _score_saved(model, pipes: _Pipelines, train, val) -> tuple[str, np.ndarray]:
    if isinstance(model, ArimaModel):
        return "arima", forecast_arima(model, len(val))
    if isinstance(model, GbtModel) and "prevLogSales" in model.column_names:
        return "gbt_ts", recursive_ts_forecast(model, TS_SPEC, train.log_sales, val.days, val.promo)
    if isinstance(model, (GbtModel, LassoModel)):
        fm = pipes.iid(train.last_day)
        te = fm.rows(np.isin(fm.row_days, val.days))
        from .forecasters import predict
        return ("lasso" if isinstance(model, LassoModel) else "gbt"), predict(model, te)
    raise InputError(f"saved model of type {type(model).__name__} cannot forecast")


def cmd_forecast(run: Run, args) -> None:
    panel = _load_panel(args.panel)
    split = _split(args)
    train, val = train_validation_split(log_series(panel, args.store), split)
    cfg = _backtest_config(args, lasso_lambda=args.lasso_lambda)
    pipes = _Pipelines(panel, args.store, cfg)
    if args.model:
        with open(args.model, encoding="utf-8") as fh:
            model = load_model(json.load(fh))
        method, pred = _score_saved(model, pipes, train, val)
        info = {"model": "loaded"}
    else:
        method = args.method
        fn = {"arima": pipes.arima, "lasso": pipes.lasso, "gbt": pipes.gbt_iid, "gbt_ts": pipes.gbt_ts}[method]
        pred, info = fn(train, val)
        model = pipes.models["gbt_iid" if method == "gbt" else method]
        run.model(model)
    score = rmse(val.log_sales, pred)
    run.report(
        {"command": "forecast", "store_id": args.store, "method": method, "framing": FRAMING[method],
         "rmse": score, "fit": info, "cutoff": iso(train.last_day),
         "validation_dates": [iso(int(d)) for d in val.days], "predictions": pred,
         "actual": val.log_sales},
        {"columns": ["store", "method", "framing", "rmse"], "rows": [[args.store, method, FRAMING[method], score]]},
    )
    _forecast_figure(run, f"forecast_store{args.store}", args.store, val.days, val.log_sales, {method: pred})


def _run_backtests(run: Run, args, stores, methods, cfg) -> list:
    reports = backtest_many(
        _load_panel(args.panel), stores, workers=getattr(args, "workers", 1),
        methods=methods, split=_split(args), seed=args.seed, config=cfg,
    )
    rows = [list(r) for rep in reports for r in rep.csv_rows()]
    run.report(
        {"command": args.command, "reports": [rep.to_dict() for rep in reports]},
        {"columns": ["store", "method", "framing", "rmse"], "rows": rows},
    )
    for rep in reports:
        if rep.predictions:
            _forecast_figure(run, f"forecasts_store{rep.store_id}", rep.store_id,
                             rep.validation_days, rep.actual, rep.predictions)
    for rep in reports:
        for m, err in rep.errors.items():
            logger.warning("store %d %s failed: %s", rep.store_id, m, err)
    return reports


def cmd_backtest(run: Run, args) -> None:
    if args.all_stores == (args.store is not None):
        raise BadFlag("give exactly one of --store or --all-stores")
    stores = _load_panel(args.panel).stores if args.all_stores else [args.store]
    cfg = _backtest_config(args, stack_folds=args.folds, blend_window=args.blend_window,
                           blend_protocol=args.blend_protocol)
    _run_backtests(run, args, stores, args.methods, cfg)


def cmd_blend(run: Run, args) -> None:
    cfg = _backtest_config(args, blend_window=args.blend_window, blend_protocol=args.blend_protocol)
    (rep,) = _run_backtests(run, args, [args.store], ["arima", "gbt", "blend"], cfg)
    if "blend" in rep.configs:
        from .ensemble import BlendModel
        run.model(BlendModel.from_dict(rep.configs["blend"]))


def cmd_stack(run: Run, args) -> None:
    panel = _load_panel(args.panel)
    cfg = _backtest_config(args, stack_folds=args.folds)
    _run_backtests(run, args, [args.store], ["lasso", "gbt", "stack"], cfg)
    train, val = train_validation_split(log_series(panel, args.store), _split(args))
    pipes = _Pipelines(panel, args.store, cfg)
    pipes.stack(train, val)
    run.model(pipes.models["stack"])


def _pair_data(panel: SalesPanel, store: int | None, pair: str) -> tuple[np.ndarray, list[str]]:
    stores = panel.stores if store is None else [store]
    xs, ys = [], []
    for s in stores:
        v = log_series(panel, s)
        if pair == "customers":
            keep = v.customers > 0
            xs.append(v.log_sales[keep])
            ys.append(v.customers[keep])
        else:
            consecutive = np.diff(v.days) == 1
            xs.append(v.log_sales[1:][consecutive])
            ys.append(v.log_sales[:-1][consecutive])
    names = ["logSales", "Customers" if pair == "customers" else "prevLogSales"]
    return np.column_stack([np.concatenate(xs), np.concatenate(ys)]), names


def cmd_copula_fit(run: Run, args) -> None:
    panel = _load_panel(args.panel)
    X, names = _pair_data(panel, args.store, args.pair)
    margs = tuple(fit_gamma_marginal(X[:, j]) for j in range(2))
    U = pseudo_observations(X)
    fit = fit_t_copula(U) if args.family == "t" else fit_gaussian_copula(U)
    joint = JointModel(fit.params, margs)
    run.model(joint)
    run.report({
        "command": "copula-fit", "variables": names, "family": fit.params.family,
        "params": fit.params.to_dict(), "loglik": fit.loglik, "aic": fit.aic, "n": fit.n,
        "kendall_tau": kendall_tau(U.column(0), U.column(1)),
        "marginals": {nm: m.to_dict() for nm, m in zip(names, margs)},
    })
    for j, nm in enumerate(names):
        run.figure(f"hist_{nm}", PlotSpec("histogram", f"{nm} distribution", [Series(nm, list(X[:, j]))],
                                          xlabel=nm, ylabel="count", bins=40))
    idx = _thin(U.n)
    run.figure("pseudo_observations", PlotSpec(
        "scatter", "Pseudo-observations", [Series("ranks", list(U.column(1)[idx]), list(U.column(0)[idx]))],
        xlabel=f"u ({names[0]})", ylabel=f"v ({names[1]})",
    ))
    _, dens = pdf_grid(fit.params, 40)
    run.figure("copula_density", PlotSpec(
        "heatmap", f"{fit.params.family} copula density", matrix=np.log(dens),
        xlabel="u", ylabel="v",
    ))


def cmd_copula_sample(run: Run, args) -> None:
    with open(args.model, encoding="utf-8") as fh:
        joint = load_model(json.load(fh))
    if not isinstance(joint, JointModel):
        raise InputError("copula-sample needs a joint copula model")
    S = joint.sample(args.n, args.seed)
    lines = ["x,y"] + [f"{a!r},{b!r}" for a, b in S.tolist()]
    run.write("samples.csv", "\n".join(lines) + "\n")
    var = {
        f"col{j}": {"lower": value_at_risk(S[:, j], args.level, "lower"),
                    "upper": value_at_risk(S[:, j], args.level, "upper"),
                    "mean": float(np.mean(S[:, j]))}
        for j in range(2)
    }
    run.report({"command": "copula-sample", "n": args.n, "level": args.level, "var": var,
                "kendall_tau_sample": kendall_tau(S[_thin(args.n), 0], S[_thin(args.n), 1])})
    idx = _thin(args.n)
    run.figure("samples", PlotSpec("scatter", "Simulated joint sample",
                                   [Series("sample", list(S[idx, 1]), list(S[idx, 0]))],
                                   xlabel="x", ylabel="y"))
    H, xe, ye = np.histogram2d(S[:, 0], S[:, 1], bins=30)
    run.figure("sample_density", PlotSpec(
        "heatmap", "Simulated joint density", matrix=H,
        extent=(float(xe[0]), float(xe[-1]), float(ye[0]), float(ye[-1])), xlabel="x", ylabel="y",
    ))


def _cutoff_day(panel: SalesPanel, text: str | None) -> int:
    from .data_core import to_day
    return to_day(parse_date(text)) if text else int(panel.day.max())


def cmd_vine_fit(run: Run, args) -> None:
    panel = _load_panel(args.panel)
    stores = args.stores or panel.stores
    fm = build_iid_features(panel, stores, FeatureSpec(framing=IID, include_promo=True, calendar=frozenset()),
                            int(panel.day.max()))
    names = ["logSales", "meanLogSales", "promo"]
    X = np.column_stack([fm.y, fm.column("meanLogSales"), fm.column("promo")])
    U = jittered_pseudo_observations(X, discrete=(1, 2), seed=args.seed)
    spec = fit_cvine(U, names=names, jittered=(1, 2))
    run.model(spec)
    sample = sample_cvine(spec, args.n_sample, args.seed)
    sampled = {
        f"{names[a]}~{names[b]}": kendall_tau(sample.column(a)[_thin(args.n_sample)],
                                             sample.column(b)[_thin(args.n_sample)])
        for a in range(3) for b in range(a + 1, 3)
    }
    run.report({"command": "vine-fit", "n": U.n, "vine": spec.to_dict(), "sampled_tau": sampled})
    idx = _thin(args.n_sample)
    run.figure("vine_sample", PlotSpec(
        "scatter", "C-vine sample", [Series("sample", list(sample.column(1)[idx]), list(sample.column(0)[idx]))],
        xlabel="u logSales", ylabel="u meanLogSales",
    ))


def _bayes_features(panel: SalesPanel, args):
    stores = args.stores or panel.stores
    cutoff = _cutoff_day(panel, args.cutoff)
    cal = IID_SPEC.calendar if args.calendar else frozenset()
    fm = build_iid_features(panel, stores, FeatureSpec(framing=IID, include_promo=True, calendar=cal), cutoff)
    fm = fm.rows(fm.row_days <= cutoff)
    if len(stores) == 1:
        # a single store's mean is a constant column, collinear with the intercept
        fm = fm.select([c for c in fm.column_names if c != "meanLogSales"])
    return fm


def _bayes(run: Run, args, kind: str) -> None:
    panel = _load_panel(args.panel)
    fm = _bayes_features(panel, args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if kind == "gaussian":
            chain = gibbs_gaussian_regression(fm, RegressionPrior(), args.iters, args.burn_in, args.seed)
        else:
            chain = fit_student_t_regression(fm, RegressionPrior(), args.iters, args.burn_in, args.seed)
    for w in caught:
        logger.warning("%s", w.message)
    run.write("chain.csv", chain.to_csv())
    x_mean = fm.X.mean(axis=0)
    pred = posterior_predictive(chain, chain.kind, x_mean, args.predictive_draws, args.seed)
    run.report({
        "command": args.command, "n": fm.n, "columns": list(fm.column_names),
        "summary": posterior_summary(chain), "diagnostics": trace_diagnostics(chain),
        "acceptance": chain.acceptance, "iters": args.iters, "burn_in": args.burn_in,
        "predictive": {"x": dict(zip(fm.column_names, x_mean.tolist())), "mean": float(pred.mean()),
                       "var_lower": value_at_risk(pred, args.level, "lower"), "level": args.level},
    })
    focus = "promo" if "promo" in chain.param_names else chain.param_names[1]
    draws = chain.param(focus)
    run.figure(f"trace_{focus}", PlotSpec("line", f"Trace of {focus}",
                                          [Series(focus, list(chain.param(focus, kept=False)))],
                                          xlabel="iteration", ylabel=focus))
    run.figure(f"posterior_{focus}", PlotSpec("histogram", f"Posterior of {focus}",
                                              [Series(focus, list(draws))], xlabel=focus, ylabel="count"))
    coefs = [n for n in chain.param_names if n not in ("intercept", "sigma2", "nu", "p_promo")]
    run.figure("coefficients", PlotSpec("box", "Posterior coefficients",
                                        [Series(n, list(chain.param(n))) for n in coefs],
                                        ylabel="coefficient"))
    run.figure("predictive", PlotSpec("density", "Posterior predictive log sales",
                                      [Series("predictive", list(pred)), Series("observed", list(fm.y))],
                                      xlabel="log sales", ylabel="density"))


def cmd_bayes_gaussian(run: Run, args) -> None:
    _bayes(run, args, "gaussian")


def cmd_bayes_student(run: Run, args) -> None:
    _bayes(run, args, "student_t")


def cmd_report(run: Run, args) -> None:
    collected = {}
    rows = []
    for d in filter(None, (t.strip() for t in args.inputs.split(","))):
        p = Path(d) / "report.json"
        if not p.is_file():
            raise InputError(f"no report.json in {d}")
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
        collected[d] = doc
        for rep in doc.get("reports", []):
            for m, v in sorted(rep["rmse"].items()):
                rows.append([d, rep["store_id"], m, rep["framing"][m], v])
        if doc.get("command") == "forecast":
            rows.append([d, doc["store_id"], doc["method"], doc["framing"], doc["rmse"]])
    run.report({"command": "report", "inputs": collected},
               {"columns": ["source", "store", "method", "framing", "rmse"], "rows": rows})


HANDLERS: dict[str, Callable[[Run, argparse.Namespace], None]] = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "forecast": cmd_forecast,
    "blend": cmd_blend,
    "stack": cmd_stack,
    "backtest": cmd_backtest,
    "copula-fit": cmd_copula_fit,
    "copula-sample": cmd_copula_sample,
    "vine-fit": cmd_vine_fit,
    "bayes-gaussian": cmd_bayes_gaussian,
    "bayes-student": cmd_bayes_student,
    "report": cmd_report,
}


def cli_dispatch(argv: Sequence[str]) -> int:
    try:
        args = parse_args(argv)
    except (UnknownCommand, BadFlag) as exc:
        print(f"retailts: error: {exc}", file=sys.stderr)
        print(build_parser().format_usage(), end="", file=sys.stderr)
        return 2
    except (OSError, InputError) as exc:
        print(f"retailts: error: {exc}", file=sys.stderr)
        return 2

    try:
        run = Run(args)
    except OSError as exc:
        print(f"retailts: error: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    run.write("config.txt", config_snapshot(args.command, args))
    handler = logging.FileHandler(run.dir / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    pkg_logger = logging.getLogger("retailts")
    pkg_logger.addHandler(handler)
    old_level = pkg_logger.level
    pkg_logger.setLevel(logging.INFO)
    try:
        HANDLERS[args.command](run, args)
        logger.info("done: %s", args.command)
        return 0
    except (RetailTSError, OSError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        print(f"retailts: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        pkg_logger.removeHandler(handler)
        pkg_logger.setLevel(old_level)
        handler.close()


def main(argv: Sequence[str] | None = None) -> int:
    return cli_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
