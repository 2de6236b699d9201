import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from retailts.cli import COMMANDS, cli_dispatch

FAST_GBT = ["--n-trees", "20", "--max-depth", "3"]


def run(*argv) -> int:
    return cli_dispatch([str(a) for a in argv])


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def artifacts(d: Path) -> dict[str, bytes]:
    """Everything a run produced except the log."""
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "run.log"}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def panel_csv(workdir):
    out = workdir / "synth"
    assert run("synth", "--seed", 42, "--stores", 3, "--days", 400, "--out", out, "--deterministic") == 0
    return out / "panel.csv"


@pytest.fixture(scope="module")
def copula_model(workdir, panel_csv):
    out = workdir / "copula"
    assert run("copula-fit", "--panel", panel_csv, "--out", out, "--deterministic") == 0
    return out / "model.json"


def command_args(cmd, panel_csv, copula_model, workdir):
    P = ["--panel", panel_csv]
    bayes = [*P, "--iters", 600, "--burn-in", 100, "--predictive-draws", 1000]
    return {
        "synth": ["--stores", 2, "--days", 200],
        "ingest": ["--input", panel_csv],
        "forecast": [*P, "--store", 1, "--method", "gbt", *FAST_GBT],
        "blend": [*P, "--store", 1, *FAST_GBT],
        "stack": [*P, "--store", 1, "--folds", 3, *FAST_GBT],
        "backtest": [*P, "--store", 1, "--methods", "arima,gbt,blend", *FAST_GBT],
        "copula-fit": [*P],
        "copula-sample": ["--model", copula_model, "--n", 2000],
        "vine-fit": [*P, "--n-sample", 1000],
        "bayes-gaussian": bayes,
        "bayes-student": bayes,
        "report": ["--inputs", f"{workdir / 'synth'},{workdir / 'copula'}"],
    }[cmd]


def test_synth_contract(panel_csv):
    with open(panel_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    stores = {}
    for r in rows:
        stores.setdefault(r["Store"], 0)
        stores[r["Store"]] += 1
    assert len(stores) == 3
    assert all(c <= 400 for c in stores.values())
    out = panel_csv.parent
    assert (out / "config.txt").read_text().startswith("# retailts synth\n")
    assert (out / "run.log").exists()
    assert (out / "figures" / "log_sales.svg").exists()


def test_backtest_report_has_three_rmses(workdir, panel_csv):
    out = workdir / "bt"
    assert run("backtest", "--panel", panel_csv, "--store", 1, "--methods", "arima,gbt,blend",
               *FAST_GBT, "--out", out, "--deterministic") == 0
    rows = [r for r in csv.reader(l for l in (out / "report.csv").read_text().splitlines() if not l.startswith("#"))]
    assert rows[0] == ["store", "method", "framing", "rmse"]
    assert sorted(r[1] for r in rows[1:]) == ["arima", "blend", "gbt"]
    assert all(float(r[3]) > 0 for r in rows[1:])
    doc = json.loads((out / "report.json").read_text())
    assert doc and isinstance(doc, dict)


@pytest.mark.parametrize("cmd", COMMANDS)
def test_rerun_from_snapshot_is_byte_identical(cmd, workdir, panel_csv, copula_model):
    before = digest(panel_csv), digest(copula_model)
    a, b = workdir / f"{cmd}-a", workdir / f"{cmd}-b"
    assert run(cmd, *command_args(cmd, panel_csv, copula_model, workdir), "--out", a, "--deterministic") == 0
    assert run(cmd, "--config", a / "config.txt", "--out", b, "--deterministic") == 0
    got_a, got_b = artifacts(a), artifacts(b)
    assert "report.json" in got_a and "config.txt" in got_a
    assert got_a.keys() == got_b.keys()
    for name in got_a:
        assert got_a[name] == got_b[name], name
    # no command touches its inputs
    assert (digest(panel_csv), digest(copula_model)) == before


def test_cli_flags_override_config(workdir, panel_csv):
    cfg = workdir / "override.txt"
    cfg.write_text("stores=2\ndays=100\nseed=1\n")
    out = workdir / "override"
    assert run("synth", "--config", cfg, "--days", 50, "--out", out, "--deterministic") == 0
    snap = (out / "config.txt").read_text()
    assert "days=50" in snap and "stores=2" in snap and "seed=1" in snap


def test_timestamped_subdirectory_without_deterministic(tmp_path):
    assert run("synth", "--stores", 1, "--days", 60, "--out", tmp_path, "--no-deterministic") == 0
    subdirs = [p for p in tmp_path.iterdir() if p.is_dir()]
    assert len(subdirs) == 1 and subdirs[0].name.startswith("synth-")
    assert (subdirs[0] / "panel.csv").exists()


def test_env_var_sets_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("RETAILTS_OUT", str(tmp_path))
    assert run("synth", "--stores", 1, "--days", 60, "--deterministic") == 0
    assert (tmp_path / "panel.csv").exists()


def test_unknown_command_prints_usage(capsys):
    assert run("frobnicate") != 0
    err = capsys.readouterr().err
    assert "usage" in err.lower() and "frobnicate" in err


@pytest.mark.parametrize("argv", [
    ["synth", "--stores", "many"],
    ["synth", "--no-such-flag"],
    ["backtest", "--panel", "x.csv", "--store", "1", "--methods", "arima,prophet"],
    ["copula-sample", "--model", "m.json", "--level", "1.5"],
    ["forecast", "--panel", "x.csv"],
])
def test_bad_flags_exit_2_with_usage(argv, capsys):
    assert cli_dispatch(argv) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_handler_error_is_nonzero_with_diagnostic(tmp_path, capsys):
    assert run("forecast", "--panel", tmp_path / "missing.csv", "--store", 1, "--out", tmp_path, "--deterministic") == 1
    assert capsys.readouterr().err.strip()


def test_backtest_store_flags_are_exclusive(tmp_path, panel_csv):
    assert run("backtest", "--panel", panel_csv, "--out", tmp_path, "--deterministic") != 0
    assert run("backtest", "--panel", panel_csv, "--store", 1, "--all-stores", "--out", tmp_path, "--deterministic") != 0


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "retailts.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "retailts" in proc.stdout
