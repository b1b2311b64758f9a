"""End-to-end CLI behavior: pipeline wiring, config merging, exit codes."""
import csv
import json

import numpy as np
import pytest

from minvar.cli import main
from minvar.market_data import ReturnsMatrix, write_returns_csv
from minvar.synthetic import weekday_dates


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> ingest once; the heavier subcommands reuse these files."""
    root = tmp_path_factory.mktemp("cli")
    prices = root / "prices.csv"
    returns = root / "returns.csv"
    assert run_cli("synth", "--out", prices, "--assets", 10, "--days", 401, "--seed", 3) == 0
    assert run_cli("ingest", "--prices", prices, "--out", returns) == 0
    return root


class TestPipeline:
    def test_synth_row_count(self, workspace):
        with open(workspace / "prices.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 402  # header + requested days
        assert rows[0][0] == "date" and len(rows[0]) == 11

    def test_ingest_shape(self, workspace):
        with open(workspace / "returns.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 401  # header + (days - 1) return rows

    def test_train_backtest_report(self, workspace, capsys):
        model = workspace / "model.json"
        log = workspace / "train_log.csv"
        out = workspace / "bt"
        rc = run_cli(
            "train", "--data", workspace / "returns.csv", "--out", model,
            "--log", log, "--epochs", 1, "--batches-per-epoch", 2,
            "--batch-size", 2, "--n-range", "40,50", "--n-assets-range", "5,8",
            "--val-windows", 2, "--layers", 1, "--width", 8, "--heads", 2,
            "--ff-width", 16, "--seed", 1,
        )
        assert rc == 0
        assert model.exists()
        with open(log) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "mean_train_loss", "mean_val_loss", "skipped_samples"]
        assert len(rows) == 2

        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv", "--model", model,
            "--methods", "scm,lw,identity,nn", "--lookback", "40,60",
            "--test-days", 300, "--out", out,
        )
        assert rc == 0
        for name in ("risks.csv", "rolling.csv", "weights.csv", "report.json"):
            assert (out / name).exists()

        rc = run_cli("report", "--in", out, "--compare", "lw,scm", "--lookback", 40)
        assert rc == 0
        shown = capsys.readouterr().out
        assert "lw below scm on" in shown
        assert (out / "risk_vs_lookback.png").exists()
        assert (out / "rolling_risk.png").exists()

    def test_report_accepts_json_path(self, workspace):
        out = workspace / "bt"
        assert run_cli("report", "--in", out / "report.json", "--no-figures") == 0

    def test_report_multi_lookback_skips_rolling_figure(self, workspace, capsys):
        out = workspace / "bt2"
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv",
            "--methods", "identity", "--lookback", "40,60",
            "--test-days", 300, "--out", out,
        )
        assert rc == 0
        assert run_cli("report", "--in", out) == 0
        assert "pass --lookback" in capsys.readouterr().out
        assert (out / "risk_vs_lookback.png").exists()
        assert not (out / "rolling_risk.png").exists()

    def test_no_figures_flag(self, workspace):
        out = workspace / "bt3"
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv",
            "--methods", "identity", "--lookback", "40",
            "--test-days", 300, "--out", out,
        )
        assert rc == 0
        assert run_cli("report", "--in", out, "--no-figures") == 0
        assert not (out / "risk_vs_lookback.png").exists()


class TestConfigMerging:
    def test_flags_from_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"assets": 6, "days": 120, "seed": 1}))
        prices = tmp_path / "p.csv"
        assert run_cli("synth", "--config", cfg, "--out", prices) == 0
        with open(prices) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 121
        assert len(rows[0]) == 7

    def test_cli_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"assets": 6, "days": 120}))
        prices = tmp_path / "p.csv"
        assert run_cli("synth", "--config", cfg, "--out", prices, "--days", 60) == 0
        with open(prices) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 61

    def test_hyphenated_config_keys(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"var-scale": 1e-4, "days": 30, "assets": 6}))
        assert run_cli("synth", "--config", cfg, "--out", tmp_path / "p.csv") == 0

    def test_config_list_values(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"methods": ["identity"], "lookback": [40], "test_days": 300})
        )
        out = tmp_path / "bt"
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv",
            "--config", cfg, "--out", out,
        )
        assert rc == 0
        assert (out / "risks.csv").exists()


class TestExitCodes:
    def test_help_exits_zero(self):
        assert run_cli("--help") == 0

    def test_unknown_subcommand(self):
        assert run_cli("frobnicate") == 2

    def test_unknown_flag(self):
        assert run_cli("synth", "--frobnicate", 1) == 2

    def test_missing_required_setting(self, capsys):
        assert run_cli("ingest", "--out", "x.csv") == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_method_name(self, workspace, tmp_path):
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv",
            "--methods", "magic", "--lookback", "40", "--out", tmp_path / "o",
        )
        assert rc == 2

    def test_nn_without_model(self, workspace, tmp_path):
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv",
            "--methods", "nn", "--lookback", "40", "--out", tmp_path / "o",
        )
        assert rc == 2

    def test_malformed_range(self, workspace, tmp_path):
        rc = run_cli(
            "train", "--data", workspace / "returns.csv",
            "--out", tmp_path / "m.json", "--n-range", "40",
        )
        assert rc == 2

    def test_compare_needs_two_methods(self, workspace):
        assert run_cli("report", "--in", workspace / "bt", "--compare", "lw") == 2

    def test_config_file_not_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert run_cli("synth", "--config", cfg, "--out", tmp_path / "p.csv") == 2

    def test_config_file_not_object(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        assert run_cli("synth", "--config", cfg, "--out", tmp_path / "p.csv") == 2

    def test_missing_prices_file(self, tmp_path):
        rc = run_cli("ingest", "--prices", tmp_path / "nope.csv", "--out", tmp_path / "r.csv")
        assert rc == 3

    def test_nonpositive_price(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,A,B\n2020-01-01,1.0,2.0\n2020-01-02,-1.0,2.0\n")
        assert run_cli("ingest", "--prices", bad, "--out", tmp_path / "r.csv") == 3
        assert "error:" in capsys.readouterr().err

    def test_corrupt_model_file(self, workspace, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{}")
        rc = run_cli(
            "backtest", "--data", workspace / "returns.csv", "--model", broken,
            "--methods", "nn", "--lookback", "40", "--test-days", 300,
            "--out", tmp_path / "o",
        )
        assert rc == 3

    def test_report_on_missing_dir(self, tmp_path):
        assert run_cli("report", "--in", tmp_path / "nothing") == 3

    def test_singular_covariance_is_numeric_failure(self, tmp_path):
        # a duplicated asset makes every sample covariance exactly singular
        rng = np.random.default_rng(0)
        x = 0.01 * rng.standard_normal((5, 300))
        x = np.vstack([x, x[:1]])
        r = ReturnsMatrix(
            [f"A{i}" for i in range(6)], weekday_dates(300), x
        )
        data = tmp_path / "dup.csv"
        write_returns_csv(r, data)
        rc = run_cli(
            "backtest", "--data", data, "--methods", "scm", "--lookback", 50,
            "--test-days", 200, "--out", tmp_path / "o",
        )
        assert rc == 4
