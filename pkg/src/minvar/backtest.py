"""Rolling-window out-of-sample evaluation of covariance estimators.

At every rebalance day the chosen estimators see only the trailing
`lookback` return columns, produce minimum variance weights, and hold them
unchanged for the next `holding` days. Daily portfolio returns accumulate
across rebalances; the headline number per method is the annualized
standard deviation of that full series.

Lookback windows may reach into the history before the test period
("pretest" sourcing, the default) or be confined to it ("test-only", which
shortens the recorded series by one lookback). The sample covariance is
reported as structurally absent whenever the window is too short to make
it invertible, instead of failing the run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigen import eigh, invert_spd, reconstruct_precision
from .errors import ConfigError, DataError
from .estimators import (
    LW_FORMULA_STANDARD,
    LW_FORMULAS,
    chen_estimator,
    identity_estimate,
    ledoit_wolf,
    sample_covariance,
)
from .market_data import ReturnsMatrix
from .portfolio import (
    TRADING_DAYS,
    PortfolioWeights,
    gmvp_weights,
    rolling_annualized_risk,
)
from .shrinkage_net import ShrinkageInput, ShrinkageModel, forward

METHOD_SCM = "scm"
METHOD_LW = "lw"
METHOD_CHEN = "chen"
METHOD_IDENTITY = "identity"
METHOD_NN = "nn"
METHOD_ORACLE = "oracle"
ALL_METHODS = (METHOD_SCM, METHOD_LW, METHOD_CHEN, METHOD_IDENTITY, METHOD_NN)

LOOKBACK_PRETEST = "pretest"
LOOKBACK_TEST_ONLY = "test-only"
LOOKBACK_SOURCES = (LOOKBACK_PRETEST, LOOKBACK_TEST_ONLY)

DEFAULT_LOOKBACKS = (40, 60, 100, 150, 200, 250)
REPORT_JSON = "report.json"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BacktestConfig:
    lookbacks: tuple[int, ...] = DEFAULT_LOOKBACKS
    holding: int = 20
    stride: int = 20
    methods: tuple[str, ...] = (METHOD_SCM, METHOD_LW, METHOD_CHEN, METHOD_IDENTITY)
    test_days: int = 400
    lookback_source: str = LOOKBACK_PRETEST
    lw_formula: str = LW_FORMULA_STANDARD
    rolling_window: int = 40

    def __post_init__(self):
        if len(self.lookbacks) != len(set(self.lookbacks)):
            raise ConfigError("duplicate lookback values")
        for n in self.lookbacks:
            if n < 2:
                raise ConfigError(f"lookback {n} is too short to estimate covariance")
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.holding != self.stride:
            raise ConfigError("holding period must equal the rebalance stride")
        for m in self.methods:
            if m not in ALL_METHODS + (METHOD_ORACLE,):
                raise ConfigError(f"unknown method {m!r}")
        if len(self.methods) != len(set(self.methods)):
            raise ConfigError("duplicate methods")
        if self.test_days < 1:
            raise ConfigError("test period must contain at least one day")
        if self.lookback_source not in LOOKBACK_SOURCES:
            raise ConfigError(f"unknown lookback source {self.lookback_source!r}")
        if self.lw_formula not in LW_FORMULAS:
            raise ConfigError(f"unknown shrinkage formula {self.lw_formula!r}")
        if self.rolling_window < 2:
            raise ConfigError("rolling window must cover at least two returns")


@dataclass(eq=False)
class MethodRun:
    """One (method, lookback) evaluation: weights held fixed between rebalances."""

    method: str
    lookback: int
    rebalance_dates: list[str]
    weights: np.ndarray
    daily_dates: list[str]
    daily_returns: np.ndarray
    annualized_risk: float


@dataclass
class AbsentMethod:
    method: str
    lookback: int
    reason: str


@dataclass(eq=False)
class BacktestReport:
    config: BacktestConfig
    data_fingerprint: str
    assets: tuple[str, ...]
    results: list[MethodRun] = field(default_factory=list)
    absent: list[AbsentMethod] = field(default_factory=list)

    def find(self, method: str, lookback: int) -> MethodRun | None:
        for run in self.results:
            if run.method == method and run.lookback == lookback:
                return run
        return None


def _nn_weights(
    window: np.ndarray, model: ShrinkageModel, lw_formula: str, assets
) -> PortfolioWeights:
    estimate = ledoit_wolf(window, formula=lw_formula)
    es = eigh(estimate.matrix)
    inp = ShrinkageInput(
        np.maximum(es.eigenvalues, 0.0), window.shape[0] / window.shape[1]
    )
    eta = forward(model, inp)
    return gmvp_weights(reconstruct_precision(es, eta), assets)


def _method_weights(
    method: str,
    window: np.ndarray,
    cfg: BacktestConfig,
    model: ShrinkageModel | None,
    oracle_covariance: np.ndarray | None,
    assets,
) -> PortfolioWeights:
    if method == METHOD_IDENTITY:
        return gmvp_weights(identity_estimate(window.shape[0]).matrix, assets)
    if method == METHOD_SCM:
        return gmvp_weights(invert_spd(sample_covariance(window).matrix), assets)
    if method == METHOD_LW:
        return gmvp_weights(
            invert_spd(ledoit_wolf(window, formula=cfg.lw_formula).matrix), assets
        )
    if method == METHOD_CHEN:
        return gmvp_weights(invert_spd(chen_estimator(window).matrix), assets)
    if method == METHOD_NN:
        return _nn_weights(window, model, cfg.lw_formula, assets)
    if method == METHOD_ORACLE:
        return gmvp_weights(invert_spd(oracle_covariance), assets)
    raise ConfigError(f"unknown method {method!r}")


def run_backtest(
    r: ReturnsMatrix,
    cfg: BacktestConfig,
    model: ShrinkageModel | None = None,
    oracle_covariance: np.ndarray | None = None,
) -> BacktestReport:
    """Evaluate every (method, lookback) pair over the trailing test period."""
    n_assets, n_periods = r.returns.shape
    if cfg.test_days >= n_periods:
        raise ConfigError(
            f"test period of {cfg.test_days} days needs more than {n_periods} returns"
        )
    if METHOD_NN in cfg.methods and model is None:
        raise ConfigError("the nn method needs a trained model")
    if METHOD_ORACLE in cfg.methods and oracle_covariance is None:
        raise ConfigError("the oracle method needs the true covariance")
    test_start = n_periods - cfg.test_days

    report = BacktestReport(cfg, r.fingerprint(), tuple(r.assets))
    for lookback in cfg.lookbacks:
        if cfg.lookback_source == LOOKBACK_PRETEST:
            first = test_start
            if lookback > test_start:
                raise ConfigError(
                    f"lookback {lookback} exceeds the {test_start} days of history "
                    "before the test period"
                )
        else:
            first = test_start + lookback
            if first >= n_periods:
                raise ConfigError(
                    f"lookback {lookback} leaves no test days with test-only sourcing"
                )
        rebalance_times = list(range(first, n_periods, cfg.stride))
        for method in cfg.methods:
            if method == METHOD_SCM and lookback <= n_assets:
                report.absent.append(
                    AbsentMethod(
                        method,
                        lookback,
                        f"sample covariance is singular for lookback {lookback} "
                        f"<= {n_assets} assets",
                    )
                )
                continue
            weight_rows = []
            daily = []
            for t in rebalance_times:
                window = r.returns[:, t - lookback : t]
                h = _method_weights(method, window, cfg, model, oracle_covariance, r.assets)
                weight_rows.append(h.weights)
                hold = min(cfg.holding, n_periods - t)
                daily.append(h.weights @ r.returns[:, t : t + hold])
            series = np.concatenate(daily) if daily else np.empty(0)
            risk = (
                math.sqrt(TRADING_DAYS) * float(series.std()) if series.size else math.nan
            )
            report.results.append(
                MethodRun(
                    method=method,
                    lookback=lookback,
                    rebalance_dates=[r.dates[t] for t in rebalance_times],
                    weights=np.array(weight_rows),
                    daily_dates=list(r.dates[first:]),
                    daily_returns=series,
                    annualized_risk=risk,
                )
            )
    return report


def compare_methods(
    report: BacktestReport,
    a: str,
    b: str,
    window: int,
    lookback: int | None = None,
) -> float:
    """Fraction of rolling-risk points where method a is strictly below b."""
    if lookback is None:
        lookbacks = sorted({run.lookback for run in report.results})
        if len(lookbacks) != 1:
            raise ConfigError(
                "report covers several lookbacks; pass the one to compare"
            )
        lookback = lookbacks[0]
    run_a = report.find(a, lookback)
    run_b = report.find(b, lookback)
    for name, run in ((a, run_a), (b, run_b)):
        if run is None:
            raise ConfigError(f"method {name!r} at lookback {lookback} is not in the report")
    rolling_a = rolling_annualized_risk(run_a.daily_returns, window)
    rolling_b = rolling_annualized_risk(run_b.daily_returns, window)
    return float(np.mean(rolling_a < rolling_b))


def _float_cell(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _ordered_pairs(report: BacktestReport):
    for method in report.config.methods:
        for lookback in sorted(report.config.lookbacks):
            yield method, lookback


def emit_report(report: BacktestReport, out_dir) -> list[Path]:
    """Write risks.csv, rolling.csv, weights.csv, and report.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    absent = {(entry.method, entry.lookback) for entry in report.absent}

    risk_rows = []
    for method, lookback in _ordered_pairs(report):
        run = report.find(method, lookback)
        if (method, lookback) in absent or run is None:
            risk_rows.append([method, lookback, ""])
        else:
            risk_rows.append([method, lookback, _float_cell(run.annualized_risk)])
    _write_csv(out / "risks.csv", ["method", "n", "annualized_risk"], risk_rows)

    window = report.config.rolling_window
    rolling_rows = []
    for method, lookback in _ordered_pairs(report):
        run = report.find(method, lookback)
        if run is None or run.daily_returns.size < window:
            continue
        rolling = rolling_annualized_risk(run.daily_returns, window)
        for date, value in zip(run.daily_dates[window - 1 :], rolling):
            rolling_rows.append([date, method, lookback, _float_cell(value)])
    _write_csv(
        out / "rolling.csv", ["date", "method", "lookback", "rolling_risk"], rolling_rows
    )

    weight_rows = []
    for method, lookback in _ordered_pairs(report):
        run = report.find(method, lookback)
        if run is None:
            continue
        for date, row in zip(run.rebalance_dates, run.weights):
            for asset, w in zip(report.assets, row):
                weight_rows.append([method, lookback, date, asset, _float_cell(w)])
    _write_csv(
        out / "weights.csv", ["method", "lookback", "date", "asset", "weight"], weight_rows
    )

    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "lookbacks": list(report.config.lookbacks),
            "holding": report.config.holding,
            "stride": report.config.stride,
            "methods": list(report.config.methods),
            "test_days": report.config.test_days,
            "lookback_source": report.config.lookback_source,
            "lw_formula": report.config.lw_formula,
            "rolling_window": report.config.rolling_window,
        },
        "data_fingerprint": report.data_fingerprint,
        "assets": list(report.assets),
        "results": [
            {
                "method": run.method,
                "lookback": run.lookback,
                "rebalance_dates": run.rebalance_dates,
                "weights": [[w for w in row] for row in run.weights],
                "daily_dates": run.daily_dates,
                "daily_returns": list(run.daily_returns),
                "annualized_risk": run.annualized_risk,
            }
            for run in report.results
        ],
        "absent": [
            {"method": e.method, "lookback": e.lookback, "reason": e.reason}
            for e in report.absent
        ],
    }
    json_path = out / REPORT_JSON
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")
    return [out / "risks.csv", out / "rolling.csv", out / "weights.csv", json_path]


def load_report(path) -> BacktestReport:
    """Rebuild a BacktestReport from report.json (directory or file path)."""
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    try:
        if payload["schema_version"] != SCHEMA_VERSION:
            raise DataError(
                f"report schema version {payload['schema_version']} is unsupported"
            )
        raw = dict(payload["config"])
        raw["lookbacks"] = tuple(raw["lookbacks"])
        raw["methods"] = tuple(raw["methods"])
        config = BacktestConfig(**raw)
        report = BacktestReport(
            config, payload["data_fingerprint"], tuple(payload["assets"])
        )
        for item in payload["results"]:
            report.results.append(
                MethodRun(
                    method=item["method"],
                    lookback=item["lookback"],
                    rebalance_dates=list(item["rebalance_dates"]),
                    weights=np.array(item["weights"], dtype=np.float64),
                    daily_dates=list(item["daily_dates"]),
                    daily_returns=np.array(item["daily_returns"], dtype=np.float64),
                    annualized_risk=item["annualized_risk"],
                )
            )
        for item in payload["absent"]:
            report.absent.append(
                AbsentMethod(item["method"], item["lookback"], item["reason"])
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"report {path} is malformed: {exc}") from exc
    return report
