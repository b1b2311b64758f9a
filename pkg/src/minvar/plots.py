"""Figure rendering for backtest reports.

Two figures mirror the two CSV artifacts: annualized risk against lookback
length (one line per method) and the rolling-risk time series at a single
lookback. Everything renders headless through the Agg backend.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates
import matplotlib.pyplot as plt

from .backtest import BacktestReport
from .errors import ConfigError
from .portfolio import rolling_annualized_risk

_STYLE = {
    "scm": dict(color="tab:red", marker="s"),
    "lw": dict(color="tab:blue", marker="o"),
    "chen": dict(color="tab:green", marker="^"),
    "identity": dict(color="tab:gray", marker="x"),
    "nn": dict(color="tab:purple", marker="d"),
    "oracle": dict(color="black", marker="*"),
}


def _style(method: str) -> dict:
    return _STYLE.get(method, dict(marker="."))


def plot_risk_vs_lookback(report: BacktestReport, path) -> Path:
    """One line per method over the lookback grid; absent points are gaps."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    lookbacks = sorted(report.config.lookbacks)
    for method in report.config.methods:
        xs, ys = [], []
        for n in lookbacks:
            run = report.find(method, n)
            if run is not None:
                xs.append(n)
                ys.append(run.annualized_risk)
        if xs:
            ax.plot(xs, ys, label=method, **_style(method))
    ax.set_xlabel("lookback window length n (days)")
    ax.set_ylabel("annualized realized risk")
    ax.set_title(f"Out-of-sample risk over {report.config.test_days} test days")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_rolling_risk(report: BacktestReport, path, lookback: int | None = None) -> Path:
    """Rolling annualized risk per method at one lookback."""
    path = Path(path)
    if lookback is None:
        lookbacks = sorted({run.lookback for run in report.results})
        if len(lookbacks) != 1:
            raise ConfigError("report covers several lookbacks; pass the one to plot")
        lookback = lookbacks[0]
    window = report.config.rolling_window
    fig, ax = plt.subplots(figsize=(7, 4.5))
    plotted = False
    for method in report.config.methods:
        run = report.find(method, lookback)
        if run is None or run.daily_returns.size < window:
            continue
        rolling = rolling_annualized_risk(run.daily_returns, window)
        dates = [mdates.datestr2num(d) for d in run.daily_dates[window - 1 :]]
        style = dict(_style(method))
        style.pop("marker", None)
        ax.plot(dates, rolling, label=method, **style)
        plotted = True
    if not plotted:
        plt.close(fig)
        raise ConfigError(
            f"no method at lookback {lookback} has {window}+ recorded returns"
        )
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
    ax.xaxis.set_major_locator(mdates.AutoDateLocator())
    fig.autofmt_xdate()
    ax.set_ylabel(f"rolling annualized risk ({window}-day window)")
    ax.set_title(f"Rolling risk, lookback n={lookback}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
