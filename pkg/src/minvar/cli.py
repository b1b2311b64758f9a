"""Command line front end.

Five subcommands cover the whole workflow: synthesize a price panel,
ingest prices into a returns matrix, train the shrinkage network, run the
rolling backtest, and render a report from its artifacts. Any flag can
also come from a JSON config object keyed by flag name (hyphens become
underscores); explicit flags win over config values.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .backtest import (
    BacktestConfig,
    METHOD_NN,
    compare_methods,
    emit_report,
    load_report,
    run_backtest,
)
from .errors import EXIT_CONFIG, EXIT_OK, ConfigError, MinvarError
from .market_data import (
    compute_returns,
    load_prices,
    load_returns,
    write_prices_csv,
    write_returns_csv,
)
from .plots import plot_risk_vs_lookback, plot_rolling_risk
from .shrinkage_net import ModelConfig, load_model, save_model
from .synthetic import gaussian_returns, returns_to_prices, spiked_covariance
from .trainer import TrainConfig, train

RISK_FIGURE = "risk_vs_lookback.png"
ROLLING_FIGURE = "rolling_risk.png"


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in raw.items()}


def _merge(args, cfg: dict, attr: str, key: str | None = None, default=None):
    """CLI flag if given, else config value, else the default."""
    value = getattr(args, attr, None)
    if value is None:
        value = cfg.get(key if key is not None else attr, default)
    return value


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required (flag or config key)")
    return value


def _as_int(value, flag: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{flag} expects an integer, got {value!r}")
    if isinstance(value, int):
        return value
    try:
        return int(str(value))
    except ValueError:
        raise ConfigError(f"{flag} expects an integer, got {value!r}") from None


def _as_float(value, flag: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{flag} expects a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value))
    except ValueError:
        raise ConfigError(f"{flag} expects a number, got {value!r}") from None


def _as_int_tuple(value, flag: str) -> tuple[int, ...]:
    if isinstance(value, str):
        value = value.split(",")
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{flag} expects a comma list of integers")
    return tuple(_as_int(v, flag) for v in value)


def _as_str_tuple(value, flag: str) -> tuple[str, ...]:
    if isinstance(value, str):
        value = value.split(",")
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{flag} expects a comma list of names")
    return tuple(str(v).strip() for v in value)


def _as_pair(value, flag: str) -> tuple[int, int]:
    pair = _as_int_tuple(value, flag)
    if len(pair) != 2:
        raise ConfigError(f"{flag} expects exactly two integers, got {value!r}")
    return pair


def _cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    out = _require(_merge(args, cfg, "out"), "--out")
    n_assets = _as_int(_merge(args, cfg, "assets", default=50), "--assets")
    days = _as_int(_merge(args, cfg, "days", default=3676), "--days")
    spikes = _as_int(_merge(args, cfg, "spikes", default=5), "--spikes")
    seed = _as_int(_merge(args, cfg, "seed", default=0), "--seed")
    var_scale = _as_float(_merge(args, cfg, "var_scale", default=1e-4), "--var-scale")
    if days < 2:
        raise ConfigError("--days must be at least 2")
    covariance = spiked_covariance(n_assets, n_spikes=spikes, seed=seed)
    returns = gaussian_returns(covariance, days - 1, seed=seed, var_scale=var_scale)
    prices = returns_to_prices(returns)
    write_prices_csv(prices, out)
    print(f"wrote {prices.n_days} days x {prices.n_assets} assets to {out}")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    cfg = _load_config(args.config)
    prices_path = _require(_merge(args, cfg, "prices"), "--prices")
    out = _require(_merge(args, cfg, "out"), "--out")
    returns = compute_returns(load_prices(prices_path))
    write_returns_csv(returns, out)
    print(
        f"wrote {returns.n_assets} assets x {returns.n_periods} daily returns to {out}"
    )
    return EXIT_OK


_TRAIN_INT_KEYS = (
    "epochs",
    "batch_size",
    "val_horizon",
    "seed",
    "patience",
    "batches_per_epoch",
    "val_windows",
)


def _train_configs(args, cfg: dict) -> tuple[TrainConfig, ModelConfig]:
    kwargs = {}
    for key in _TRAIN_INT_KEYS:
        value = _merge(args, cfg, key)
        if value is not None:
            kwargs[key] = _as_int(value, key)
    lr = _merge(args, cfg, "learning_rate")
    if lr is not None:
        kwargs["learning_rate"] = _as_float(lr, "--learning-rate")
    for key in ("n_range", "n_assets_range"):
        value = _merge(args, cfg, key)
        if value is not None:
            kwargs[key] = _as_pair(value, key)
    formula = _merge(args, cfg, "lw_formula")
    if formula is not None:
        kwargs["lw_formula"] = str(formula)
    shape = {}
    for key, field in (
        ("layers", "n_layers"),
        ("width", "width"),
        ("heads", "n_heads"),
        ("ff_width", "ff_width"),
    ):
        value = _merge(args, cfg, key)
        if value is not None:
            shape[field] = _as_int(value, key)
    return TrainConfig(**kwargs), ModelConfig(**shape)


def _write_train_log(log, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_train_loss", "mean_val_loss", "skipped_samples"])
        for row in log:
            writer.writerow(
                [
                    row.epoch,
                    repr(float(row.mean_train_loss)),
                    repr(float(row.mean_val_loss)),
                    row.skipped_samples,
                ]
            )


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data_path = _require(_merge(args, cfg, "data"), "--data")
    out = _require(_merge(args, cfg, "out"), "--out")
    log_path = _merge(args, cfg, "log")
    train_cfg, model_cfg = _train_configs(args, cfg)
    returns = load_returns(data_path)
    result = train(returns, train_cfg, model_cfg)
    save_model(result.model, out)
    if log_path is not None:
        _write_train_log(result.log, log_path)
        print(f"wrote training log to {log_path}")
    if result.log:
        final = min(entry.mean_val_loss for entry in result.log)
        print(
            f"trained {len(result.log)} epochs; best epoch {result.best_epoch} "
            f"(validation loss {final:.6e})"
        )
    print(f"wrote model to {out}")
    return EXIT_OK


def _backtest_config(args, cfg: dict) -> BacktestConfig:
    kwargs = {}
    lookback = _merge(args, cfg, "lookback")
    if lookback is not None:
        kwargs["lookbacks"] = _as_int_tuple(lookback, "--lookback")
    methods = _merge(args, cfg, "methods")
    if methods is not None:
        kwargs["methods"] = _as_str_tuple(methods, "--methods")
    stride = _merge(args, cfg, "stride")
    if stride is not None:
        kwargs["stride"] = _as_int(stride, "--stride")
        kwargs["holding"] = kwargs["stride"]
    for key in ("test_days", "rolling_window"):
        value = _merge(args, cfg, key)
        if value is not None:
            kwargs[key] = _as_int(value, key)
    for key in ("lookback_source", "lw_formula"):
        value = _merge(args, cfg, key)
        if value is not None:
            kwargs[key] = str(value)
    return BacktestConfig(**kwargs)


def _cmd_backtest(args) -> int:
    cfg = _load_config(args.config)
    data_path = _require(_merge(args, cfg, "data"), "--data")
    out_dir = _require(_merge(args, cfg, "out"), "--out")
    bt_cfg = _backtest_config(args, cfg)
    model = None
    model_path = _merge(args, cfg, "model")
    if METHOD_NN in bt_cfg.methods:
        model = load_model(_require(model_path, "--model"))
    returns = load_returns(data_path)
    report = run_backtest(returns, bt_cfg, model=model)
    for run in report.results:
        print(
            f"{run.method:<10} n={run.lookback:<4d} "
            f"annualized risk {run.annualized_risk:.6f}"
        )
    for entry in report.absent:
        print(f"{entry.method:<10} n={entry.lookback:<4d} absent: {entry.reason}")
    for path in emit_report(report, out_dir):
        print(f"wrote {path}")
    return EXIT_OK


def _unique_lookback(report) -> int | None:
    distinct = sorted({run.lookback for run in report.results})
    return distinct[0] if len(distinct) == 1 else None


def _cmd_report(args) -> int:
    cfg = _load_config(args.config)
    in_path = Path(_require(_merge(args, cfg, "in_dir", key="in"), "--in"))
    report = load_report(in_path)
    out_dir = in_path if in_path.is_dir() else in_path.parent

    print(f"{'method':<10} {'lookback':>8} {'annualized risk':>16}")
    for method in report.config.methods:
        for lookback in sorted(report.config.lookbacks):
            run = report.find(method, lookback)
            if run is not None:
                print(f"{method:<10} {lookback:>8d} {run.annualized_risk:>16.6f}")
    for entry in report.absent:
        print(f"{entry.method:<10} {entry.lookback:>8d}           absent: {entry.reason}")

    lookback = _merge(args, cfg, "lookback")
    if lookback is not None:
        lookback = _as_int(lookback, "--lookback")
    window = _merge(args, cfg, "window", default=report.config.rolling_window)
    window = _as_int(window, "--window")

    compare = _merge(args, cfg, "compare")
    if compare is not None:
        pair = _as_str_tuple(compare, "--compare")
        if len(pair) != 2:
            raise ConfigError("--compare expects exactly two method names")
        fraction = compare_methods(report, pair[0], pair[1], window, lookback)
        label = lookback if lookback is not None else _unique_lookback(report)
        print(
            f"{pair[0]} below {pair[1]} on {100.0 * fraction:.1f}% of "
            f"{window}-day rolling windows (lookback {label})"
        )

    figures = _merge(args, cfg, "figures", default=True)
    if figures:
        print(f"wrote {plot_risk_vs_lookback(report, out_dir / RISK_FIGURE)}")
        rolling_lookback = lookback if lookback is not None else _unique_lookback(report)
        if rolling_lookback is None:
            print("several lookbacks in report; pass --lookback to render the rolling figure")
        else:
            path = plot_rolling_risk(report, out_dir / ROLLING_FIGURE, rolling_lookback)
            print(f"wrote {path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minvar",
        description="Minimum variance portfolio backtesting with learned eigenvalue shrinkage.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic price CSV with known covariance")
    p.add_argument("--out", help="output price CSV path")
    p.add_argument("--assets", type=int, help="number of assets (default 50)")
    p.add_argument("--days", type=int, help="number of price rows (default 3676)")
    p.add_argument("--spikes", type=int, help="number of large eigenvalues (default 5)")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.add_argument("--var-scale", type=float, help="daily variance scale (default 1e-4)")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("ingest", help="convert a price CSV into a returns CSV")
    p.add_argument("--prices", help="input price CSV (date column plus one per asset)")
    p.add_argument("--out", help="output returns CSV path")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("train", help="train the eigenvalue shrinkage network")
    p.add_argument("--data", help="returns CSV from the ingest step")
    p.add_argument("--out", help="output model file")
    p.add_argument("--log", help="optional per-epoch loss CSV")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--n-range", help="lookback sampling range, e.g. 40,250")
    p.add_argument("--n-assets-range", help="asset subset sampling range, e.g. 20,50")
    p.add_argument("--val-horizon", type=int, help="validation columns per window")
    p.add_argument("--val-windows", type=int, help="fixed validation window count")
    p.add_argument("--batches-per-epoch", type=int)
    p.add_argument("--patience", type=int, help="epochs without improvement before stopping")
    p.add_argument("--seed", type=int)
    p.add_argument("--lw-formula", choices=("standard", "paper"))
    p.add_argument("--layers", type=int, help="transformer blocks (default 6)")
    p.add_argument("--width", type=int, help="embedding width (default 32)")
    p.add_argument("--heads", type=int, help="attention heads (default 4)")
    p.add_argument("--ff-width", type=int, help="feed-forward width (default 64)")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("backtest", help="rolling out-of-sample evaluation")
    p.add_argument("--data", help="returns CSV from the ingest step")
    p.add_argument("--model", help="model file (needed when methods include nn)")
    p.add_argument("--methods", help="comma list from scm,lw,chen,identity,nn")
    p.add_argument("--lookback", help="comma list of window lengths, e.g. 40,60,100")
    p.add_argument("--test-days", type=int, help="trailing evaluation period length")
    p.add_argument("--stride", type=int, help="rebalance stride = holding period")
    p.add_argument(
        "--lookback-source",
        choices=("pretest", "test-only"),
        help="whether estimation windows may reach before the test period",
    )
    p.add_argument("--lw-formula", choices=("standard", "paper"))
    p.add_argument("--rolling-window", type=int, help="window for rolling.csv")
    p.add_argument("--out", help="output directory for the report artifacts")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(handler=_cmd_backtest)

    p = sub.add_parser("report", help="summarize a backtest directory and render figures")
    p.add_argument("--in", dest="in_dir", help="backtest output directory (or report.json)")
    p.add_argument("--compare", help="two methods, e.g. nn,lw")
    p.add_argument("--window", type=int, help="rolling window for the comparison")
    p.add_argument("--lookback", type=int, help="lookback to compare and plot")
    p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        help="render PNG figures next to the CSVs (default on)",
    )
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(handler=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except MinvarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
