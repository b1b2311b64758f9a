"""Synthetic market data generators for demos, tests, and benchmarks.

The covariance model is the usual spiked spectrum: a handful of large
eigenvalues over a flat bulk, rotated by a Haar-random orthogonal basis.
Returns are i.i.d. Gaussian draws from that covariance; prices integrate
the returns from a fixed base so the ingest path can be exercised end to
end on data with a known ground truth.
"""
from __future__ import annotations

import datetime as dt

import numpy as np

from .errors import ConfigError
from .market_data import PriceTable, ReturnsMatrix

FIRST_DATE = dt.date(2010, 1, 4)  # a Monday


def spiked_covariance(
    n_assets: int,
    n_spikes: int = 5,
    spike_range: tuple[float, float] = (5.0, 20.0),
    bulk: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Haar-rotated spectrum with n_spikes large eigenvalues over a flat bulk."""
    if not 0 <= n_spikes <= n_assets:
        raise ConfigError(f"cannot place {n_spikes} spikes in {n_assets} assets")
    if bulk <= 0 or spike_range[0] <= 0 or spike_range[1] < spike_range[0]:
        raise ConfigError("spike range and bulk must be positive")
    rng = np.random.default_rng(seed)
    spectrum = np.full(n_assets, bulk)
    spectrum[:n_spikes] = rng.uniform(spike_range[0], spike_range[1], size=n_spikes)
    q, r = np.linalg.qr(rng.normal(size=(n_assets, n_assets)))
    q *= np.sign(np.diag(r))  # fix the QR sign ambiguity for a Haar draw
    c = (q * spectrum) @ q.T
    return 0.5 * (c + c.T)


def weekday_dates(count: int, start: dt.date = FIRST_DATE) -> list[str]:
    """ISO dates for `count` consecutive weekdays from `start`."""
    out: list[str] = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day.isoformat())
        day += dt.timedelta(days=1)
    return out


def gaussian_returns(
    c: np.ndarray,
    n_periods: int,
    seed: int = 0,
    var_scale: float = 1.0,
) -> ReturnsMatrix:
    """i.i.d. N(0, var_scale * C) daily returns, assets in rows."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ConfigError("covariance must be square")
    if n_periods < 1 or var_scale <= 0:
        raise ConfigError("need a positive horizon and variance scale")
    n = c.shape[0]
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(var_scale * c)
    returns = chol @ rng.standard_normal(size=(n, n_periods))
    assets = [f"S{i:03d}" for i in range(n)]
    return ReturnsMatrix(assets, weekday_dates(n_periods + 1)[1:], returns)


def returns_to_prices(r: ReturnsMatrix, base: float = 100.0) -> PriceTable:
    """Integrate log returns into a price path starting at `base`.

    The output has one more row than the return count; feeding it back
    through the returns computation recovers r up to rounding.
    """
    if base <= 0:
        raise ConfigError("base price must be positive")
    log_prices = np.concatenate(
        [np.zeros((1, r.n_assets)), np.cumsum(r.returns.T, axis=0)], axis=0
    )
    dates = weekday_dates(r.n_periods + 1)
    if dates[1:] != r.dates:
        # keep the return dates; synthesize one weekday before the first
        first = dt.date.fromisoformat(r.dates[0])
        day = first - dt.timedelta(days=1)
        while day.weekday() >= 5:
            day -= dt.timedelta(days=1)
        dates = [day.isoformat()] + list(r.dates)
    return PriceTable(list(r.assets), dates, base * np.exp(log_prices))
