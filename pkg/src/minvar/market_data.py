"""Price ingestion, log returns, and train/validation window slicing.

The CSV schema is: first column holds ISO-8601 trading dates, every other
column is one ticker of dividend-adjusted closing prices. Rows containing
a missing cell are dropped (no imputation); non-positive prices and broken
date ordering are hard errors.
"""
from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

logger = logging.getLogger(__name__)

_MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none"}


def _check_dates(dates: list[str]) -> None:
    from datetime import date

    try:
        parsed = [date.fromisoformat(d) for d in dates]
    except ValueError as exc:
        raise DataError(f"dates must be ISO-8601: {exc}") from None
    for a, b in zip(parsed, parsed[1:]):
        if a == b:
            raise DataError(f"duplicate date {a.isoformat()}")
        if a > b:
            raise DataError(f"dates not increasing at {b.isoformat()}")


@dataclass
class PriceTable:
    """T trading days of positive adjusted closes for N assets (T x N)."""

    assets: list[str]
    dates: list[str]
    prices: np.ndarray

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=np.float64)
        if self.prices.ndim != 2:
            raise DataError("prices must be a 2-d array")
        t, n = self.prices.shape
        if len(self.dates) != t or len(self.assets) != n:
            raise DataError("label lengths do not match the price matrix")
        if t < 2 or n < 1:
            raise DataError(f"need at least 2 dates and 1 asset, got T={t}, N={n}")
        if not np.all(np.isfinite(self.prices)):
            raise DataError("prices contain non-finite values")
        if np.any(self.prices <= 0.0):
            bad = np.argwhere(self.prices <= 0.0)[0]
            raise DataError(
                f"non-positive price for {self.assets[bad[1]]} on {self.dates[bad[0]]}"
            )
        _check_dates(self.dates)

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    @property
    def n_days(self) -> int:
        return self.prices.shape[0]


@dataclass
class ReturnsMatrix:
    """Daily log returns, assets in rows: shape N x (T-1)."""

    assets: list[str]
    dates: list[str]
    returns: np.ndarray

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=np.float64)
        if self.returns.ndim != 2:
            raise DataError("returns must be a 2-d array")
        n, t = self.returns.shape
        if len(self.assets) != n or len(self.dates) != t:
            raise DataError("label lengths do not match the returns matrix")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("returns contain non-finite values")
        _check_dates(self.dates)

    @property
    def n_assets(self) -> int:
        return self.returns.shape[0]

    @property
    def n_periods(self) -> int:
        return self.returns.shape[1]

    def fingerprint(self) -> str:
        """Stable sha256 over labels and return values."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.assets).encode())
        h.update("\x1f".join(self.dates).encode())
        h.update(np.ascontiguousarray(self.returns).tobytes())
        return h.hexdigest()


@dataclass
class WindowSpec:
    """One training window: n in-sample columns then m validation columns."""

    start: int
    n: int
    m: int
    assets: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        if self.start < 0:
            raise DataError("window start must be >= 0")
        if self.n < 2:
            raise DataError("in-sample length n must be >= 2")
        if self.m < 1:
            raise DataError("validation length m must be >= 1")
        if self.assets is not None:
            self.assets = tuple(int(i) for i in self.assets)
            if len(set(self.assets)) != len(self.assets):
                raise DataError("asset subset indices must be distinct")


def load_prices(path) -> PriceTable:
    """Read a price CSV into a validated PriceTable.

    Rows with any missing cell are dropped; everything else that breaks the
    contract (non-numeric cell, non-positive price, bad dates) raises.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None

    if len(header) < 3:
        raise ParseError(f"{path}: need a date column plus at least 2 assets")
    assets = [c.strip() for c in header[1:]]
    if any(not a for a in assets) or len(set(assets)) != len(assets):
        raise ParseError(f"{path}: asset column names must be non-empty and unique")

    dates: list[str] = []
    prices: list[list[float]] = []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        cells = [c.strip() for c in row[1:]]
        if any(c.lower() in _MISSING_TOKENS for c in cells):
            dropped += 1
            continue
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        dates.append(row[0].strip())
        prices.append(values)

    if dropped:
        logger.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if len(prices) < 2:
        raise DataError(f"{path}: fewer than 2 complete price rows")
    return PriceTable(assets=assets, dates=dates, prices=np.array(prices))


def compute_returns(p: PriceTable) -> ReturnsMatrix:
    """Log returns from consecutive closes; column count drops by one."""
    logp = np.log(p.prices)
    returns = (logp[1:, :] - logp[:-1, :]).T
    return ReturnsMatrix(assets=list(p.assets), dates=list(p.dates[1:]), returns=returns)


def slice_window(r: ReturnsMatrix, w: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Split off (in_sample, validation) copies for one window.

    Returned arrays never alias the source matrix.
    """
    if w.start + w.n + w.m > r.n_periods:
        raise DataError(
            f"window [{w.start}, {w.start + w.n + w.m}) exceeds {r.n_periods} periods"
        )
    rows = np.asarray(w.assets, dtype=int) if w.assets is not None else slice(None)
    if w.assets is not None and (max(w.assets) >= r.n_assets or min(w.assets) < 0):
        raise DataError("asset subset index out of range")
    block = r.returns[rows, w.start : w.start + w.n + w.m]
    in_sample = block[:, : w.n].copy()
    validation = block[:, w.n :].copy()
    return in_sample, validation


def center_columns(x: np.ndarray) -> np.ndarray:
    """Subtract the per-row mean (mean over columns) from every column."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DataError("expected an N x k matrix with k >= 1")
    return x - x.mean(axis=1, keepdims=True)


def write_prices_csv(p: PriceTable, path) -> None:
    """Price CSV in the ingest schema: date column plus one column per asset."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(p.assets))
        for t, d in enumerate(p.dates):
            writer.writerow([d] + [repr(float(v)) for v in p.prices[t, :]])


def write_returns_csv(r: ReturnsMatrix, path) -> None:
    """Returns cache: same layout as the price CSV, values are log returns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(r.assets))
        for t, d in enumerate(r.dates):
            writer.writerow([d] + [repr(float(v)) for v in r.returns[:, t]])


def load_returns(path) -> ReturnsMatrix:
    """Read a returns cache written by :func:`write_returns_csv`."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    if len(header) < 2:
        raise ParseError(f"{path}: need a date column plus at least 1 asset")
    assets = [c.strip() for c in header[1:]]
    dates = []
    values = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        dates.append(row[0].strip())
    if not values:
        raise DataError(f"{path}: no return rows")
    return ReturnsMatrix(assets=assets, dates=dates, returns=np.array(values).T)
