"""Global minimum variance portfolio weights and risk metrics.

Weights come from a precision (inverse covariance) estimate through the
closed form h = P1 / (1'P1). Short positions are allowed, so weights may
be negative; they always sum to one. Risk metrics use the population
(1/m) variance convention throughout, and annualization multiplies the
daily standard deviation by sqrt(252).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import PrecisionEstimate, invert_spd
from .errors import CollapsedWeightsError, DataError

TRADING_DAYS = 252
NORMALIZER_FLOOR = 1e-12


@dataclass
class PortfolioWeights:
    """Fractions of wealth per asset; negative entries are short positions."""

    weights: np.ndarray
    assets: tuple[str, ...]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.shape[0] < 1:
            raise DataError("weights must be a nonempty vector")
        if not np.all(np.isfinite(self.weights)):
            raise DataError("weights must be finite")
        self.assets = tuple(self.assets)
        if len(self.assets) != self.weights.shape[0]:
            raise DataError("asset labels do not match the weight count")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-10:
            raise DataError(f"weights sum to {total!r}, expected 1")

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass
class RiskReport:
    """Daily variance of portfolio returns and its annualized volatility."""

    daily_variance: float
    annualized_volatility: float
    sample_count: int

    def __post_init__(self):
        if self.daily_variance < 0:
            raise DataError("variance cannot be negative")
        expected = math.sqrt(TRADING_DAYS * self.daily_variance)
        if abs(self.annualized_volatility - expected) > 1e-12 * max(expected, 1.0):
            raise DataError("annualized volatility inconsistent with daily variance")


def _default_labels(n: int) -> tuple[str, ...]:
    return tuple(f"a{i}" for i in range(n))


def _weight_vector(h) -> np.ndarray:
    if isinstance(h, PortfolioWeights):
        return h.weights
    return np.asarray(h, dtype=np.float64)


def _check_square(c: np.ndarray, n: int | None = None) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DataError("covariance matrix must be square")
    if n is not None and c.shape[0] != n:
        raise DataError("covariance size does not match the weight count")
    return c


def gmvp_weights(
    precision: PrecisionEstimate | np.ndarray,
    assets: tuple[str, ...] | None = None,
) -> PortfolioWeights:
    """Minimum variance weights P1 / (1'P1) from a precision matrix."""
    p = precision.matrix if isinstance(precision, PrecisionEstimate) else precision
    p = _check_square(p)
    row_sums = p.sum(axis=1)
    normalizer = float(row_sums.sum())
    if abs(normalizer) <= NORMALIZER_FLOOR:
        raise CollapsedWeightsError("weight normalizer 1'P1 is numerically zero")
    labels = assets if assets is not None else _default_labels(p.shape[0])
    return PortfolioWeights(row_sums / normalizer, labels)


def theoretical_min_risk(c_true: np.ndarray) -> float:
    """Risk floor 1 / (1'C^-1 1) attainable with full knowledge of C."""
    c_true = _check_square(c_true)
    precision = invert_spd(c_true)
    return 1.0 / float(precision.matrix.sum())


def realized_risk(h, c_true: np.ndarray) -> float:
    """Variance h'Ch of the portfolio under the true covariance."""
    w = _weight_vector(h)
    c_true = _check_square(c_true, w.shape[0])
    return float(w @ c_true @ w)


def empirical_risk(h, oos: np.ndarray) -> RiskReport:
    """Out-of-sample variance of the scalar portfolio returns h'x_t.

    Uses the population (1/m) variance of the m realized portfolio
    returns, which equals the quadratic form h' ((1/m) sum x~ x~') h
    with columns centered by their own mean.
    """
    w = _weight_vector(h)
    oos = np.asarray(oos, dtype=np.float64)
    if oos.ndim != 2 or oos.shape[0] != w.shape[0]:
        raise DataError("out-of-sample matrix must be N x m with N assets")
    m = oos.shape[1]
    if m < 2:
        raise DataError("variance needs at least two return observations")
    portfolio_returns = w @ oos
    variance = float(portfolio_returns.var())
    return RiskReport(variance, math.sqrt(TRADING_DAYS * variance), m)


def rolling_annualized_risk(returns: np.ndarray, window: int) -> np.ndarray:
    """Trailing-window annualized volatility; length T - window + 1."""
    returns = np.asarray(returns, dtype=np.float64)
    if returns.ndim != 1:
        raise DataError("returns must be a one-dimensional series")
    if window < 2:
        raise DataError("window must cover at least two returns")
    if returns.shape[0] < window:
        raise DataError(
            f"series of length {returns.shape[0]} is shorter than window {window}"
        )
    panes = np.lib.stride_tricks.sliding_window_view(returns, window)
    return math.sqrt(TRADING_DAYS) * panes.std(axis=-1)
