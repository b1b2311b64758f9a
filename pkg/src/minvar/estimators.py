"""Classical covariance estimators used as baselines and as the network input.

All estimators take an N x n data matrix (assets in rows, observations in
columns) and return a :class:`CovarianceEstimate`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataError
from .market_data import center_columns

KIND_SCM = "scm"
KIND_LW = "lw"
KIND_CHEN = "chen"
KIND_IDENTITY = "identity"

LW_FORMULA_STANDARD = "standard"
LW_FORMULA_PAPER = "paper"
LW_FORMULAS = (LW_FORMULA_STANDARD, LW_FORMULA_PAPER)

# Chen fixed-point defaults; all tunable through the keyword arguments.
CHEN_MAX_ITER = 200
CHEN_TOL = 1e-10


@dataclass
class CovarianceEstimate:
    """Symmetric N x N covariance estimate tagged with its estimator kind."""

    matrix: np.ndarray
    kind: str
    shrinkage_intensity: float | None = None
    iterations: int | None = None
    residual: float | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DataError("covariance estimate must be square")
        scale = np.linalg.norm(self.matrix, "fro")
        asym = np.linalg.norm(self.matrix - self.matrix.T, "fro")
        if asym > 1e-12 * max(scale, 1e-300):
            raise DataError(f"matrix not symmetric: rel asymmetry {asym / scale:.3e}")

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[0]


def _as_data_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("expected an N x n data matrix")
    if x.shape[1] < 2:
        raise DataError(f"need n >= 2 observations, got n={x.shape[1]}")
    return x


def sample_covariance(x: np.ndarray) -> CovarianceEstimate:
    """(1/n) sum of outer products of the column-centered observations."""
    x = _as_data_matrix(x)
    xc = center_columns(x)
    n = xc.shape[1]
    s = (xc @ xc.T) / n
    s = 0.5 * (s + s.T)
    return CovarianceEstimate(matrix=s, kind=KIND_SCM)


def _squared_deviation_sum(obs: np.ndarray, s: np.ndarray) -> float:
    """sum_t || x_t x_t' - S ||_F^2 without forming the outer products."""
    norms2 = np.einsum("it,it->t", obs, obs)
    quad = np.einsum("it,ij,jt->t", obs, s, obs)
    s2 = float(np.sum(s * s))
    return float(np.sum(norms2**2 - 2.0 * quad) + obs.shape[1] * s2)


def ledoit_wolf(x: np.ndarray, formula: str = LW_FORMULA_STANDARD) -> CovarianceEstimate:
    """Linear shrinkage of the sample covariance toward a scaled identity.

    ``formula="standard"`` uses the well-conditioned intensity
    rho = min(1, b2 / d2) with d2 = ||S - mu I||_F^2 and
    b2 = (1/n^2) sum_t ||x~_t x~_t' - S||_F^2 on centered data.
    ``formula="paper"`` uses rho = a2 / b2 with a2 = ||S - mu I||_F^2 and
    b2 = (1/n) sum_t ||x_t x_t' - S||_F^2 on raw columns, clamped to [0, 1].
    """
    x = _as_data_matrix(x)
    n_assets, n = x.shape
    s = sample_covariance(x).matrix
    mu = float(np.trace(s)) / n_assets
    if mu <= 0.0:
        raise DataError("degenerate data: sample covariance has zero trace")
    d2 = float(np.sum((s - mu * np.eye(n_assets)) ** 2))

    if formula == LW_FORMULA_STANDARD:
        xc = center_columns(x)
        b2 = _squared_deviation_sum(xc, s) / (n * n)
        rho = min(1.0, b2 / d2) if d2 > 0.0 else 0.0
    elif formula == LW_FORMULA_PAPER:
        b2 = _squared_deviation_sum(x, s) / n
        if b2 > 0.0:
            rho = min(1.0, max(0.0, d2 / b2))
        else:
            rho = 1.0 if d2 > 0.0 else 0.0
    else:
        raise DataError(f"unknown Ledoit-Wolf formula {formula!r}")

    c = rho * mu * np.eye(n_assets) + (1.0 - rho) * s
    c = 0.5 * (c + c.T)
    return CovarianceEstimate(matrix=c, kind=KIND_LW, shrinkage_intensity=rho)


def _chen_auto_rho(x: np.ndarray) -> float:
    """Default regularization weight for the Chen fixed point.

    Linear-shrinkage intensity evaluated on the direction-normalized samples
    s_t = sqrt(N) x_t / ||x_t|| (insensitive to per-column scale), floored at
    the level that guarantees the regularized fixed point exists for n < N.
    """
    n_assets, n = x.shape
    norms = np.linalg.norm(x, axis=0)
    s_t = np.sqrt(n_assets) * x / norms
    s = (s_t @ s_t.T) / n
    d2 = float(np.sum((s - np.eye(n_assets)) ** 2))
    b2 = _squared_deviation_sum(s_t, s) / (n * n)
    rho = min(1.0, b2 / d2) if d2 > 0.0 else 1.0
    floor = max(1e-3, 1.0 - n / n_assets + 1e-3)
    return float(min(1.0, max(floor, rho)))


def chen_estimator(
    x: np.ndarray,
    rho: float | None = None,
    assume_centered: bool = False,
    max_iter: int = CHEN_MAX_ITER,
    tol: float = CHEN_TOL,
) -> CovarianceEstimate:
    """Regularized Tyler fixed point, trace-matched to the sample covariance.

    Iterates ``(1 - rho) (N/n) sum_t x_t x_t' / (x_t' inv(C) x_t) + rho I``
    with trace renormalization each step, starting from the identity. The
    final iterate is rescaled so its trace equals tr(S_N).
    """
    x = _as_data_matrix(x)
    n_assets, n = x.shape
    trace_target = float(np.trace(sample_covariance(x).matrix))
    if trace_target <= 0.0:
        raise DataError("degenerate data: sample covariance has zero trace")
    obs = x if assume_centered else center_columns(x)
    norms = np.linalg.norm(obs, axis=0)
    if np.any(norms == 0.0):
        raise DataError("observation column is zero after centering")
    if rho is None:
        rho = _chen_auto_rho(obs)
    if not 0.0 < rho <= 1.0:
        raise DataError(f"chen rho must lie in (0, 1], got {rho}")

    eye = np.eye(n_assets)
    sigma = eye.copy()
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        weights = np.einsum("it,it->t", obs, np.linalg.solve(sigma, obs))
        scaled = obs / np.sqrt(weights)
        tyler = (n_assets / n) * (scaled @ scaled.T)
        nxt = (1.0 - rho) * tyler + rho * eye
        nxt *= n_assets / np.trace(nxt)
        nxt = 0.5 * (nxt + nxt.T)
        residual = float(
            np.linalg.norm(nxt - sigma, "fro") / np.linalg.norm(sigma, "fro")
        )
        sigma = nxt
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"Chen fixed point did not converge in {max_iter} iterations "
            f"(residual {residual:.3e})",
            last_iterate=sigma * (trace_target / n_assets),
            residual=residual,
        )

    sigma = sigma * (trace_target / n_assets)
    return CovarianceEstimate(
        matrix=sigma,
        kind=KIND_CHEN,
        shrinkage_intensity=float(rho),
        iterations=iteration,
        residual=residual,
    )


def identity_estimate(n_assets: int) -> CovarianceEstimate:
    """Identity covariance; its GMVP is the uniform 1/N portfolio."""
    if n_assets < 1:
        raise DataError("n_assets must be >= 1")
    return CovarianceEstimate(matrix=np.eye(n_assets), kind=KIND_IDENTITY)
