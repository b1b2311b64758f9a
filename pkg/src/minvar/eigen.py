"""Symmetric eigendecomposition and precision reconstruction.

The solver is a cyclic-by-rows Jacobi iteration: deterministic, accurate to
near machine precision, and fast enough at desk scale (N up to a few
hundred). The kernel is JIT-compiled with numba when available and falls
back to the identical pure-Python code otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataError, SingularMatrixError

MAX_SIZE = 512
_MAX_SWEEPS = 64
_OFF_TOL = 5e-15

SOURCE_NN = "nn"
SOURCE_DIRECT = "direct-inverse"


def _jacobi_sweeps(a, v, max_sweeps, tol):
    # Rotates a in place to diagonal form, accumulating eigenvectors in v.
    # Returns the number of sweeps used, or -1 if the budget ran out.
    n = a.shape[0]
    fnorm2 = 0.0
    for i in range(n):
        for j in range(n):
            fnorm2 += a[i, j] * a[i, j]
    if fnorm2 == 0.0:
        return 0
    thresh2 = tol * tol * fnorm2
    for sweep in range(max_sweeps):
        off2 = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off2 += 2.0 * a[i, j] * a[i, j]
        if off2 <= thresh2:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1


try:  # pragma: no cover - exercised implicitly by every eigh call
    import numba

    _jacobi_sweeps = numba.njit(
        "i8(f8[:, ::1], f8[:, ::1], i8, f8)", cache=True
    )(_jacobi_sweeps)
except ImportError:  # pragma: no cover
    pass


@dataclass
class EigenSystem:
    """Descending eigenvalues and the matching orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=np.float64)
        n = self.eigenvalues.shape[0]
        if self.eigenvectors.shape != (n, n):
            raise DataError("eigenvector matrix shape does not match eigenvalues")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise DataError("eigenvalues must be sorted descending")

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass
class PrecisionEstimate:
    """Symmetric PSD estimate of an inverse covariance matrix."""

    matrix: np.ndarray
    source: str

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DataError("precision estimate must be square")
        scale = np.linalg.norm(self.matrix, "fro")
        asym = np.linalg.norm(self.matrix - self.matrix.T, "fro")
        if asym > 1e-12 * max(scale, 1e-300):
            raise DataError("precision estimate not symmetric")

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[0]


def eigh(a: np.ndarray) -> EigenSystem:
    """Full eigendecomposition of a symmetric matrix.

    Eigenvalues come back descending; each eigenvector is sign-fixed so its
    largest-magnitude component is positive, which makes the decomposition
    deterministic across runs.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError("eigh expects a square matrix")
    n = a.shape[0]
    if n > MAX_SIZE:
        raise DataError(f"matrix size {n} exceeds supported maximum {MAX_SIZE}")
    scale = np.linalg.norm(a, "fro")
    if np.linalg.norm(a - a.T, "fro") > 1e-10 * max(scale, 1e-300):
        raise DataError("eigh input is not symmetric")

    work = np.ascontiguousarray(0.5 * (a + a.T))
    vecs = np.ascontiguousarray(np.eye(n))
    sweeps = _jacobi_sweeps(work, vecs, _MAX_SWEEPS, _OFF_TOL)
    if sweeps < 0:
        raise ConvergenceError(
            f"Jacobi iteration failed to converge in {_MAX_SWEEPS} sweeps",
            last_iterate=work,
        )

    values = np.diag(work).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vecs = vecs[:, order]
    # Sign convention: largest-magnitude component of each eigenvector > 0.
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(n)])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    return EigenSystem(eigenvalues=values, eigenvectors=vecs)


def reconstruct_precision(es: EigenSystem, eta: np.ndarray) -> PrecisionEstimate:
    """sum_i eta_i u_i u_i' for nonnegative coefficients eta."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (es.size,):
        raise DataError(f"eta must have length {es.size}, got shape {eta.shape}")
    if np.any(eta < 0.0):
        raise DataError("eta entries must be nonnegative")
    u = es.eigenvectors
    m = (u * eta) @ u.T
    m = 0.5 * (m + m.T)
    return PrecisionEstimate(matrix=m, source=SOURCE_NN)


def invert_spd(a: np.ndarray) -> PrecisionEstimate:
    """Inverse of a symmetric positive definite matrix via eigendecomposition."""
    es = eigh(a)
    lam = es.eigenvalues
    if lam[-1] <= 0.0 or lam[-1] <= 1e-12 * lam[0]:
        raise SingularMatrixError(
            f"matrix is singular or indefinite (min eigenvalue {lam[-1]:.3e})"
        )
    u = es.eigenvectors
    m = (u / lam) @ u.T
    m = 0.5 * (m + m.T)
    return PrecisionEstimate(matrix=m, source=SOURCE_DIRECT)
