"""
Factorizations of the prediction-error covariance.

All factors work on the single-channel temporal matrix ``T`` and account for
``N_o`` independent channels, so ``K = T kron I`` is never formed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import eigsh

from .errors import NumericalError

__all__ = [
    "JITTER",
    "CholeskyFactor",
    "SpectralFactor",
    "TruncationPolicy",
    "cholesky_factor",
    "toeplitz_logdet_quad",
    "spectral_truncation",
]

JITTER = 1e-10  # times mean diagonal, applied once


@dataclass
class CholeskyFactor:
    lower: np.ndarray
    channels: int = 1
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * self.channels * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, R):
        return sla.cho_solve((self.lower, True), R)

    def quad(self, R) -> float:
        W = sla.solve_triangular(self.lower, np.asarray(R).reshape(self.n, -1), lower=True)
        return float(np.sum(W * W))


def cholesky_factor(T: np.ndarray, channels: int = 1) -> CholeskyFactor:
    """Cholesky of ``T`` with the one-shot jitter retry."""
    try:
        return CholeskyFactor(np.linalg.cholesky(T), channels)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER * float(np.mean(np.diag(T)))
    Tj = T + jitter * np.eye(T.shape[0])
    try:
        return CholeskyFactor(np.linalg.cholesky(Tj), channels, jitter)
    except np.linalg.LinAlgError:
        d = np.diag(T)
        raise NumericalError(
            "covariance not positive definite after jitter",
            {"n": int(T.shape[0]), "jitter": jitter, "diag_min": float(d.min()), "diag_max": float(d.max()),
             "symmetric": bool(np.allclose(T, T.T))},
        ) from None


@numba.njit(cache=True)
def _durbin(c, R):
    n = c.shape[0]
    p = R.shape[1]
    a = np.zeros(n)
    tmp = np.zeros(n)
    v = c[0]
    if not v > 0.0:
        return False, 0.0, 0.0
    logdet = np.log(v)
    quad = 0.0
    for j in range(p):
        quad += R[0, j] * R[0, j] / v
    for k in range(1, n):
        s = c[k]
        for j in range(1, k):
            s -= a[j] * c[k - j]
        kappa = s / v
        for j in range(1, k):
            tmp[j] = a[j] - kappa * a[k - j]
        for j in range(1, k):
            a[j] = tmp[j]
        a[k] = kappa
        v = v * (1.0 - kappa * kappa)
        if not v > 0.0:
            return False, 0.0, 0.0
        logdet += np.log(v)
        for col in range(p):
            e = R[k, col]
            for j in range(1, k + 1):
                e -= a[j] * R[k - j, col]
            quad += e * e / v
    return True, logdet, quad


def toeplitz_logdet_quad(column, R):
    """``(log|T|, sum_c r_c^T T^-1 r_c)`` for symmetric Toeplitz ``T`` with first column ``column``.

    Levinson-Durbin innovations, O(n^2). ``R`` has one column per channel.
    Applies the jitter policy once; raises NumericalError if ``T`` is still
    not positive definite.
    """
    c = np.ascontiguousarray(column, dtype=float)
    R = np.ascontiguousarray(np.asarray(R, dtype=float).reshape(c.size, -1))
    ok, logdet, quad = _durbin(c, R)
    if not ok:
        c = c.copy()
        c[0] += JITTER * c[0]
        ok, logdet, quad = _durbin(c, R)
        if not ok:
            raise NumericalError("Toeplitz covariance not positive definite after jitter",
                                 {"n": int(c.size), "c0": float(column[0])})
    return logdet * R.shape[1], quad


@dataclass(frozen=True)
class TruncationPolicy:
    relative_threshold: float = 0.005
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not 1e-3 <= self.relative_threshold <= 1e-2:
            raise ValueError("relative_threshold must lie in [1e-3, 1e-2]")


@dataclass
class SpectralFactor:
    """Eigen-truncated covariance; discarded directions use the noise floor."""

    eigenvalues: np.ndarray  # retained, descending
    eigenvectors: np.ndarray  # (dim, r)
    noise_floor: float
    dim: int
    channels: int = 1

    @property
    def retained(self) -> int:
        return self.eigenvalues.size

    @property
    def logdet(self) -> float:
        per = np.sum(np.log(self.eigenvalues)) + (self.dim - self.retained) * np.log(self.noise_floor)
        return float(per) * self.channels

    def solve(self, R):
        R = np.asarray(R, dtype=float)
        P = self.eigenvectors.T @ R
        resid = R - self.eigenvectors @ P
        return self.eigenvectors @ (P / self._col(self.eigenvalues, P)) + resid / self.noise_floor

    def quad(self, R) -> float:
        R = np.asarray(R, dtype=float).reshape(self.dim, -1)
        P = self.eigenvectors.T @ R
        total = float(np.sum(R * R))
        kept = float(np.sum(P * P))
        return float(np.sum(P * P / self.eigenvalues[:, None])) + max(total - kept, 0.0) / self.noise_floor

    @staticmethod
    def _col(lam, P):
        return lam[:, None] if P.ndim == 2 else lam


def spectral_truncation(T: np.ndarray, threshold: float, noise_floor: float, channels: int = 1) -> SpectralFactor:
    """Keep eigenpairs of symmetric ``T`` with eigenvalue >= threshold * lambda_max."""
    if not noise_floor > 0:
        raise ValueError("truncated form needs a positive noise floor")
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    if n > 200:
        lam_max = float(eigsh(T, k=1, which="LA", return_eigenvectors=False)[0])
        try:
            lam, vec = sla.eigh(T, subset_by_value=(threshold * lam_max * (1 - 1e-12), np.inf), driver="evr")
        except np.linalg.LinAlgError:
            lam, vec = np.linalg.eigh(T)
            keep = lam >= threshold * lam[-1]
            lam, vec = lam[keep], vec[:, keep]
    else:
        lam, vec = np.linalg.eigh(T)
        keep = lam >= threshold * lam[-1]
        lam, vec = lam[keep], vec[:, keep]
    order = np.argsort(lam)[::-1]
    return SpectralFactor(lam[order], vec[:, order], float(noise_floor), n, channels)
