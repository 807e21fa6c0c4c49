"""Numeric primitives: SPD checks, spectral decomposition, Gaussian log-density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .errors import DimensionMismatch, InvalidProbability, NotPsd, NotSymmetric, SingularMatrix

SYMMETRY_RTOL = 1e-12
PSD_ATOL = 1e-10
LOG_2PI = math.log(2.0 * math.pi)


def as_vector(x, d: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and v.shape[0] != d:
        raise DimensionMismatch(f"expected a length-{d} vector, got length {v.shape[0]}")
    return v


def symmetrize(S) -> np.ndarray:
    """Return (S + S^T)/2 after checking S is square and symmetric to 1e-12 relative."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {S.shape}")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (S + S.T)


def require_spd(S, name: str = "matrix") -> np.ndarray:
    S = symmetrize(S)
    if np.linalg.eigvalsh(S).min() <= 0.0:
        raise SingularMatrix(f"{name} is not strictly positive definite")
    return S


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of a symmetric PSD matrix, eigenvalues in descending order.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T

    def vector(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]


def spectral_decompose(S) -> SpectralDecomposition:
    S = symmetrize(S)
    w, Q = np.linalg.eigh(S)
    if w.size and w.min() < -PSD_ATOL:
        raise NotPsd(f"smallest eigenvalue {w.min():.3e} is negative")
    # descending; the stable sort keeps library order among tied eigenvalues
    order = np.argsort(-w, kind="stable")
    w = np.clip(w[order], 0.0, None)
    Q = Q[:, order].copy()
    for i in range(Q.shape[1]):
        col = Q[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            Q[:, i] = -col
    return SpectralDecomposition(eigenvectors=Q, eigenvalues=w)


def mahalanobis_sq(x, m, S) -> float:
    x = as_vector(x)
    m = as_vector(m, x.shape[0])
    S = np.asarray(S, dtype=float)
    if S.shape != (x.shape[0], x.shape[0]):
        raise DimensionMismatch(f"matrix shape {S.shape} does not match vector length {x.shape[0]}")
    try:
        L = np.linalg.cholesky(symmetrize(S))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("matrix is not strictly positive definite") from exc
    r = np.linalg.solve(L, x - m)
    return float(r @ r)


@dataclass(frozen=True, eq=False)
class GaussianPdf:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean)
        cov = require_spd(self.covariance, "covariance")
        if cov.shape[0] != mean.shape[0]:
            raise DimensionMismatch("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_density(self, x) -> float:
        return gaussian_log_density(self, x)


def gaussian_log_density(p: GaussianPdf, x) -> float:
    """Log score of ``x`` under ``p``."""
    x = as_vector(x, p.dim)
    try:
        L = np.linalg.cholesky(p.covariance)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("covariance is not strictly positive definite") from exc
    r = np.linalg.solve(L, x - p.mean)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (p.dim * LOG_2PI + logdet + r @ r))


def confidence_scale(beta: float, d: int) -> float:
    """Chi-square quantile q with P(chi2_d <= q) = beta."""
    if not 0.0 < beta < 1.0:
        raise InvalidProbability(f"beta must lie in (0, 1), got {beta}")
    if d < 1:
        raise DimensionMismatch(f"dimension must be positive, got {d}")
    if d == 2:
        return -2.0 * math.log1p(-beta)
    lo, hi = 0.0, float(d)
    while gammainc(d / 2.0, hi / 2.0) < beta:
        hi *= 2.0
    while hi - lo > 1e-10 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gammainc(d / 2.0, mid / 2.0) < beta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
