"""Least squares and sample moments.

``ols`` solves through a column-pivoted Householder QR (LAPACK ``geqp3`` via
scipy), which keeps near-collinear indicator designs well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

__all__ = ["LsFit", "ols", "numerical_rank", "sample_cov", "sample_cov_matrix"]

PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class LsFit:
    coefficients: NDArray[np.float64]
    residuals: NDArray[np.float64]
    rank_ok: bool
    rank: int


def _pivoted_qr(design: NDArray[np.float64]):
    q, rmat, piv = scipy.linalg.qr(design, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(rmat))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diag > PIVOT_RTOL * diag[0]))
    return q, rmat, piv, rank


def numerical_rank(design: ArrayLike) -> int:
    """Rank of ``design`` with the pivot threshold used by :func:`ols`."""
    d = np.asarray(design, dtype=float)
    if d.shape[1] == 0:
        return 0
    return _pivoted_qr(d)[3]


def ols(design: ArrayLike, response: ArrayLike) -> LsFit:
    """Unconstrained least squares fit of ``response`` on the columns of ``design``.

    Columns are not augmented; include an intercept column explicitly. When the
    numerical rank is below the column count, the basic solution is returned
    (coefficients of the trailing pivoted columns set to zero) and ``rank_ok`` is
    False. Callers decide whether that is fatal.
    """
    d = np.asarray(design, dtype=float)
    yv = np.asarray(response, dtype=float)
    m, p = d.shape
    if m < p:
        raise ValueError(f"ols needs at least as many rows as columns, got {m}x{p}")
    if p == 0:
        return LsFit(np.zeros(0), yv.copy(), True, 0)
    q, rmat, piv, rank = _pivoted_qr(d)
    qty = q[:, :rank].T @ yv
    coef_piv = np.zeros(p)
    if rank:
        coef_piv[:rank] = scipy.linalg.solve_triangular(rmat[:rank, :rank], qty, check_finite=False)
    coef = np.empty(p)
    coef[piv] = coef_piv
    resid = yv - d @ coef
    return LsFit(coef, resid, rank == p, rank)


def sample_cov(a: ArrayLike, b: ArrayLike) -> float:
    """Sample covariance with denominator ``m - 1``."""
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    m = av.shape[0]
    if bv.shape[0] != m:
        raise ValueError("sample_cov needs equal-length inputs")
    if m < 2:
        raise ValueError("sample_cov needs at least 2 observations")
    return float(np.dot(av - av.mean(), bv - bv.mean()) / (m - 1))


def sample_cov_matrix(columns: ArrayLike) -> NDArray[np.float64]:
    """Sample covariance matrix of the columns of an ``m x p`` array (denominator ``m - 1``).

    The result is symmetrised exactly.
    """
    z = np.asarray(columns, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    m = z.shape[0]
    if m < 2:
        raise ValueError("sample_cov_matrix needs at least 2 rows")
    zc = z - z.mean(axis=0)
    s = zc.T @ zc / (m - 1)
    return (s + s.T) / 2.0
