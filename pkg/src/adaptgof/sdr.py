"""Cumulative slicing estimation (CSE) of the central subspace.

The target matrix is estimated by the double average

    M_hat = (1/n) sum_j a(Y_j) a(Y_j)',   a(t) = (1/n) sum_i Z_i 1{Y_i <= t}

over standardised predictors ``Z``.  The structural dimension is chosen by the
minimum ridge-type eigenvalue ratio with ridge ``c = log(n) / n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_X, check_Xy
from .exceptions import EstimationError

__all__ = [
    "StandardizedData",
    "SdrResult",
    "standardize",
    "cse_matrix",
    "mrer",
    "ridge_constant",
    "reduce",
    "CumulativeSlicing",
]


@dataclass
class StandardizedData:
    Z: np.ndarray
    mean: np.ndarray
    cov_root_inv: np.ndarray


@dataclass
class SdrResult:
    M_hat: np.ndarray
    eigenvalues: np.ndarray
    q_hat: int
    B_std: np.ndarray
    B_hat: np.ndarray
    ridge_c: float
    standardized: StandardizedData

    def projections(self, X) -> np.ndarray:
        """Original-scale projections ``X @ B_hat`` (uncentred), shape (n, q_hat)."""
        return np.asarray(X, dtype=float) @ self.B_hat


def standardize(X) -> StandardizedData:
    """Centre and whiten ``X`` with the divisor-n sample covariance.

    Raises
    ------
    EstimationError
        When the sample covariance is singular; the message gives its rank.
    """
    X = check_X(X)
    n, p = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / n
    w, V = np.linalg.eigh(cov)
    tol = max(w.max(), 0.0) * p * np.finfo(float).eps * 10
    rank = int(np.sum(w > tol))
    if rank < p or n <= p:
        raise EstimationError(
            f"sample covariance of X is singular (rank {rank} < p={p})"
        )
    root_inv = (V / np.sqrt(w)) @ V.T
    root_inv = 0.5 * (root_inv + root_inv.T)
    return StandardizedData(Xc @ root_inv, mean, root_inv)


def cse_matrix(Z, y) -> np.ndarray:
    """CSE target matrix estimate from standardised predictors ``Z`` and response ``y``.

    Ties in ``y`` follow the ``<=`` indicator: every observation in a tie
    group contributes to ``a(t)`` at that value.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    order = np.argsort(y, kind="stable")
    ys = y[order]
    csum = np.cumsum(Z[order], axis=0) / n
    last = np.searchsorted(ys, ys, side="right") - 1
    alpha = csum[last]
    M = alpha.T @ alpha / n
    return 0.5 * (M + M.T)


def ridge_constant(n: int) -> float:
    return float(np.log(n) / n)


def mrer(eigenvalues, n: int, c: Optional[float] = None) -> int:
    """Structural dimension minimising ``(l_{i+1}^2 + c) / (l_i^2 + c)``.

    ``l_{p+1}`` is taken as 0 and ties resolve to the smallest index.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("eigenvalues must be a non-empty 1-D array")
    if n < 2:
        raise ValueError("n must be at least 2")
    c = ridge_constant(n) if c is None else float(c)
    if c <= 0:
        raise ValueError("ridge constant must be positive")
    sq = np.append(lam, 0.0) ** 2
    ratios = (sq[1:] + c) / (sq[:-1] + c)
    return int(np.argmin(ratios)) + 1


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # deterministic orientation: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def reduce(X, y, align_to=None, c: Optional[float] = None, q: Optional[int] = None) -> SdrResult:
    """Estimate the central subspace basis and its dimension.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    align_to : array of shape (p,), optional
        The first basis direction is sign-flipped to have a nonnegative inner
        product with this vector (in original predictor scale).
    c : float, optional
        Ridge constant override; defaults to ``log(n) / n``.
    q : int, optional
        Force the structural dimension instead of estimating it.
    """
    X, y = check_Xy(X, y)
    n, p = X.shape
    std = standardize(X)
    M = cse_matrix(std.Z, y)
    w, V = np.linalg.eigh(M)
    w, V = w[::-1], V[:, ::-1]
    eig = np.clip(w, 0.0, None)
    ridge = ridge_constant(n) if c is None else float(c)
    q_hat = mrer(eig, n, ridge) if q is None else int(q)
    if not 1 <= q_hat <= p:
        raise ValueError(f"structural dimension must lie in [1, {p}]")
    B_std = _fix_signs(V[:, :q_hat])
    B = std.cov_root_inv @ B_std
    norms = np.linalg.norm(B, axis=0)
    B = B / norms
    if align_to is not None:
        align_to = np.asarray(align_to, dtype=float)
        if align_to.shape != (p,):
            raise ValueError(f"align_to must have length {p}")
        if float(B[:, 0] @ align_to) < 0:
            B[:, 0] *= -1.0
            B_std[:, 0] *= -1.0
    return SdrResult(M, eig, q_hat, B_std, B, ridge, std)


class CumulativeSlicing(TransformerMixin, BaseEstimator):
    """Transformer projecting ``X`` onto the CSE estimate of the central subspace.

    Parameters
    ----------
    ridge : float, optional
        MRER ridge constant (default ``log(n)/n``).
    n_components : int, optional
        Fixed structural dimension; estimated by MRER when ``None``.
    align_to : array of shape (p,), optional
        Orientation reference for the leading direction.
    """

    def __init__(self, ridge=None, n_components=None, align_to=None):
        self.ridge = ridge
        self.n_components = n_components
        self.align_to = align_to

    def fit(self, X, y):
        res = reduce(X, y, align_to=self.align_to, c=self.ridge, q=self.n_components)
        self.result_ = res
        self.eigenvalues_ = res.eigenvalues
        self.q_hat_ = res.q_hat
        self.components_ = res.B_std.T
        self.directions_ = res.B_hat
        self.n_features_in_ = X.shape[1] if hasattr(X, "shape") else len(X[0])
        return self

    def transform(self, X):
        check_is_fitted(self, "directions_")
        return check_X(X) @ self.directions_
