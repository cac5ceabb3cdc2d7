"""Univariate kernels and Nadaraya-Watson smoothers along a scalar index."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._validation import check_residuals

__all__ = [
    "KERNELS",
    "kernel_function",
    "SmoothingConfig",
    "silverman_bandwidth",
    "resolve_bandwidth",
    "nw",
    "conditional_moments",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def quartic(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, (15.0 / 16.0) * (1.0 - u * u) ** 2, 0.0)


def gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


KERNELS = {"quartic": quartic, "gaussian": gaussian}


def kernel_function(kind):
    if callable(kind):
        return kind
    try:
        return KERNELS[kind]
    except KeyError:
        raise ValueError(f"unknown kernel {kind!r}; choose from {sorted(KERNELS)}") from None


@dataclass
class SmoothingConfig:
    """Bandwidth (float or ``"auto"``), kernel name and variance floor."""

    bandwidth: Union[float, str] = "auto"
    kernel: str = "gaussian"
    variance_floor_fraction: float = 0.05

    def __post_init__(self):
        if self.bandwidth != "auto":
            self.bandwidth = float(self.bandwidth)
            if not self.bandwidth > 0:
                raise ValueError("bandwidth must be positive")
        if not self.variance_floor_fraction > 0:
            raise ValueError("variance_floor_fraction must be positive")
        kernel_function(self.kernel)


def silverman_bandwidth(index) -> float:
    index = np.asarray(index, dtype=float)
    n = index.shape[0]
    sd = float(np.std(index))
    if sd == 0.0:
        sd = 1.0
    return 1.06 * sd * n ** (-0.2)


def resolve_bandwidth(bandwidth, index) -> float:
    if bandwidth is None or bandwidth == "auto":
        return silverman_bandwidth(index)
    return float(bandwidth)


def _weights_matrix(points, v, h, kernel):
    K = kernel_function(kernel)
    return K((np.asarray(v, float)[:, None] - np.asarray(points, float)[None, :]) / h)


def nw(points, weights, v, h: float, kernel="quartic"):
    """Nadaraya-Watson estimate of ``E[weights | point = v]``.

    ``v`` may be a scalar or an array.  ``weights`` may be 1-D or an ``(n, k)``
    matrix (each column smoothed separately).  Where the kernel window is
    empty the response of the nearest point is returned.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    scalar = np.ndim(v) == 0
    v = np.atleast_1d(np.asarray(v, dtype=float))
    W = _weights_matrix(points, v, h, kernel)
    den = W.sum(axis=1)
    num = W @ weights
    empty = den <= 0
    den_safe = np.where(empty, 1.0, den)
    out = num / (den_safe if weights.ndim == 1 else den_safe[:, None])
    if np.any(empty):
        nearest = np.argmin(np.abs(v[empty, None] - points[None, :]), axis=1)
        out[empty] = weights[nearest]
    return out[0] if scalar else out


def conditional_moments(index, X, residuals, cfg: SmoothingConfig | None = None,
                        need_r: bool = True):
    """Smoothed ``E[X | index]`` and ``E[e^2 | index]`` at every sample index value.

    The variance estimate is floored at ``variance_floor_fraction`` times the
    mean squared residual.

    Returns
    -------
    r_hat : ndarray of shape (n, p), or None when ``need_r`` is false
    sigma2 : ndarray of shape (n,)

    Raises
    ------
    DegenerateFitError
        If every residual is zero.
    """
    cfg = cfg or SmoothingConfig()
    e = check_residuals(residuals)
    index = np.asarray(index, dtype=float)
    h = resolve_bandwidth(cfg.bandwidth, index)
    K = kernel_function(cfg.kernel)
    W = K((index[:, None] - index[None, :]) / h)
    # each evaluation point is itself a sample point, so den > 0
    den = W.sum(axis=1)
    sigma2 = (W @ (e * e)) / den
    floor = cfg.variance_floor_fraction * float(np.mean(e * e))
    sigma2 = np.maximum(sigma2, floor)
    r_hat = None
    if need_r:
        r_hat = (W @ np.asarray(X, dtype=float)) / den[:, None]
    return r_hat, sigma2
