"""Parametric single-index regression families ``g(beta'x, theta)``.

A family is a record of vectorised function handles: the link ``g(t, theta)``
and its first and second partial derivatives in the index ``t`` and in the
link parameters ``theta``.  All handles take ``t`` as a 1-D array of index
values and ``theta`` as a 1-D array of length ``d``.

Shapes returned by the handles, for ``t`` of length ``n``:

=====  ===========
g      (n,)
g1     (n,)
g2     (n, d)
g11    (n,)
g12    (n, d)
g22    (n, d, d)
=====  ===========
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

__all__ = [
    "Dataset",
    "ParamVector",
    "ModelFamily",
    "FAMILIES",
    "get_family",
    "register_family",
    "check_derivatives",
    "evaluate",
    "score",
    "hessian_blocks",
]


class Dataset(NamedTuple):
    """Observations ``(X, y)`` with rows of ``X`` as predictor vectors."""

    X: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_arrays(cls, X, y) -> "Dataset":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(
                f"X must be (n, p) and y length n; got {X.shape} and {y.shape}"
            )
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise ValueError("need n >= 2 observations and p >= 1 predictors")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must contain only finite values")
        return cls(X, y)


class ParamVector(NamedTuple):
    """Index direction ``beta`` (length p) and link parameters ``theta`` (length d)."""

    beta: np.ndarray
    theta: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        return np.concatenate([self.beta, self.theta])

    @classmethod
    def from_gamma(cls, gamma, p: int) -> "ParamVector":
        gamma = np.asarray(gamma, dtype=float)
        return cls(gamma[:p].copy(), gamma[p:].copy())


@dataclass(frozen=True)
class ModelFamily:
    """A single-index link with analytic derivatives.

    ``normalize`` optionally maps ``(beta, theta)`` to an equivalent
    parametrisation (same fitted values); it is applied after estimation for
    families whose index scale is not identified.
    """

    name: str
    d: int
    g: Callable
    g1: Callable
    g2: Callable
    g11: Callable
    g12: Callable
    g22: Callable
    linear: bool = False
    normalize: Optional[Callable] = None


def _zeros2(t, theta):
    return np.zeros((np.shape(t)[0], len(theta)))


def _zeros3(t, theta):
    k = len(theta)
    return np.zeros((np.shape(t)[0], k, k))


LINEAR = ModelFamily(
    name="linear",
    d=0,
    g=lambda t, th: np.asarray(t, dtype=float).copy(),
    g1=lambda t, th: np.ones_like(t, dtype=float),
    g2=_zeros2,
    g11=lambda t, th: np.zeros_like(t, dtype=float),
    g12=_zeros2,
    g22=_zeros3,
    linear=True,
)

CUBIC = ModelFamily(
    name="cubic",
    d=0,
    g=lambda t, th: t**3,
    g1=lambda t, th: 3.0 * t**2,
    g2=_zeros2,
    g11=lambda t, th: 6.0 * t,
    g12=_zeros2,
    g22=_zeros3,
)

EXPONENTIAL = ModelFamily(
    name="exp",
    d=0,
    g=lambda t, th: np.exp(t),
    g1=lambda t, th: np.exp(t),
    g2=_zeros2,
    g11=lambda t, th: np.exp(t),
    g12=_zeros2,
    g22=_zeros3,
)


def _quadpoly_normalize(beta, theta):
    # (beta, theta) and (beta/s, theta1, s*theta2, s^2*theta3) give identical fits
    s = float(np.linalg.norm(beta))
    if s == 0.0:
        return beta, theta
    return beta / s, np.array([theta[0], theta[1] * s, theta[2] * s * s])


QUADPOLY = ModelFamily(
    name="quadpoly",
    d=3,
    g=lambda t, th: th[0] + th[1] * t + th[2] * t**2,
    g1=lambda t, th: th[1] + 2.0 * th[2] * t,
    g2=lambda t, th: np.column_stack([np.ones_like(t), t, t**2]),
    g11=lambda t, th: np.full(np.shape(t), 2.0 * th[2]),
    g12=lambda t, th: np.column_stack([np.zeros_like(t), np.ones_like(t), 2.0 * t]),
    g22=_zeros3,
    normalize=_quadpoly_normalize,
)

FAMILIES: dict[str, ModelFamily] = {
    f.name: f for f in (LINEAR, CUBIC, EXPONENTIAL, QUADPOLY)
}


def get_family(family) -> ModelFamily:
    """Resolve a family name (or pass a :class:`ModelFamily` through)."""
    if isinstance(family, ModelFamily):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown model family {family!r}; choose from {sorted(FAMILIES)}"
        ) from None


def _split(family: ModelFamily, gamma, x):
    if isinstance(gamma, ParamVector):
        beta, theta = np.asarray(gamma.beta, float), np.asarray(gamma.theta, float)
    else:
        raise TypeError("gamma must be a ParamVector")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise ValueError(
            f"dimension mismatch: beta has length {beta.shape[0]}, x has shape {x.shape}"
        )
    if theta.shape[0] != family.d:
        raise ValueError(
            f"family {family.name!r} expects theta of length {family.d}, got {theta.shape[0]}"
        )
    return beta, theta, X, single


def evaluate(family, gamma: ParamVector, x) -> np.ndarray | float:
    """Regression function ``g(beta'x, theta)`` at one point or at each row of ``x``."""
    family = get_family(family)
    beta, theta, X, single = _split(family, gamma, x)
    out = family.g(X @ beta, theta)
    return float(out[0]) if single else out


def score(family, gamma: ParamVector, x) -> np.ndarray:
    """Gradient of ``g(beta'x, theta)`` with respect to ``(beta, theta)``.

    The beta block is ``g1(beta'x, theta) * x`` and the theta block is
    ``g2(beta'x, theta)``.  Returns shape ``(p + d,)`` for a single point and
    ``(n, p + d)`` for a matrix of rows.
    """
    family = get_family(family)
    beta, theta, X, single = _split(family, gamma, x)
    t = X @ beta
    out = np.hstack([family.g1(t, theta)[:, None] * X, family.g2(t, theta)])
    return out[0] if single else out


def hessian_blocks(family, gamma: ParamVector, x) -> np.ndarray:
    """Second derivative of ``g(beta'x, theta)`` in ``(beta, theta)``.

    Returns ``(p + d, p + d)`` for a single point, ``(n, p + d, p + d)`` otherwise.
    """
    family = get_family(family)
    beta, theta, X, single = _split(family, gamma, x)
    n, p = X.shape
    d = family.d
    t = X @ beta
    H = np.zeros((n, p + d, p + d))
    H[:, :p, :p] = family.g11(t, theta)[:, None, None] * X[:, :, None] * X[:, None, :]
    if d:
        cross = X[:, :, None] * family.g12(t, theta)[:, None, :]
        H[:, :p, p:] = cross
        H[:, p:, :p] = np.transpose(cross, (0, 2, 1))
        H[:, p:, p:] = family.g22(t, theta)
    return H[0] if single else H


def check_derivatives(
    family: ModelFamily,
    p: int = 3,
    n_probes: int = 100,
    rtol: float = 1e-5,
    seed: int = 0,
) -> float:
    """Compare analytic score/Hessian with central finite differences.

    Probes draw ``beta``, ``theta`` and ``x`` from a standard normal scaled so the
    index stays in ``[-2, 2]``-ish.  Returns the largest relative error seen and
    raises ``ValueError`` when it exceeds ``rtol``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        beta = rng.standard_normal(p) / np.sqrt(p)
        theta = rng.standard_normal(family.d)
        x = rng.standard_normal(p)
        gam = np.concatenate([beta, theta])
        m = p + family.d

        def g_of(gv):
            return evaluate(family, ParamVector.from_gamma(gv, p), x)

        def s_of(gv):
            return score(family, ParamVector.from_gamma(gv, p), x)

        pv = ParamVector.from_gamma(gam, p)
        s = score(family, pv, x)
        H = hessian_blocks(family, pv, x)
        fd_s = np.empty(m)
        fd_H = np.empty((m, m))
        for k in range(m):
            step = 1e-6 * max(1.0, abs(gam[k]))
            e = np.zeros(m)
            e[k] = step
            fd_s[k] = (g_of(gam + e) - g_of(gam - e)) / (2 * step)
            fd_H[:, k] = (s_of(gam + e) - s_of(gam - e)) / (2 * step)
        scale_s = max(1.0, np.max(np.abs(s)))
        scale_H = max(1.0, np.max(np.abs(H)))
        err = max(
            np.max(np.abs(fd_s - s)) / scale_s,
            np.max(np.abs(fd_H - H)) / scale_H,
            np.max(np.abs(H - H.T)) / scale_H,
        )
        worst = max(worst, float(err))
    if worst > rtol:
        raise ValueError(
            f"derivatives of family {family.name!r} disagree with finite "
            f"differences (relative error {worst:.3g} > {rtol:g})"
        )
    return worst


def register_family(family: ModelFamily, p: int = 3) -> ModelFamily:
    """Validate a custom family's analytic derivatives and add it to :data:`FAMILIES`."""
    check_derivatives(family, p=p)
    FAMILIES[family.name] = family
    return family
