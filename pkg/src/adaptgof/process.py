"""Residual-marked empirical process along a projected index and its
empirical martingale transform.

For projections ``u_i`` and residuals ``e_i`` the marked process is

    V(u) = n^{-1/2} sum_i e_i 1{u_i <= u}

and the transform subtracts, at each ``u``,

    n^{-3/2} sum_{i,j} 1{u_i <= u} a(u_i)' A(u_i)^+ a(u_j) 1{u_j >= u_i} e_j sigma2(u_i)

with ``A(z) = (1/n) sum_k a(u_k) m(u_k)' 1{u_k >= z}``.  Here ``m`` is the
(smoothed) derivative of the regression function along the index and
``a = m / sigma2``.  Because ``A`` is assembled from the same plug-ins, the
transform annihilates any drift of the form ``(1/n) sum_i c'm(u_i) 1{u_i <= u}``
exactly.

Everything is evaluated with sorted cumulative sums, so one transform costs
``O(n log n)`` in the spherical mode (``O(n k^3)`` with ``k = p + d``
otherwise, plus the ``O(n^2)`` kernel smoother when one is needed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm, qmc

from ._validation import check_residuals
from .kernel import SmoothingConfig, conditional_moments
from .model import ParamVector, get_family, score
from .nls import FitResult
from .sdr import SdrResult

__all__ = [
    "MarkedProcess",
    "TransformedProcess",
    "SupProcess",
    "marked_process",
    "transform",
    "transform_marks",
    "annihilation_check",
    "direction_grid",
    "sup_process",
]

MODES = ("spherical", "general")
SPHERICAL_A_CUTOFF = 1e-10
GENERAL_PINV_RCOND = 1e-8


@dataclass
class MarkedProcess:
    """Marked process at its sorted jump points.

    ``order`` maps sorted positions back to observation indices, so
    ``residuals == original_residuals[order]``.
    """

    jump_points: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    order: np.ndarray
    direction: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.jump_points.shape[0]


@dataclass
class TransformedProcess:
    jump_points: np.ndarray
    values: np.ndarray
    transformed_values: np.ndarray
    a_values: np.ndarray
    A_values: np.ndarray
    sigma2_values: np.ndarray
    mode: str
    retained: np.ndarray
    dropped: int
    order: np.ndarray
    residuals: np.ndarray

    @property
    def u0(self) -> float:
        idx = np.flatnonzero(self.retained)
        return float(self.jump_points[idx[-1]]) if idx.size else -np.inf


@dataclass
class SupProcess:
    """Pointwise supremum over directions, aligned by rank of the projection.

    ``values[k]`` is ``max_alpha |T V(alpha, u_(k)^alpha)|`` where
    ``u_(k)^alpha`` is the k-th order statistic of the projection on
    ``alpha``.  ``residuals`` follow the rank order of the reference
    direction (the first, ``alpha = e_1``).
    """

    values: np.ndarray
    sigma2: np.ndarray
    retained: np.ndarray
    argmax: np.ndarray
    directions: np.ndarray
    reference: TransformedProcess
    dropped: int = 0
    per_direction: list = field(default_factory=list, repr=False)

    @property
    def residuals(self) -> np.ndarray:
        return self.reference.residuals


def _tie_bounds(us):
    first = np.searchsorted(us, us, side="left")
    last = np.searchsorted(us, us, side="right") - 1
    return first, last


def marked_process(residuals, projections, direction=None) -> MarkedProcess:
    """Cumulative residual sums ordered by ``projections``, scaled by ``1/sqrt(n)``.

    Jump points are sorted with a stable sort; at tied projections the
    process takes the value that includes the whole tie group.
    """
    e = np.asarray(residuals, dtype=float)
    u = np.asarray(projections, dtype=float)
    if e.shape != u.shape or e.ndim != 1:
        raise ValueError("residuals and projections must be 1-D arrays of equal length")
    n = e.shape[0]
    order = np.argsort(u, kind="stable")
    us, es = u[order], e[order]
    _, last = _tie_bounds(us)
    values = (np.cumsum(es) / np.sqrt(n))[last]
    return MarkedProcess(us, values, es, order, direction)


def _rev_cumsum(x):
    return np.cumsum(x[::-1], axis=0)[::-1]


def _tail_fitted(m, marks, sigma2, first):
    """``m_i' b_i`` where ``b_i`` is the weighted least-squares fit of the marks
    on ``m`` over the tail ``{j >= first[i]}`` with weights ``1 / sigma2``.

    Equals ``a_i' A_i^+ S_i / n`` for ``a = m / sigma2`` but stays exact when
    the tail design is rank deficient, since fitted values are unique.
    """
    w = 1.0 / np.sqrt(sigma2)
    Mw, ew = m * w[:, None], marks * w
    out = np.empty(m.shape[0])
    for s in np.unique(first):
        sol = np.linalg.lstsq(Mw[s:], ew[s:], rcond=None)[0]
        rows = first == s
        out[rows] = m[rows] @ sol
    return out


def transform_marks(jump_points, marks, a, m, sigma2, u0_quantile: float = 0.99,
                    solver: str = "lstsq"):
    """Apply the empirical transform to marks sitting at sorted ``jump_points``.

    Parameters
    ----------
    jump_points : (n,) sorted projections
    marks : (n,) residual marks in the same order
    a : (n,) or (n, k)
        ``a(u_i)`` plug-ins; 1-D means the real-valued (spherical) case.
    m : same shape as ``a``
        Jumps used to build ``A``.
    sigma2 : (n,) variance plug-in
    u0_quantile : float
        Only positions whose empirical CDF is at most this are retained.
    solver : {"lstsq", "pinv"}
        Vector case only.  ``"lstsq"`` assumes ``a = m / sigma2`` and solves
        the tail least-squares problems directly; ``"pinv"`` inverts ``A``
        (needed when ``A`` is built from jumps other than ``a * sigma2``).

    Returns
    -------
    values, transformed, A, retained, dropped
    """
    us = np.asarray(jump_points, dtype=float)
    e = np.asarray(marks, dtype=float)
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), us.shape)
    n = us.shape[0]
    first, last = _tie_bounds(us)
    in_range = (last + 1) / n <= u0_quantile + 1e-12

    if a.ndim == 1:
        A_all = _rev_cumsum(a * m / n)
        A = A_all[first]
        S = _rev_cumsum(a * e)[first]
        ok = A > SPHERICAL_A_CUTOFF * A_all[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(ok, sigma2 * a * S / np.where(ok, A, 1.0), 0.0)
    else:
        contrib = a[:, :, None] * m[:, None, :] / n
        A_all = _rev_cumsum(contrib)
        A = A_all[first]
        S = _rev_cumsum(a * e[:, None])[first]
        scale = np.linalg.norm(A_all[0])
        ok = np.linalg.norm(A, axis=(1, 2)) > SPHERICAL_A_CUTOFF * scale
        if solver == "lstsq":
            corr = n * _tail_fitted(m, e, sigma2, first)
        elif solver == "pinv":
            symmetric = np.allclose(A, np.transpose(A, (0, 2, 1)), rtol=1e-12, atol=1e-14 * scale)
            Ainv = np.zeros_like(A)
            Ainv[ok] = np.linalg.pinv(A[ok], rcond=GENERAL_PINV_RCOND, hermitian=symmetric)
            corr = sigma2 * np.einsum("ik,ikl,il->i", a, Ainv, S)
        else:
            raise ValueError("solver must be 'lstsq' or 'pinv'")
        corr[~ok] = 0.0
    ok = np.logical_and.accumulate(ok)
    corr = np.where(ok, corr, 0.0) / n**1.5
    values = (np.cumsum(e) / np.sqrt(n))[last]
    transformed = values - np.cumsum(corr)[last]
    retained = in_range & ok
    dropped = int(np.sum(in_range & ~ok))
    return values, transformed, A, retained, dropped


def _plugins(mp: MarkedProcess, X, fit: FitResult, family, cfg, mode, heteroscedastic,
             a_matrix):
    """Compute (a, m, m_for_A, sigma2) along the sorted jump points."""
    family = get_family(family)
    beta = np.asarray(fit.beta, dtype=float)
    theta = np.asarray(fit.theta, dtype=float)
    kappa = 1.0 / np.linalg.norm(beta)
    u = mp.jump_points
    t = u / kappa
    e = mp.residuals
    Xs = np.asarray(X, dtype=float)[mp.order]
    need_r = mode == "general"
    if heteroscedastic or need_r:
        r_hat, s2_local = conditional_moments(u, Xs, e, cfg, need_r=need_r)
    else:
        r_hat, s2_local = None, None
    sigma2 = s2_local if heteroscedastic else np.full(u.shape, float(np.mean(e * e)))
    g1 = family.g1(t, theta)
    if mode == "spherical":
        m = g1 * t
        a = m / sigma2
        m_A = m
    else:
        m = np.hstack([g1[:, None] * r_hat, family.g2(t, theta)])
        a = m / sigma2[:, None]
        if a_matrix == "score":
            m_A = score(family, ParamVector(beta, theta), Xs)
        else:
            m_A = m
    return a, m, m_A, sigma2


def transform(mp: MarkedProcess, X, fit: FitResult, family, cfg: SmoothingConfig | None = None,
              mode: str = "spherical", heteroscedastic: bool = False,
              u0_quantile: float = 0.99, a_matrix: str = "smoothed") -> TransformedProcess:
    """Empirical martingale transform of a marked process.

    Parameters
    ----------
    mp : MarkedProcess
        Built from the fit's residuals and the projections to test along.
    X : (n, p) predictors in the original observation order.
    fit : FitResult
        Supplies ``beta_hat`` (through ``kappa = 1/||beta_hat||``) and ``theta_hat``.
    mode : {"spherical", "general"}
        Real-valued plug-ins ``g1(t) t`` or the full ``(g1(t) r_hat(u), g2(t))`` vector.
    heteroscedastic : bool
        Smooth ``sigma2`` along the index; otherwise it is the mean squared residual.
    a_matrix : {"smoothed", "score"}
        General mode only: build ``A`` from the smoothed derivative (default)
        or from the raw score ``g'(beta_hat, theta_hat, X_i)``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if a_matrix not in ("smoothed", "score"):
        raise ValueError("a_matrix must be 'smoothed' or 'score'")
    check_residuals(mp.residuals)
    a, m, m_A, sigma2 = _plugins(mp, X, fit, family, cfg, mode, heteroscedastic, a_matrix)
    values, tv, A, retained, dropped = transform_marks(
        mp.jump_points, mp.residuals, a, m_A, sigma2, u0_quantile,
        solver="pinv" if a_matrix == "score" else "lstsq",
    )
    return TransformedProcess(
        jump_points=mp.jump_points, values=values, transformed_values=tv,
        a_values=a, A_values=A, sigma2_values=sigma2, mode=mode,
        retained=retained, dropped=dropped, order=mp.order, residuals=mp.residuals,
    )


def annihilation_check(fit: FitResult, X, family, projections=None, c=None,
                       cfg: SmoothingConfig | None = None, mode: str = "spherical",
                       heteroscedastic: bool = False, u0_quantile: float = 0.99) -> float:
    """Largest absolute transformed value of a smoothed estimation drift.

    The drift is ``u -> (1/n) sum_i c'm(u_i) 1{u_i <= u}`` with ``m`` the
    plug-in derivative of the chosen ``mode``; ``c`` is a scalar in the
    spherical mode and a length ``p + d`` vector otherwise.  The result is
    zero up to rounding.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(fit.beta, dtype=float)
    if projections is None:
        projections = X @ beta / np.linalg.norm(beta)
    mp = marked_process(fit.residuals, projections)
    a, m, m_A, sigma2 = _plugins(mp, X, fit, family, cfg, mode, heteroscedastic, "smoothed")
    if c is None:
        c = 1.0 if mode == "spherical" else np.ones(m.shape[1])
    c = np.asarray(c, dtype=float)
    jumps = m * c if m.ndim == 1 else m @ c
    n = jumps.shape[0]
    # the transform scales marks by n^{-1/2}; drift jumps are c'm(u_i)/n
    marks = jumps / np.sqrt(n)
    _, tv, _, retained, _ = transform_marks(mp.jump_points, marks, a, m_A, sigma2, u0_quantile)
    return float(np.max(np.abs(tv[retained]))) if np.any(retained) else 0.0


def direction_grid(q: int, n_directions: int = 128) -> np.ndarray:
    """Deterministic directions on ``{alpha in R^q : ||alpha|| = 1, alpha_1 >= 0}``.

    The first row is always ``e_1``.  ``q = 2`` uses equally spaced angles,
    larger ``q`` an unscrambled Halton sequence pushed through the normal
    quantile function and folded onto the half sphere.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    e1 = np.zeros(q)
    e1[0] = 1.0
    if q == 1:
        return e1[None, :]
    if n_directions < 1:
        raise ValueError("n_directions must be >= 1")
    k = n_directions - 1
    if k == 0:
        return e1[None, :]
    if q == 2:
        ang = -np.pi / 2 + np.pi * (np.arange(k) + 0.5) / k
        rest = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        pts = qmc.Halton(d=q, scramble=False).random(k + 1)[1:]
        rest = norm.ppf(pts)
        rest /= np.linalg.norm(rest, axis=1, keepdims=True)
        rest[rest[:, 0] < 0] *= -1.0
    return np.vstack([e1, rest])


def _one_direction(alpha, P, X, fit, family, cfg, mode, heteroscedastic, u0_quantile, a_matrix):
    mp = marked_process(fit.residuals, P @ alpha, direction=alpha)
    return transform(mp, X, fit, family, cfg, mode, heteroscedastic, u0_quantile, a_matrix)


def sup_process(X, fit: FitResult, family, sdr: SdrResult, cfg: SmoothingConfig | None = None,
                n_directions: int = 128, mode: str = "spherical",
                heteroscedastic: bool = False, u0_quantile: float = 0.99,
                a_matrix: str = "smoothed", n_jobs: Optional[int] = None) -> SupProcess:
    """Supremum of ``|T V(alpha, .)|`` over directions ``alpha`` in the half sphere.

    With ``q_hat == 1`` only ``alpha = 1`` is used.  Results do not depend
    on ``n_jobs``: the per-direction transforms are combined by an
    elementwise maximum.
    """
    X = np.asarray(X, dtype=float)
    P = sdr.projections(X)
    dirs = direction_grid(sdr.q_hat, n_directions)
    args = (P, X, fit, family, cfg, mode, heteroscedastic, u0_quantile, a_matrix)
    if n_jobs and n_jobs != 1 and dirs.shape[0] > 1:
        from joblib import Parallel, delayed

        tps = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_one_direction)(al, *args) for al in dirs
        )
    else:
        tps = [_one_direction(al, *args) for al in dirs]
    T = np.abs(np.vstack([tp.transformed_values for tp in tps]))
    S2 = np.vstack([np.broadcast_to(tp.sigma2_values, T.shape[1]) for tp in tps])
    R = np.vstack([tp.retained for tp in tps])
    argmax = np.argmax(T, axis=0)
    cols = np.arange(T.shape[1])
    return SupProcess(
        values=T[argmax, cols],
        sigma2=S2[argmax, cols],
        retained=np.all(R, axis=0),
        argmax=argmax,
        directions=dirs,
        reference=tps[0],
        dropped=int(max(tp.dropped for tp in tps)),
        per_direction=tps,
    )
