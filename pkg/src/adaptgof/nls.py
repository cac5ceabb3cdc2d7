"""Least-squares estimation of single-index models.

The linear family is solved in closed form; every other family goes through
a damped Gauss-Newton (Levenberg-Marquardt) iteration on
``Q(gamma) = (1 / 2n) * sum_i (Y_i - g(beta'X_i, theta))**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_Xy, check_sample_size
from .exceptions import EstimationError
from .model import ModelFamily, ParamVector, evaluate, get_family, hessian_blocks, score

__all__ = ["FitOptions", "FitResult", "fit", "sigma_matrix", "SingleIndexRegressor"]


@dataclass
class FitOptions:
    init: Optional[ParamVector] = None
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.gradient_tolerance > 0 and self.damping_init > 0):
            raise ValueError("tolerances and damping must be positive")
        if self.damping_up <= 1 or self.damping_down <= 1:
            raise ValueError("damping factors must exceed 1")


@dataclass
class FitResult:
    gamma_hat: ParamVector
    residuals: np.ndarray
    rss: float
    sigma_hat: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    objective_history: list = field(default_factory=list)
    family: str = ""
    sigma_small_eigenvalues: int = 0

    @property
    def beta(self) -> np.ndarray:
        return self.gamma_hat.beta

    @property
    def theta(self) -> np.ndarray:
        return self.gamma_hat.theta


def _objective(r: np.ndarray) -> float:
    return 0.5 * float(r @ r) / r.shape[0]


def _linear_fit(X, y):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise EstimationError(
            f"singular normal equations: X has rank {rank} < p={X.shape[1]}"
        )
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def default_init(X: np.ndarray, y: np.ndarray, family: ModelFamily) -> ParamVector:
    """Starting values: normalised OLS direction, then a 1-D fit along it.

    For ``d > 0`` the link parameters come from regressing ``Y`` on the
    design ``g2(index)``; for ``d == 0`` only the scale of ``beta`` along the
    OLS direction is searched on a grid.
    """
    p = X.shape[1]
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    norm = np.linalg.norm(ols)
    direction = ols / norm if norm > 0 else np.eye(p)[0]
    t = X @ direction
    if family.d > 0:
        design = family.g2(t, np.zeros(family.d))
        theta, *_ = np.linalg.lstsq(design, y, rcond=None)
        return ParamVector(direction, theta)
    best_scale, best = 1.0, np.inf
    theta = np.zeros(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for s in np.linspace(-4.0, 4.0, 161):
            fitted = family.g(s * t, theta)
            if not np.all(np.isfinite(fitted)):
                continue
            rss = float(np.sum((y - fitted) ** 2))
            if rss < best:
                best, best_scale = rss, s
    return ParamVector(best_scale * direction, theta)


def sigma_matrix(X, y, family, fit_result: FitResult) -> np.ndarray:
    """Empirical ``(1/n) sum_i [s_i s_i' - e_i H_i]`` at the estimate.

    ``s_i`` is the score and ``H_i`` the Hessian of ``g(beta'X_i, theta)``;
    ``e_i`` are the fitted residuals.
    """
    family = get_family(family)
    X = np.asarray(X, dtype=float)
    S = score(family, fit_result.gamma_hat, X)
    H = hessian_blocks(family, fit_result.gamma_hat, X)
    e = np.asarray(fit_result.residuals, dtype=float)
    n = X.shape[0]
    sig = (S.T @ S - np.einsum("i,ijk->jk", e, H)) / n
    return 0.5 * (sig + sig.T)


def fit(X, y, family="linear", opts: Optional[FitOptions] = None) -> FitResult:
    """Least-squares estimate of ``(beta, theta)``.

    Non-convergence within ``opts.max_iterations`` is reported through
    ``FitResult.converged`` rather than raised.

    Raises
    ------
    EstimationError
        If the linear family's design is rank deficient, or ``n <= p + d``.
    """
    family = get_family(family)
    opts = opts or FitOptions()
    X, y = check_Xy(X, y)
    n, p = X.shape
    check_sample_size(n, p, family.d)

    history = []
    if family.linear:
        beta = _linear_fit(X, y)
        gamma = ParamVector(beta, np.zeros(0))
        r = y - X @ beta
        grad = -(X.T @ r) / n
        history.append(_objective(r))
        converged, iterations = True, 1
    else:
        gamma, r, grad, converged, iterations = _levenberg_marquardt(
            X, y, family, opts, history
        )
        if family.normalize is not None:
            gamma = ParamVector(*family.normalize(gamma.beta, gamma.theta))
            r = y - evaluate(family, gamma, X)

    res = FitResult(
        gamma_hat=gamma,
        residuals=r,
        rss=float(r @ r),
        sigma_hat=np.zeros((p + family.d, p + family.d)),
        converged=bool(converged),
        iterations=iterations,
        gradient_norm=float(np.linalg.norm(grad)),
        objective_history=history,
        family=family.name,
    )
    res.sigma_hat = sigma_matrix(X, y, family, res)
    ev = np.linalg.eigvalsh(res.sigma_hat)
    res.sigma_small_eigenvalues = int(np.sum(ev < 1e-10 * max(ev.max(), 0.0)))
    return res


def _levenberg_marquardt(X, y, family, opts: FitOptions, history: list):
    n, p = X.shape
    gamma = opts.init if opts.init is not None else default_init(X, y, family)
    gamma = np.concatenate(
        [np.asarray(gamma.beta, float), np.asarray(gamma.theta, float)]
    )
    if gamma.shape[0] != p + family.d:
        raise ValueError(
            f"initial value has length {gamma.shape[0]}, expected {p + family.d}"
        )

    def resid(gv):
        with np.errstate(over="ignore", invalid="ignore"):
            return y - evaluate(family, ParamVector.from_gamma(gv, p), X)

    r = resid(gamma)
    if not np.all(np.isfinite(r)):
        raise EstimationError("model is not finite at the initial value")
    f = _objective(r)
    history.append(f)
    lam = opts.damping_init
    J = score(family, ParamVector.from_gamma(gamma, p), X)
    grad = -(J.T @ r) / n
    it = 0
    # Iterate past the gradient tolerance down to machine precision so that
    # the estimate does not depend on the summation order of the data.
    while it < opts.max_iterations:
        it += 1
        JtJ = J.T @ J
        g_vec = J.T @ r
        diag = np.diag(JtJ).copy()
        diag[diag <= 0] = 1e-12 * max(1.0, diag.max())
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), g_vec)
            except np.linalg.LinAlgError:
                lam *= opts.damping_up
                continue
            cand = gamma + step
            r_new = resid(cand)
            f_new = _objective(r_new) if np.all(np.isfinite(r_new)) else np.inf
            if f_new < f:
                accepted = True
                break
            # near the optimum the objective is flat to rounding; fall back
            # on the gradient norm there
            if f_new <= f * (1.0 + 8 * np.finfo(float).eps):
                J_new = score(family, ParamVector.from_gamma(cand, p), X)
                if np.linalg.norm(J_new.T @ r_new) < np.linalg.norm(g_vec):
                    accepted = True
                    break
            lam *= opts.damping_up
        if not accepted:
            break
        small_step = np.linalg.norm(step) <= 1e-15 * (1.0 + np.linalg.norm(gamma))
        gamma, r, f = cand, r_new, f_new
        history.append(f)
        lam = max(lam / opts.damping_down, 1e-12)
        J = score(family, ParamVector.from_gamma(gamma, p), X)
        grad = -(J.T @ r) / n
        if small_step:
            break
    converged = np.linalg.norm(grad) <= opts.gradient_tolerance
    return ParamVector.from_gamma(gamma, p), r, grad, converged, it


class SingleIndexRegressor(RegressorMixin, BaseEstimator):
    """Least-squares single-index regressor ``Y ~ g(beta'X, theta)``.

    Parameters
    ----------
    family : str or ModelFamily
        ``"linear"``, ``"cubic"``, ``"exp"``, ``"quadpoly"`` or a registered family.
    max_iter : int
        Levenberg-Marquardt iteration cap.
    tol : float
        Gradient-norm tolerance for declaring convergence.
    init : ParamVector, optional
        Starting value; defaults to the OLS-direction initialiser.

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
    theta_ : ndarray of shape (d,)
    residuals_, rss_, sigma_hat_, converged_, n_iter_, fit_result_
    """

    def __init__(self, family="linear", max_iter=200, tol=1e-8, init=None):
        self.family = family
        self.max_iter = max_iter
        self.tol = tol
        self.init = init

    def fit(self, X, y):
        opts = FitOptions(init=self.init, max_iterations=self.max_iter,
                          gradient_tolerance=self.tol)
        res = fit(X, y, self.family, opts)
        self.fit_result_ = res
        self.coef_ = res.beta
        self.theta_ = res.theta
        self.residuals_ = res.residuals
        self.rss_ = res.rss
        self.sigma_hat_ = res.sigma_hat
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        self.n_features_in_ = res.beta.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        return evaluate(get_family(self.family), self.fit_result_.gamma_hat,
                        X if X.ndim == 2 else X[None, :])
