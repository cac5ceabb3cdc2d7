"""Competitor lack-of-fit statistics: Stute-Zhu, Zheng, Guo-Wang-Zhu and
Bierens' integrated conditional moment test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from ._validation import check_residuals, check_X, check_Xy
from .cvm import CvmDistribution, default_table
from .exceptions import DegenerateFitError
from .gof import DEFAULT_LEVELS, acm_statistic
from .kernel import SmoothingConfig, kernel_function
from .model import evaluate, get_family
from .nls import FitOptions, FitResult, fit as nls_fit
from .process import sup_process
from .sdr import SdrResult

__all__ = [
    "BaselineReport",
    "stute_zhu",
    "zheng",
    "gwz",
    "icm",
    "zheng_bandwidth",
    "gwz_bandwidth",
    "BASELINES",
]


@dataclass
class BaselineReport:
    """Outcome of one competitor test.

    ``method`` is one of ``"cvm-table"``, ``"asymptotic-normal"`` or
    ``"wild-bootstrap"``.
    """

    name: str
    statistic: float
    method: str
    critical_values: dict
    p_value: float
    reject: dict
    diagnostics: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{self.name} test ({self.method})",
                 f"  statistic : {self.statistic:.6g}",
                 f"  p-value   : {self.p_value:.4f}"]
        for lv in sorted(self.critical_values, reverse=True):
            verdict = "reject" if self.reject[lv] else "do not reject"
            lines.append(f"  level {lv:<5g}: critical value {self.critical_values[lv]:.4f} -> {verdict}")
        lines += [f"  [diag] {k} = {v}" for k, v in self.diagnostics.items()]
        return "\n".join(lines)

    def to_keyvalue(self) -> str:
        kv = [("test", self.name), ("statistic", repr(float(self.statistic))),
              ("method", self.method), ("p_value", repr(float(self.p_value)))]
        for lv in sorted(self.critical_values, reverse=True):
            kv.append((f"critical_value_{lv:g}", repr(float(self.critical_values[lv]))))
            kv.append((f"reject_{lv:g}", int(self.reject[lv])))
        kv += [(f"diag_{k}", v) for k, v in self.diagnostics.items()]
        return "\n".join(f"{k}={v}" for k, v in kv)


@dataclass
class _FixedProjection:
    """Stand-in for an SDR result with a fixed projection matrix."""

    B_hat: np.ndarray
    q_hat: int = 1

    def projections(self, X):
        return np.asarray(X, dtype=float) @ self.B_hat


def stute_zhu(X, y, family, fit: Optional[FitResult] = None,
              cfg: Optional[SmoothingConfig] = None, *, mode: str = "spherical",
              heteroscedastic: bool = False, u0_quantile: float = 0.99,
              levels: Sequence[float] = DEFAULT_LEVELS,
              table: Optional[CvmDistribution] = None) -> BaselineReport:
    """Transformed residual process along the fitted index ``beta_hat'X`` only.

    Uses the same transform and normalised CvM functional as the adaptive
    test, so it coincides with that test whenever ``q_hat = 1`` and the
    estimated direction is proportional to ``beta_hat``.
    """
    fam = get_family(family)
    X, y = check_Xy(X, y)
    if fit is None:
        fit = nls_fit(X, y, fam)
    beta = np.asarray(fit.beta, dtype=float)
    proj = _FixedProjection((beta / np.linalg.norm(beta))[:, None])
    sp = sup_process(X, fit, fam, proj, cfg, n_directions=1, mode=mode,
                     heteroscedastic=heteroscedastic, u0_quantile=u0_quantile)
    stat, cm2 = acm_statistic(sp.values, sp.residuals, sp.retained,
                              sp.sigma2 if heteroscedastic else None)
    table = table or default_table()
    crit = {float(lv): table.critical_value(lv) for lv in levels}
    p, bound = table.p_value(stat)
    return BaselineReport(
        name="sz", statistic=stat, method="cvm-table", critical_values=crit,
        p_value=p, reject={lv: bool(stat > c) for lv, c in crit.items()},
        diagnostics={"cm2": cm2, "p_value_bound": bound,
                     "retained_points": int(sp.retained.sum()), "dropped_points": sp.dropped},
    )


def _product_kernel(D, h: float, kernel: str):
    """``prod_k K(D[..., k] / h)`` for a stack of coordinate differences."""
    K = kernel_function(kernel)
    return np.prod(K(D / h), axis=-1)


def _pairwise_kernel(Z, h, kernel, chunk: int = 256):
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    out = np.empty((n, n))
    for s in range(0, n, chunk):
        out[s:s + chunk] = _product_kernel(Z[s:s + chunk, None, :] - Z[None, :, :], h, kernel)
    np.fill_diagonal(out, 0.0)
    return out


def _smoothing_ratio(W, e):
    """Return ``sum_{i!=j} W_ij e_i e_j`` and ``sqrt(2 sum_{i!=j} W_ij^2 e_i^2 e_j^2)``."""
    num = float(e @ W @ e)
    e2 = e * e
    den2 = 2.0 * float(e2 @ (W * W) @ e2)
    if not den2 > 0:
        raise DegenerateFitError("zero studentising denominator")
    return num, np.sqrt(den2)


def _normal_report(name, stat, levels, **diag) -> BaselineReport:
    crit = {float(lv): float(norm.ppf(1.0 - lv)) for lv in levels}
    return BaselineReport(
        name=name, statistic=float(stat), method="asymptotic-normal",
        critical_values=crit, p_value=float(norm.sf(stat)),
        reject={lv: bool(stat > c) for lv, c in crit.items()}, diagnostics=diag,
    )


def zheng_bandwidth(n: int, p: int) -> float:
    return 1.5 * n ** (-1.0 / (4 + p))


def gwz_bandwidth(n: int, q: int, printed: bool = False) -> float:
    """``1.5 n^(-1/(4+q))``; ``printed=True`` gives the positive-exponent variant."""
    exponent = 1.0 / (4 + q)
    return 1.5 * n ** (exponent if printed else -exponent)


def zheng(X, residuals, h: Optional[float] = None, kernel: str = "quartic",
          levels: Sequence[float] = DEFAULT_LEVELS) -> BaselineReport:
    """Studentised kernel U-statistic with a product kernel over all predictors."""
    X = check_X(X)
    e = check_residuals(residuals)
    n, p = X.shape
    h = zheng_bandwidth(n, p) if h is None else float(h)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    num, den = _smoothing_ratio(_pairwise_kernel(X, h, kernel), e)
    return _normal_report("zheng", num / den, levels, bandwidth=h)


def gwz(X, residuals, sdr: SdrResult, h: Optional[float] = None, kernel: str = "quartic",
        levels: Sequence[float] = DEFAULT_LEVELS, printed_bandwidth: bool = False) -> BaselineReport:
    """Kernel U-statistic on the reduced predictors ``B_hat' X``.

    The statistic is ``h^(1/2) sum e_i e_j h^-q K / (2 sum e_i^2 e_j^2 h^-q K^2)^(1/2)``
    with a ``q_hat``-dimensional product kernel.
    """
    X = check_X(X)
    e = check_residuals(residuals)
    n = X.shape[0]
    q = int(sdr.q_hat)
    h = gwz_bandwidth(n, q, printed_bandwidth) if h is None else float(h)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    W = _pairwise_kernel(sdr.projections(X), h, kernel) / h**q
    num, den = _smoothing_ratio(W, e)
    return _normal_report("gwz", np.sqrt(h) * num / den, levels, bandwidth=h, q_hat=q)


def icm_matrix(X, residuals, include_diagonal: bool = True) -> np.ndarray:
    """``e_i e_j exp(-|X_i - X_j| / 2)`` for all pairs."""
    X = check_X(X)
    e = np.asarray(residuals, dtype=float)
    W = np.exp(-0.5 * cdist(X, X))
    if not include_diagonal:
        np.fill_diagonal(W, 0.0)
    return W * np.outer(e, e)


def icm(X, residuals, *, n_bootstrap: int = 500, seed: int = 0,
        include_diagonal: bool = True, levels: Sequence[float] = DEFAULT_LEVELS,
        refit: bool = False, y=None, family=None,
        fit: Optional[FitResult] = None) -> BaselineReport:
    """Integrated conditional moment statistic with wild-bootstrap calibration.

    Bootstrap residuals are ``e_i w_i`` with Rademacher ``w``.  By default
    the double sum is recomputed directly on them; with ``refit=True`` the
    model is re-estimated on ``Y* = fitted + e w`` (``y``, ``family`` and
    ``fit`` are then required).
    """
    X = check_X(X)
    e = np.asarray(residuals, dtype=float)
    n = X.shape[0]
    stat = float(icm_matrix(X, e, include_diagonal).sum() / n)
    if n_bootstrap < 1:
        raise ValueError("n_bootstrap must be >= 1")
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n_bootstrap, n))
    if not refit:
        M = icm_matrix(X, e, include_diagonal)
        boot = np.einsum("bi,ij,bj->b", signs, M, signs) / n
    else:
        if y is None or family is None or fit is None:
            raise ValueError("refit=True needs y, family and fit")
        fam = get_family(family)
        fitted = evaluate(fam, fit.gamma_hat, X)
        boot = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            y_star = fitted + e * signs[b]
            r_star = nls_fit(X, y_star, fam, FitOptions(init=fit.gamma_hat)).residuals
            boot[b] = icm_matrix(X, r_star, include_diagonal).sum() / n
    crit = {float(lv): float(np.quantile(boot, 1.0 - lv)) for lv in levels}
    p = float((1 + np.sum(boot >= stat)) / (n_bootstrap + 1))
    return BaselineReport(
        name="icm", statistic=stat, method="wild-bootstrap", critical_values=crit,
        p_value=p, reject={lv: bool(stat > c) for lv, c in crit.items()},
        diagnostics={"n_bootstrap": n_bootstrap, "seed": seed, "refit": refit,
                     "include_diagonal": include_diagonal},
    )


BASELINES = ("sz", "zheng", "gwz", "icm")
