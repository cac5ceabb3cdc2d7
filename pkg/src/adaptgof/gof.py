"""Cramer-von Mises functionals of the transformed process and the full
adaptive-to-model goodness-of-fit pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_residuals, check_sample_size, check_Xy
from .cvm import CvmDistribution, default_table
from .exceptions import DegenerateFitError, StageError
from .kernel import SmoothingConfig
from .model import get_family
from .nls import FitOptions, FitResult, fit as nls_fit
from .process import sup_process
from .sdr import SdrResult, reduce

__all__ = ["TestReport", "acm_statistic", "run_test", "AdaptiveModelCheck"]

DEFAULT_LEVELS = (0.10, 0.05, 0.01)


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    acm2: float
    cm2: float
    q_hat: int
    u0: float
    critical_values: dict
    p_value: float
    p_value_bound: str
    reject: dict
    statistic: str = "homoscedastic"
    mode: str = "spherical"
    family: str = "linear"
    n: int = 0
    p: int = 0
    beta_hat: list = field(default_factory=list)
    theta_hat: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def format_p_value(self) -> str:
        if self.p_value_bound == "<":
            return f"< {self.p_value:g}"
        return f"{self.p_value:.4f}"

    def to_text(self) -> str:
        lines = [
            "Adaptive-to-model martingale-transform test",
            f"  model            : {self.family} (n={self.n}, p={self.p})",
            f"  statistic        : ACM2 = {self.acm2:.6g} ({self.statistic}, mode={self.mode})",
            f"  CM2              : {self.cm2:.6g}",
            f"  q_hat            : {self.q_hat}",
            f"  u0               : {self.u0:.6g}",
            f"  p-value          : {self.format_p_value()}",
        ]
        for lv in sorted(self.critical_values, reverse=True):
            verdict = "reject" if self.reject[lv] else "do not reject"
            lines.append(
                f"  level {lv:<5g}      : critical value {self.critical_values[lv]:.4f} -> {verdict}"
            )
        for k, v in self.diagnostics.items():
            lines.append(f"  [diag] {k} = {v}")
        return "\n".join(lines)

    def to_keyvalue(self) -> str:
        """Line-oriented ``key=value`` rendering with a stable key set."""
        kv = [
            ("family", self.family), ("n", self.n), ("p", self.p),
            ("acm2", repr(float(self.acm2))), ("cm2", repr(float(self.cm2))),
            ("q_hat", self.q_hat), ("u0", repr(float(self.u0))),
            ("statistic", self.statistic), ("mode", self.mode),
            ("p_value", repr(float(self.p_value))), ("p_value_bound", self.p_value_bound),
        ]
        for lv in sorted(self.critical_values, reverse=True):
            kv.append((f"critical_value_{lv:g}", repr(float(self.critical_values[lv]))))
            kv.append((f"reject_{lv:g}", int(self.reject[lv])))
        kv.append(("beta_hat", " ".join(repr(float(b)) for b in self.beta_hat)))
        kv.append(("theta_hat", " ".join(repr(float(t)) for t in self.theta_hat)))
        for k, v in self.diagnostics.items():
            kv.append((f"diag_{k}", v))
        return "\n".join(f"{k}={v}" for k, v in kv)


def acm_statistic(values, residuals, retained, sigma2=None) -> tuple[float, float]:
    """Normalised Cramer-von Mises functional of a sup-process.

    Parameters
    ----------
    values : (n,) sup |T V| at the ranked jump points
    residuals : (n,) residuals in the same rank order
    retained : (n,) bool mask of points at or below ``u0``
    sigma2 : (n,), optional
        Local variance at each point.  When given, the heteroscedastic
        normalisation ``psi_hat(u0)^-2 (1/n) sum |T V|^2 sigma2`` is used; otherwise
        ``CM2 / (sigma_hat^2 F_n(u0)^2)``.

    Returns
    -------
    acm2, cm2
    """
    v = np.asarray(values, dtype=float)
    e = check_residuals(residuals)
    keep = np.asarray(retained, dtype=bool)
    if not np.any(keep):
        raise ValueError("no retained jump points below u0")
    n = v.shape[0]
    cm2 = float(np.sum(v[keep] ** 2) / n)
    if sigma2 is None:
        s2 = float(np.mean(e * e))
        frac = keep.sum() / n
        acm2 = cm2 / (s2 * frac * frac)
    else:
        s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), v.shape)
        psi = float(np.sum(e[keep] ** 2) / n)
        acm2 = float(np.sum(v[keep] ** 2 * s2[keep]) / n) / (psi * psi)
    return float(acm2), cm2


def _report_from(acm2, cm2, table: CvmDistribution, levels, **kw) -> TestReport:
    crit = {float(lv): table.critical_value(lv) for lv in levels}
    p, bound = table.p_value(acm2)
    reject = {lv: bool(acm2 > cv) for lv, cv in crit.items()}
    return TestReport(acm2=acm2, cm2=cm2, critical_values=crit, p_value=p,
                      p_value_bound=bound, reject=reject, **kw)


def run_test(X, y, family="linear", *, mode: str = "spherical",
             heteroscedastic: bool = False, n_directions: int = 128,
             u0_quantile: float = 0.99, bandwidth="auto", kernel: str = "gaussian",
             variance_floor_fraction: float = 0.05,
             levels: Sequence[float] = DEFAULT_LEVELS, ridge: Optional[float] = None,
             q: Optional[int] = None, a_matrix: str = "smoothed",
             max_iter: int = 200, tol: float = 1e-8, n_jobs: Optional[int] = None,
             table: Optional[CvmDistribution] = None,
             fit_result: Optional[FitResult] = None,
             sdr_result: Optional[SdrResult] = None) -> TestReport:
    """Fit the model, reduce dimension, transform and compare with the CvM table.

    Stage failures are re-raised as :class:`StageError` naming the stage;
    non-convergence of the fit is recorded in the report diagnostics.
    """
    fam = get_family(family)
    X, y = check_Xy(X, y)
    n, p = X.shape
    check_sample_size(n, p, fam.d)
    table = table or default_table()
    cfg = SmoothingConfig(bandwidth=bandwidth, kernel=kernel,
                          variance_floor_fraction=variance_floor_fraction)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - re-raised with attribution
            raise StageError(name, exc) from exc

    if fit_result is None:
        fit_result = stage("fit", nls_fit, X, y, fam,
                           FitOptions(max_iterations=max_iter, gradient_tolerance=tol))
    stage("fit", check_residuals, fit_result.residuals, y)
    if sdr_result is None:
        sdr_result = stage("sdr", reduce, X, y, align_to=fit_result.beta, c=ridge, q=q)
    sp = stage("process", sup_process, X, fit_result, fam, sdr_result, cfg,
               n_directions=n_directions, mode=mode, heteroscedastic=heteroscedastic,
               u0_quantile=u0_quantile, a_matrix=a_matrix, n_jobs=n_jobs)
    acm2, cm2 = stage("statistic", acm_statistic, sp.values, sp.residuals, sp.retained,
                      sp.sigma2 if heteroscedastic else None)
    diagnostics = {
        "converged": fit_result.converged,
        "iterations": fit_result.iterations,
        "gradient_norm": f"{fit_result.gradient_norm:.3g}",
        "rss": repr(fit_result.rss),
        "retained_points": int(sp.retained.sum()),
        "dropped_points": sp.dropped,
        "n_directions": int(sp.directions.shape[0]),
        "sigma_small_eigenvalues": fit_result.sigma_small_eigenvalues,
    }
    return _report_from(
        acm2, cm2, table, levels,
        q_hat=sdr_result.q_hat, u0=sp.reference.u0,
        statistic="heteroscedastic" if heteroscedastic else "homoscedastic",
        mode=mode, family=fam.name, n=n, p=p,
        beta_hat=[float(b) for b in fit_result.beta],
        theta_hat=[float(t) for t in fit_result.theta],
        diagnostics=diagnostics,
    )


class AdaptiveModelCheck(BaseEstimator):
    """Goodness-of-fit check of a single-index model, sklearn style.

    ``fit(X, y)`` runs the whole pipeline; the outcome is in ``report_``
    with shortcuts ``statistic_``, ``pvalue_`` and ``q_hat_``.

    Parameters mirror :func:`run_test`.
    """

    def __init__(self, family="linear", mode="spherical", heteroscedastic=False,
                 n_directions=128, u0_quantile=0.99, bandwidth="auto", kernel="gaussian",
                 variance_floor_fraction=0.05, levels=DEFAULT_LEVELS, ridge=None,
                 max_iter=200, tol=1e-8, n_jobs=None):
        self.family = family
        self.mode = mode
        self.heteroscedastic = heteroscedastic
        self.n_directions = n_directions
        self.u0_quantile = u0_quantile
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.variance_floor_fraction = variance_floor_fraction
        self.levels = levels
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X, y):
        params = self.get_params()
        family = params.pop("family")
        self.report_ = run_test(X, y, family, **params)
        self.statistic_ = self.report_.acm2
        self.pvalue_ = self.report_.p_value
        self.q_hat_ = self.report_.q_hat
        self.n_features_in_ = self.report_.p
        return self

    def reject(self, level: float = 0.05) -> bool:
        check_is_fitted(self, "report_")
        return bool(self.statistic_ > default_table().critical_value(level))
