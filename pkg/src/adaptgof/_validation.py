"""Input validation shared by the estimators and the functional API."""

import numpy as np
from sklearn.utils import check_array, check_X_y

from .exceptions import DegenerateFitError, EstimationError


def check_Xy(X, y):
    X, y = check_X_y(X, y, dtype=np.float64, ensure_all_finite=True,
                     ensure_min_samples=2, y_numeric=True)
    return X, np.asarray(y, dtype=np.float64)


def check_X(X):
    return check_array(X, dtype=np.float64, ensure_all_finite=True)


def check_sample_size(n: int, p: int, d: int = 0) -> None:
    if n <= p + d:
        raise EstimationError(
            f"need n > p + d observations (n={n}, p={p}, d={d})"
        )


def check_residuals(residuals, reference=None) -> np.ndarray:
    """Reject an exact fit.

    With ``reference`` (typically the response) residuals below rounding
    level relative to its largest magnitude also count as zero.
    """
    e = np.asarray(residuals, dtype=np.float64)
    tol = 0.0
    if reference is not None:
        tol = 1e3 * np.finfo(float).eps * float(np.max(np.abs(reference)))
    if not np.any(np.abs(e) > tol):
        raise DegenerateFitError("residuals are identically zero (perfect fit)")
    return e
