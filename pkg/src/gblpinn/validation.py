"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .exceptions import ShapeMismatch


def check_points(X, name="X"):
    """Return X as a finite float array of shape (n, 2) with columns (x, t)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 2:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != 2:
        raise ShapeMismatch(f"{name} must have shape (n, 2), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_positive_time(X):
    X = check_points(X)
    if np.any(X[:, 1] <= 0.0):
        raise ValueError("self-similar solution needs t > 0")
    return X


def check_is_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit() first")


def check_case(case):
    from .cases import CaseConfig, get_case

    if isinstance(case, CaseConfig):
        return case
    if isinstance(case, str):
        return get_case(case)
    raise TypeError(f"expected a case name or CaseConfig, got {type(case).__name__}")
