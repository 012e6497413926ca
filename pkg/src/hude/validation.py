"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np

__all__ = [
    "NotFittedError",
    "check_time_series",
    "check_unit_interval",
    "check_is_fitted",
]


class NotFittedError(Exception):
    """The estimator must be fitted before this call."""


def check_time_series(t, x):
    """Validate a 1-D time series: finite values on strictly increasing times."""
    t = np.asarray(t, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if t.size != x.size:
        raise ValueError("t and x must have the same length")
    if t.size < 2:
        raise ValueError("a time series needs at least two points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if not np.all(np.isfinite(t)) or not np.all(np.isfinite(x)):
        raise ValueError("times and values must be finite")
    return t, x


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return value


def check_is_fitted(estimator, attributes=("theta_",)):
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
