"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = ["check_finite_array", "check_scalar", "require", "ConfigurationError"]


class ConfigurationError(ValueError):
    """Raised when a configuration value violates its contract."""


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


def check_finite_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float ndarray and reject non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_scalar(x, name: str, minimum: float | None = None, strict: bool = False,
                 maximum: float | None = None, allow_inf: bool = False) -> float:
    v = float(x)
    if np.isnan(v) or (not allow_inf and np.isinf(v)):
        raise ConfigurationError(f"{name} must be a finite number, got {x!r}")
    if minimum is not None:
        if strict and not v > minimum:
            raise ConfigurationError(f"{name} must be > {minimum}, got {v}")
        if not strict and not v >= minimum:
            raise ConfigurationError(f"{name} must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigurationError(f"{name} must be <= {maximum}, got {v}")
    return v
