"""Input validation helpers shared by the estimators and the engine."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def check_unit_interval(x, name="u"):
    """Return ``x`` as a float array after checking it lies in [0, 1]."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


def check_alpha(alpha, *, allow_zero=False):
    alpha = float(alpha)
    lo_ok = alpha >= 0.0 if allow_zero else alpha > 0.0
    if not (lo_ok and alpha < 1.0):
        raise DomainError(f"alpha must lie in {'[0, 1)' if allow_zero else '(0, 1)'}, got {alpha}")
    return alpha


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise TypeError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_sample(y, *, lower=None, upper=None, strict_lower=False, min_size=1):
    """Validate a 1-D iid sample; batches of samples are handled by the models."""
    y = check_array(np.asarray(y, dtype=float), ensure_2d=False, dtype=float)
    if y.ndim != 1:
        raise DomainError(f"expected a 1-D sample, got shape {y.shape}")
    if y.size < min_size:
        raise DomainError(f"need at least {min_size} observations, got {y.size}")
    if lower is not None:
        bad = y <= lower if strict_lower else y < lower
        if np.any(bad):
            op = ">" if strict_lower else ">="
            raise DomainError(f"all observations must be {op} {lower}")
    if upper is not None and np.any(y > upper):
        raise DomainError(f"all observations must be <= {upper}")
    return y


def check_theta(theta, model):
    """Coerce ``theta`` to a 1-D float vector inside ``model.bounds``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (model.dim,):
        raise DomainError(f"parameter must have shape ({model.dim},), got {theta.shape}")
    lo, hi = model.bounds
    if np.any(theta < lo) or np.any(theta > hi) or np.any(np.isnan(theta)):
        raise DomainError(f"parameter {theta.tolist()} outside domain {np.asarray(lo).tolist()}..{np.asarray(hi).tolist()}")
    return theta
