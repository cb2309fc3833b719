"""Predictive random sets for a Unif(0, 1) auxiliary variable.

Two nested families are supported:

``DEFAULT``
    the symmetric interval ``[0.5 - |U - 0.5|, 0.5 + |U - 0.5|]``;
``ONE_SIDED``
    the lower interval ``[0, U]``, natural when large values of the
    association statistic indicate poor fit.

Both have contention functions whose law under ``U ~ Unif(0, 1)`` is exactly
uniform, so both are valid.
"""
from __future__ import annotations

import enum

import numpy as np

from ._validation import DomainError, check_positive_int, check_seed, check_unit_interval

__all__ = [
    "RandomSetFamily",
    "contention",
    "point_plaus_continuous",
    "point_plaus_discrete",
    "validity_check",
]


class RandomSetFamily(str, enum.Enum):
    DEFAULT = "default"
    ONE_SIDED = "one_sided"

    @classmethod
    def coerce(cls, kind):
        if isinstance(kind, cls):
            return kind
        try:
            return cls(str(kind).lower())
        except ValueError:
            raise ValueError(f"unknown random set family {kind!r}; expected one of {[k.value for k in cls]}") from None


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def contention(kind, u):
    """Probability that the random set contains ``u``."""
    kind = RandomSetFamily.coerce(kind)
    u = check_unit_interval(u, "u")
    if kind is RandomSetFamily.DEFAULT:
        out = 1.0 - np.abs(2.0 * u - 1.0)
    else:
        out = 1.0 - u
    return _scalar_or_array(out)


def point_plaus_continuous(kind, F):
    """Point plausibility from ``F = F_theta(T_{y,theta})`` for continuous T."""
    kind = RandomSetFamily.coerce(kind)
    F = check_unit_interval(F, "F")
    if kind is RandomSetFamily.DEFAULT:
        out = 1.0 - np.abs(2.0 * F - 1.0)
    else:
        out = 1.0 - F
    return _scalar_or_array(out)


def point_plaus_discrete(kind, F_left, F):
    """Point plausibility for discrete T.

    ``F_left`` is the left limit ``F_theta(t-)`` and ``F`` is ``F_theta(t)``;
    the auxiliary variable is only known to lie in ``[F_left, F)``.
    """
    kind = RandomSetFamily.coerce(kind)
    F_left = check_unit_interval(F_left, "F_left")
    F = check_unit_interval(F, "F")
    if np.any(F_left > F):
        raise DomainError("F_left must not exceed F")
    if kind is RandomSetFamily.DEFAULT:
        out = 1.0 - np.maximum(2.0 * F_left - 1.0, 0.0) - np.maximum(1.0 - 2.0 * F, 0.0)
    else:
        out = 1.0 - F_left
    return _scalar_or_array(np.clip(out, 0.0, 1.0))


def validity_check(kind, n_draws, alphas, seed):
    """Empirical ``P{contention(U) <= alpha}`` for each alpha.

    Returns a list of ``(alpha, rate)`` pairs. A valid family has
    ``rate <= alpha`` up to Monte Carlo error.
    """
    n_draws = check_positive_int(n_draws, "n_draws", minimum=1000)
    seed = check_seed(seed)
    alphas = [float(a) for a in np.atleast_1d(alphas)]
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise DomainError(f"each alpha must lie in (0, 1), got {a}")
    u = np.random.default_rng(seed).random(n_draws)
    f = np.asarray(contention(kind, u))
    return [(a, float(np.mean(f <= a))) for a in alphas]
