"""Odds ratio of two independent binomials via the conditional (noncentral hypergeometric) law."""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy import optimize, special

from .._validation import DomainError
from ..prs import RandomSetFamily, point_plaus_discrete

__all__ = [
    "TwoByTwoTable",
    "nchg_logpmf",
    "nchg_cdf",
    "or_plaus",
    "sample_odds_ratio",
    "or_plateau",
    "or_curve",
]

PL_TAIL = 0.01


@dataclasses.dataclass(frozen=True)
class TwoByTwoTable:
    """Successes ``y0`` of ``n0`` (control) and ``y1`` of ``n1`` (treatment)."""

    y0: int
    y1: int
    n0: int
    n1: int

    def __post_init__(self):
        for name in ("y0", "y1", "n0", "n1"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise DomainError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n0 < 1 or self.n1 < 1:
            raise DomainError("trial counts n0, n1 must be positive")
        if not (0 <= self.y0 <= self.n0 and 0 <= self.y1 <= self.n1):
            raise DomainError("need 0 <= y0 <= n0 and 0 <= y1 <= n1")

    @property
    def t(self):
        return self.y0 + self.y1

    @property
    def support(self):
        return max(self.t - self.n0, 0), min(self.n1, self.t)


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def nchg_logpmf(t, n0, n1, psi):
    """Support ``(lo..hi)`` and normalized log-probabilities for each ``psi``.

    Returns ``(support, logp)`` with ``logp`` of shape ``psi.shape + (len(support),)``.
    """
    lo, hi = max(t - n0, 0), min(n1, t)
    ys = np.arange(lo, hi + 1)
    psi = np.asarray(psi, dtype=float)
    if np.any(~(psi > 0)):
        raise DomainError("psi must be positive")
    base = _log_binom(n1, ys) + _log_binom(n0, t - ys)
    with np.errstate(divide="ignore"):
        logw = base + np.multiply.outer(np.log(psi), ys)
    logw = logw - special.logsumexp(logw, axis=-1, keepdims=True)
    return ys, logw


def nchg_cdf(t, n0, n1, psi, y1):
    """``P(Y1 <= y1 | Y0 + Y1 = t)`` under odds ratio ``psi``.

    Values of ``y1`` below the support give 0 and above it give 1.  Terms are
    normalized in log space, which keeps the result stable for extreme
    ``psi`` and large tables.
    """
    ys, logp = nchg_logpmf(int(t), int(n0), int(n1), psi)
    y1 = int(y1)
    if y1 < ys[0]:
        return np.zeros(np.shape(psi)) if np.ndim(psi) else 0.0
    if y1 >= ys[-1]:
        return np.ones(np.shape(psi)) if np.ndim(psi) else 1.0
    k = y1 - ys[0] + 1
    lower = special.logsumexp(logp[..., :k], axis=-1)
    upper = special.logsumexp(logp[..., k:], axis=-1)
    # pick the complement with the better relative precision
    out = np.where(lower < upper, np.exp(lower), -np.expm1(upper))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def or_plaus(table, psi):
    """Plausibility of odds ratio ``psi`` (scalar or array) with the default random set."""
    psi = np.asarray(psi, dtype=float)
    F = nchg_cdf(table.t, table.n0, table.n1, psi, table.y1)
    F_left = nchg_cdf(table.t, table.n0, table.n1, psi, table.y1 - 1)
    return point_plaus_discrete(RandomSetFamily.DEFAULT, F_left, F)


def sample_odds_ratio(table):
    """``(y1 / (n1 - y1)) / (y0 / (n0 - y0))``; ``inf`` or ``nan`` for zero cells."""
    num = table.y1 * (table.n0 - table.y0)
    den = table.y0 * (table.n1 - table.y1)
    if den == 0:
        return float("nan") if num == 0 else float("inf")
    return num / den


def _half_root(table, y, bracket=60.0):
    """``log psi`` solving ``F(y; psi) = 1/2`` (F decreases in psi).

    Below the support ``F`` is identically 0 and at or above its top it is
    identically 1; the returned infinities make the plateau conditions
    ``F(y1 - 1) <= 1/2`` and ``F(y1) >= 1/2`` hold for every ``psi``.
    """
    lo, hi = table.support
    if y < lo:
        return -np.inf
    if y >= hi:
        return np.inf
    g = lambda lp: nchg_cdf(table.t, table.n0, table.n1, np.exp(lp), y) - 0.5
    a, b = -bracket, bracket
    while g(a) < 0:
        a *= 2
    while g(b) > 0:
        b *= 2
    return optimize.brentq(g, a, b, xtol=1e-13, rtol=1e-14)


def or_plateau(table):
    """Exact ``log psi`` interval on which the plausibility equals 1.

    ``pl = 1`` exactly when ``F(y1 - 1) <= 1/2 <= F(y1)``; both are
    decreasing in ``psi``, so the plateau is bounded by the two half-roots.
    Infinite ends occur when ``y1`` sits at an edge of the support.
    """
    lo_end = _half_root(table, table.y1 - 1)
    hi_end = _half_root(table, table.y1)
    return float(lo_end), float(hi_end)


def or_curve(table, log_psi_range=(-6.0, 6.0), n_points=481, extend=True, max_extend=8):
    """Plausibility curve on a uniform log-psi grid.

    With ``extend=True`` the range grows by its own width on any side whose
    end value is still ``>= 0.01``, keeping the grid spacing, up to
    ``max_extend`` times.  Returns ``(log_psi, pl)``.
    """
    a, b = map(float, log_psi_range)
    if not b > a or n_points < 3:
        raise ValueError("need an increasing log-psi range and at least 3 points")
    h = (b - a) / (n_points - 1)
    for _ in range(max_extend + 1):
        grid = a + h * np.arange(int(round((b - a) / h)) + 1)
        pl = np.atleast_1d(or_plaus(table, np.exp(grid)))
        grow_left = extend and pl[0] >= PL_TAIL and table.y1 > table.support[0]
        grow_right = extend and pl[-1] >= PL_TAIL and table.y1 < table.support[1]
        if not (grow_left or grow_right):
            break
        width = b - a
        if grow_left:
            a -= width / 2
        if grow_right:
            b += width / 2
    return grid, pl
