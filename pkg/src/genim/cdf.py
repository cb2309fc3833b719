"""Estimators of ``F_theta``, the distribution function of ``T_{Y,theta}`` under ``P_theta``."""
from __future__ import annotations

import dataclasses
import enum
import warnings
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import special

from ._validation import DomainError, check_positive_int, check_seed
from .assoc import _CHUNK, rng_for

__all__ = [
    "CdfKind",
    "CdfEstimator",
    "CdfValue",
    "DegenerateWeightsWarning",
    "naive_cdf",
    "importance_cdf",
    "grid_hybrid_cdf",
    "asymptotic_cdf",
    "evaluate_cdf",
]

ESS_WARN_FRACTION = 0.02
_IMPORTANCE_TAG = 0x1A5
_NAIVE_TAG = 0x7E1


class DegenerateWeightsWarning(RuntimeWarning):
    """Importance weights have an effective sample size below 2% of M."""


class CdfKind(str, enum.Enum):
    EXACT = "exact"
    NAIVE = "naive"
    IMPORTANCE = "importance"
    GRID_HYBRID = "grid_hybrid"
    ASYMPTOTIC = "asymptotic"


class CdfValue(NamedTuple):
    """``F_theta(t)``, its left limit, and importance-sampling diagnostics."""

    F: float
    F_left: float
    ess: Optional[float] = None
    degenerate: bool = False


@dataclasses.dataclass(eq=False)
class CdfEstimator:
    """Configuration (and sample cache) for one way of computing ``F_theta``.

    Parameters
    ----------
    kind : CdfKind or str
    M : int
        Monte Carlo size.
    seed : int
    anchor : array-like, optional
        Parameter at which the importance sample is drawn.
    grid : array-like, optional
        ``(G, dim)`` anchor points for the grid hybrid.
    dof : int, optional
        Degrees of freedom of the asymptotic chi-square.
    exact : callable, optional
        ``exact(theta, t)`` returning ``F`` or ``(F_left, F)``; overrides the
        association's own exact CDF.
    defensive : array-like, optional
        ``(D, dim)`` extra proposal points.  The importance sample then comes
        from a mixture: ``1 - defensive_fraction`` of the draws at the anchor
        and the rest split evenly over these points, weighted by the mixture
        density (balance heuristic).  This bounds the weights far from the
        anchor while keeping the estimator unbiased.
    defensive_fraction : float
    """

    kind: CdfKind = CdfKind.NAIVE
    M: int = 10_000
    seed: int = 0
    anchor: Optional[np.ndarray] = None
    grid: Optional[np.ndarray] = None
    dof: Optional[int] = None
    exact: Optional[Callable] = None
    defensive: Optional[np.ndarray] = None
    defensive_fraction: float = 0.5
    _cache: dict = dataclasses.field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.kind = CdfKind(self.kind)
        self.M = check_positive_int(self.M, "M")
        self.seed = check_seed(self.seed)
        if self.anchor is not None:
            self.anchor = np.atleast_1d(np.asarray(self.anchor, dtype=float))
        if self.grid is not None:
            self.grid = np.asarray(self.grid, dtype=float)
            if self.grid.ndim == 1:
                self.grid = self.grid[:, None]
            if self.grid.shape[0] == 0:
                raise ValueError("grid must be non-empty")
        if self.defensive is not None:
            self.defensive = np.asarray(self.defensive, dtype=float)
            if self.defensive.ndim == 1:
                self.defensive = self.defensive[:, None]
            if not 0.0 < self.defensive_fraction < 1.0:
                raise ValueError("defensive_fraction must lie in (0, 1)")
            if self.M < 2 * self.defensive.shape[0]:
                raise ValueError("M is too small for the defensive mixture")
        if self.kind is CdfKind.NAIVE and self.M < 100:
            raise DomainError("naive Monte Carlo needs M >= 100")
        if self.kind is CdfKind.GRID_HYBRID and self.grid is None:
            raise ValueError("grid_hybrid needs a grid of anchor points")

    def with_anchor(self, anchor):
        return dataclasses.replace(self, anchor=anchor)

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=seed)

    def describe(self):
        out = {"kind": self.kind.value, "M": self.M, "seed": self.seed}
        if self.anchor is not None:
            out["anchor"] = self.anchor.tolist()
        if self.grid is not None:
            out["grid_size"] = int(self.grid.shape[0])
        if self.dof is not None:
            out["dof"] = self.dof
        if self.defensive is not None:
            out["defensive"] = self.defensive.tolist()
            out["defensive_fraction"] = self.defensive_fraction
        return out

    # ------------------------------------------------------------- caches
    def _store(self, key, value, limit=2048):
        if len(self._cache) >= limit:
            # drop per-theta entries first; anchor samples are expensive to redraw
            for k in [k for k in self._cache if k[0] != "anchor"]:
                del self._cache[k]
        self._cache[key] = value

    def _naive_draws(self, assoc, theta):
        theta_sim = assoc.simulation_point(theta)
        key = ("naive", assoc, theta_sim.tobytes())
        draws = self._cache.get(key)
        if draws is None:
            rng = rng_for(self.seed, _NAIVE_TAG, theta_sim)
            draws = np.empty(self.M)
            for start in range(0, self.M, _CHUNK):
                stop = min(self.M, start + _CHUNK)
                y = assoc.model.simulate(theta_sim, stop - start, rng)
                draws[start:stop] = assoc.statistic(y, theta_sim)
            draws.sort()
            self._store(key, draws)
        return draws

    def _anchor_sample(self, assoc, anchor):
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        key = ("anchor", assoc, anchor.tobytes())
        entry = self._cache.get(key)
        if entry is None:
            rng = rng_for(self.seed, _IMPORTANCE_TAG, anchor)
            if self.defensive is None:
                y = assoc.model.simulate(anchor, self.M, rng)
                log_q = assoc.model.loglik(y, anchor)
            else:
                points = np.vstack([anchor[None, :], self.defensive])
                D = self.defensive.shape[0]
                counts = np.full(D + 1, int(self.M * self.defensive_fraction) // D)
                counts[0] = self.M - counts[1:].sum()
                y = np.concatenate([assoc.model.simulate(p, c, rng) for p, c in zip(points, counts)])
                log_q = special.logsumexp(
                    np.stack([np.log(c / self.M) + assoc.model.loglik(y, p) for p, c in zip(points, counts)]), axis=0)
            entry = (y, assoc.precompute(y), log_q)
            self._store(key, entry)
        return entry

    def _weighted_draws(self, assoc, anchor, theta):
        key = ("weighted", assoc, np.asarray(anchor, float).tobytes(), theta.tobytes())
        entry = self._cache.get(key)
        if entry is None:
            y, top, ll_anchor = self._anchor_sample(assoc, anchor)
            T = assoc.statistic(y, theta, max_loglik=top)
            with np.errstate(over="ignore", invalid="ignore"):
                logw = assoc.model.loglik(y, theta) - ll_anchor
                w = np.exp(logw)
            w = np.where(np.isfinite(w), w, 0.0)
            s1, s2 = w.sum(), (w * w).sum()
            ess = float(s1 * s1 / s2) if s2 > 0 else 0.0
            order = np.argsort(T, kind="stable")
            T, w = T[order], w[order]
            entry = (T, np.concatenate([[0.0], np.cumsum(w)]), ess)
            self._store(key, entry)
        return entry


def _as_theta(theta):
    return np.atleast_1d(np.asarray(theta, dtype=float))


def _naive(assoc, theta, t, est):
    draws = est._naive_draws(assoc, theta)
    F = np.searchsorted(draws, t, side="right") / est.M
    F_left = np.searchsorted(draws, t, side="left") / est.M
    return CdfValue(float(F), float(F_left))


def _importance(assoc, theta, t, est, anchor):
    T, cumw, ess = est._weighted_draws(assoc, anchor, theta)
    hi = np.searchsorted(T, t, side="right")
    lo = np.searchsorted(T, t, side="left")
    F = float(np.clip(cumw[hi] / est.M, 0.0, 1.0))
    F_left = float(np.clip(cumw[lo] / est.M, 0.0, F))
    degenerate = ess < ESS_WARN_FRACTION * est.M
    if degenerate:
        warnings.warn(f"importance weights degenerate at theta={theta.tolist()}: ESS={ess:.1f} of M={est.M}",
                      DegenerateWeightsWarning, stacklevel=3)
    return CdfValue(F, F_left, ess, degenerate)


def naive_cdf(assoc, theta, t, est):
    """``(1/M) #{m : T_{Y^(m),theta} <= t}`` with fresh draws at ``theta``."""
    if est.kind is not CdfKind.NAIVE:
        raise ValueError("naive_cdf needs a NAIVE estimator")
    return _naive(assoc, _as_theta(theta), float(t), est).F


def importance_cdf(assoc, theta, t, est):
    """Importance-sampled ``F_theta(t)`` reusing one sample drawn at ``est.anchor``.

    Returns a :class:`CdfValue`; ``ess`` is the effective sample size and
    ``degenerate`` flags ``ess < 0.02 M``.  The estimate is clamped to [0, 1].
    """
    if est.kind is not CdfKind.IMPORTANCE:
        raise ValueError("importance_cdf needs an IMPORTANCE estimator")
    if est.anchor is None:
        raise ValueError("importance sampling needs an anchor parameter")
    return _importance(assoc, _as_theta(theta), float(t), est, est.anchor)


def nearest_anchor(grid, theta):
    """Index of the grid point closest to ``theta`` (smallest index on ties)."""
    d = np.sum((np.asarray(grid) - _as_theta(theta)) ** 2, axis=1)
    return int(np.argmin(d))


def grid_hybrid_cdf(assoc, theta, t, est):
    """Importance sampling from the nearest of several anchor points."""
    if est.kind is not CdfKind.GRID_HYBRID:
        raise ValueError("grid_hybrid_cdf needs a GRID_HYBRID estimator")
    theta = _as_theta(theta)
    anchor = est.grid[nearest_anchor(est.grid, theta)]
    return _importance(assoc, theta, float(t), est, anchor)


def asymptotic_cdf(t, dof):
    """Chi-square(``dof``) distribution function at ``t``."""
    dof = check_positive_int(dof, "dof")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    out = special.gammainc(0.5 * dof, 0.5 * t)
    return float(out) if out.ndim == 0 else out


def _exact(assoc, theta, t, est):
    fn = est.exact or assoc.exact_cdf
    if fn is None:
        raise ValueError("no exact CDF available for this association")
    res = fn(theta, t)
    if isinstance(res, tuple):
        F_left, F = res
    else:
        F_left = F = res
    return CdfValue(float(F), float(F_left))


def evaluate_cdf(assoc, theta, t, est):
    """Dispatch on ``est.kind``; returns a :class:`CdfValue`."""
    theta = _as_theta(theta)
    t = float(t)
    if est.kind is CdfKind.NAIVE:
        return _naive(assoc, theta, t, est)
    if est.kind is CdfKind.IMPORTANCE:
        if est.anchor is None:
            raise ValueError("importance sampling needs an anchor parameter")
        return _importance(assoc, theta, t, est, est.anchor)
    if est.kind is CdfKind.GRID_HYBRID:
        return _importance(assoc, theta, t, est, est.grid[nearest_anchor(est.grid, theta)])
    if est.kind is CdfKind.ASYMPTOTIC:
        dof = est.dof or (1 if assoc.kind.value == "profile_deviance" else assoc.model.dim)
        F = asymptotic_cdf(max(t, 0.0), dof)
        return CdfValue(F, F)
    return _exact(assoc, theta, t, est)
