"""Sampling models and generalized associations ``(y, theta) -> T_{y,theta}``.

Every statistic here is vectorized over leading axes of ``y``: a single
sample has shape ``(n,)`` and a batch of Monte Carlo samples has shape
``(M, n)``.  Large values of each built-in statistic indicate poor fit.
"""
from __future__ import annotations

import abc
import copy
import dataclasses
import enum
from typing import Callable, Optional

import numpy as np

from ._optimize import maximize_nelder_mead, maximize_scalar
from ._validation import DomainError, check_positive_int, check_seed

__all__ = [
    "Model",
    "StatisticKind",
    "Association",
    "deviance",
    "profile_deviance",
    "score_stat",
    "sample_T",
    "rng_for",
]

FD_STEP = 1e-5
_CHUNK = 8192


def rng_for(seed, *keys):
    """Generator keyed by ``seed`` and extra integer or float-array keys.

    Float keys are hashed through their IEEE bit pattern so that streams for
    different parameter values are distinct and reproducible.
    """
    entropy = [int(seed)]
    for k in keys:
        arr = np.atleast_1d(np.asarray(k))
        if arr.dtype.kind == "f":
            entropy.extend(int(w) for w in np.ascontiguousarray(arr, dtype=np.float64).view(np.uint32))
        else:
            entropy.extend(int(v) for v in arr.astype(np.int64) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))


class Model(abc.ABC):
    """A parametric sampling model for an iid sample of size ``n``.

    Subclasses provide ``loglik``, ``simulate`` and usually a closed-form or
    fast ``mle``.  Optional hooks (``profile_mle``, ``score``,
    ``fisher_info``) fall back to generic numerical versions.
    """

    dim: int = 1
    param_names: tuple = ("theta",)

    def __init__(self, n):
        self.n = check_positive_int(n, "n")

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"

    @property
    @abc.abstractmethod
    def bounds(self):
        """``(lower, upper)`` arrays of the natural parameter domain."""

    @abc.abstractmethod
    def loglik(self, y, theta):
        """Log-likelihood of each sample in ``y`` (shape ``(..., n)``) at ``theta``."""

    @abc.abstractmethod
    def simulate(self, theta, size, rng):
        """Draw ``size`` samples, returned with shape ``(size, n)``."""

    def check_data(self, y):
        return np.asarray(y, dtype=float)

    def resized(self, n):
        clone = copy.copy(self)
        clone.n = check_positive_int(n, "n")
        return clone

    def start(self, y):
        """Starting point for numerical maximization of one sample."""
        lo, hi = self.bounds
        lo = np.where(np.isfinite(lo), lo, -1.0)
        hi = np.where(np.isfinite(hi), hi, lo + 2.0)
        return 0.5 * (lo + hi)

    def canonical(self, theta):
        """Parameter at which ``F_theta`` may be simulated instead of ``theta``.

        Models whose statistics have distributions invariant under part of
        the parameter (e.g. a scale) return a representative point, letting
        Monte Carlo estimates be shared.  Default: ``theta`` itself.
        """
        return np.asarray(theta, dtype=float)

    def in_interior(self, theta):
        lo, hi = self.bounds
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta > lo) and np.all(theta < hi))

    # ------------------------------------------------------------------ MLE
    def _mle_one(self, y):
        lo, hi = self.bounds
        if self.dim == 1:
            x, _ = maximize_scalar(lambda t: float(self.loglik(y, np.array([t]))), float(lo[0]), float(hi[0]))
            return np.array([x])
        x, _ = maximize_nelder_mead(lambda t: float(self.loglik(y, t)) if np.all((t > lo) & (t < hi)) else -np.inf,
                                    self.start(y))
        return x

    def mle(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._mle_one(y)
        flat = y.reshape(-1, y.shape[-1])
        return np.stack([self._mle_one(row) for row in flat]).reshape(y.shape[:-1] + (self.dim,))

    def max_loglik(self, y):
        """``sup_theta logL(y, theta)`` for each sample."""
        y = np.asarray(y, dtype=float)
        th = self.mle(y)
        if y.ndim == 1:
            return self.loglik(y, th)
        flat_y = y.reshape(-1, y.shape[-1])
        flat_t = th.reshape(-1, self.dim)
        return np.array([self.loglik(r, t) for r, t in zip(flat_y, flat_t)]).reshape(y.shape[:-1])

    def profile_mle(self, y, psi, interest=0):
        """Full parameter maximizing the likelihood with coordinate ``interest`` fixed at ``psi``."""
        y = np.asarray(y, dtype=float)
        if y.ndim > 1:
            flat = y.reshape(-1, y.shape[-1])
            return np.stack([self.profile_mle(r, psi, interest) for r in flat]).reshape(y.shape[:-1] + (self.dim,))
        lo, hi = self.bounds
        free = [i for i in range(self.dim) if i != interest]

        def full(lam):
            th = np.empty(self.dim)
            th[interest] = psi
            th[free] = lam
            return th

        if len(free) == 1:
            i = free[0]
            a = lo[i] if np.isfinite(lo[i]) else -1e6
            b = hi[i] if np.isfinite(hi[i]) else 1e6
            x, _ = maximize_scalar(lambda l: float(self.loglik(y, full([l]))), float(a), float(b))
            return full([x])
        x, _ = maximize_nelder_mead(lambda l: float(self.loglik(y, full(l))), self.start(y)[free])
        return full(x)

    # ---------------------------------------------------- derivatives
    def score(self, y, theta):
        """Gradient of the log-likelihood in ``theta`` (central differences)."""
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape[:-1] + (self.dim,))
        for i in range(self.dim):
            h = FD_STEP * max(abs(theta[i]), 1.0)
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            out[..., i] = (self.loglik(y, tp) - self.loglik(y, tm)) / (2.0 * h)
        return out

    def fisher_info(self, theta, y=None):
        """Information matrix at ``theta``.

        The fallback is the observed information ``-d2 logL`` at the sample
        ``y`` by central differences.
        """
        if y is None:
            raise NotImplementedError(f"{type(self).__name__} has no analytic Fisher information; pass y")
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.dim
        H = np.empty((d, d))
        hs = np.array([FD_STEP * max(abs(t), 1.0) for t in theta]) * 10.0
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for si, sj, sgn in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
                    t = theta.copy()
                    t[i] += si * hs[i]
                    t[j] += sj * hs[j]
                    acc += sgn * self.loglik(y, t)
                H[i, j] = acc / (4.0 * hs[i] * hs[j])
        return -0.5 * (H + H.T)


class StatisticKind(str, enum.Enum):
    DEVIANCE = "deviance"
    PROFILE_DEVIANCE = "profile_deviance"
    SCORE = "score"
    CUSTOM = "custom"


def deviance(model, y, theta):
    """``-2 [logL(y, theta) - sup logL(y, .)]``, vectorized over samples."""
    theta = np.asarray(theta, dtype=float)
    val = -2.0 * (model.loglik(y, theta) - model.max_loglik(y))
    return np.maximum(val, 0.0)


def profile_deviance(model, y, psi, interest=0):
    """Profile likelihood ratio statistic for coordinate ``interest`` at ``psi``."""
    y = np.asarray(y, dtype=float)
    th = model.profile_mle(y, psi, interest)
    if y.ndim == 1:
        prof = model.loglik(y, th)
    else:
        flat_y = y.reshape(-1, y.shape[-1])
        flat_t = th.reshape(-1, model.dim)
        prof = np.array([model.loglik(r, t) for r, t in zip(flat_y, flat_t)]).reshape(y.shape[:-1])
    return np.maximum(-2.0 * (prof - model.max_loglik(y)), 0.0)


def score_stat(model, y, theta0):
    """Rao score statistic ``S' I^{-1} S`` at ``theta0``."""
    theta0 = np.asarray(theta0, dtype=float)
    S = model.score(y, theta0)
    try:
        info = model.fisher_info(theta0)
    except NotImplementedError:
        info = model.fisher_info(theta0, y=np.asarray(y) if np.ndim(y) == 1 else None)
    info = np.atleast_2d(info)
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 1e-12 * max(abs(eig[-1]), 1.0):
        raise np.linalg.LinAlgError(f"information matrix is singular at theta={theta0.tolist()}")
    sol = np.linalg.solve(info, np.moveaxis(S, -1, 0).reshape(model.dim, -1))
    q = np.einsum("ij,ij->j", np.moveaxis(S, -1, 0).reshape(model.dim, -1), sol)
    return np.maximum(q.reshape(np.shape(S)[:-1]), 0.0)


@dataclasses.dataclass(frozen=True, eq=False)
class Association:
    """A generalized association built on ``model``.

    Parameters
    ----------
    model : Model
    kind : StatisticKind or str
        ``deviance``, ``profile_deviance``, ``score`` or ``custom``.
    interest : int, optional
        Coordinate of the interest parameter for ``profile_deviance``.
    large_is_poor : bool
        Whether large values of T indicate poor fit.
    discrete : bool
        Whether T has a discrete distribution (left limits then matter).
    func : callable, optional
        ``func(y, theta) -> T`` for ``custom`` associations.
    exact_cdf : callable, optional
        ``exact_cdf(theta, t) -> F_theta(t)`` when the law of T is known.
    """

    model: Model
    kind: StatisticKind = StatisticKind.DEVIANCE
    interest: Optional[int] = None
    large_is_poor: bool = True
    discrete: bool = False
    func: Optional[Callable] = None
    exact_cdf: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StatisticKind(self.kind))
        if self.kind is StatisticKind.PROFILE_DEVIANCE:
            if self.interest is None or not 0 <= self.interest < self.model.dim:
                raise ValueError("profile_deviance needs a valid interest coordinate")
        if self.kind is StatisticKind.CUSTOM and self.func is None:
            raise ValueError("custom associations need func(y, theta)")

    def statistic(self, y, theta, max_loglik=None):
        """Evaluate ``T_{y,theta}``.

        ``max_loglik`` may carry precomputed ``sup logL(y, .)`` values for
        the deviance kinds; they do not depend on ``theta``.
        """
        theta = np.asarray(theta, dtype=float)
        model = self.model
        if self.kind is StatisticKind.DEVIANCE:
            top = model.max_loglik(y) if max_loglik is None else max_loglik
            return np.maximum(-2.0 * (model.loglik(y, theta) - top), 0.0)
        if self.kind is StatisticKind.PROFILE_DEVIANCE:
            if max_loglik is None:
                return profile_deviance(model, y, theta[self.interest], self.interest)
            y = np.asarray(y, dtype=float)
            th = model.profile_mle(y, theta[self.interest], self.interest)
            if y.ndim == 1:
                prof = model.loglik(y, th)
            else:
                flat_y = y.reshape(-1, y.shape[-1])
                prof = np.array([model.loglik(r, t) for r, t in zip(flat_y, th.reshape(-1, model.dim))])
                prof = prof.reshape(y.shape[:-1])
            return np.maximum(-2.0 * (prof - max_loglik), 0.0)
        if self.kind is StatisticKind.SCORE:
            return score_stat(model, y, theta)
        return np.asarray(self.func(y, theta), dtype=float)

    def precompute(self, y):
        """Theta-free part of the statistic for a batch of samples, or None."""
        if self.kind in (StatisticKind.DEVIANCE, StatisticKind.PROFILE_DEVIANCE):
            return self.model.max_loglik(y)
        return None

    def simulation_point(self, theta):
        """Parameter at which samples of ``T_{Y,theta}`` are drawn."""
        if self.kind is StatisticKind.CUSTOM:
            return np.asarray(theta, dtype=float)
        return self.model.canonical(theta)

    def statistic_for_simulation(self, y, theta):
        """T evaluated on samples drawn at ``simulation_point(theta)``."""
        return self.statistic(y, self.simulation_point(theta))


def sample_T(assoc, theta, M, seed):
    """``M`` iid draws of ``T_{Y,theta}`` with ``Y ~ P_theta``; deterministic in ``seed``."""
    M = check_positive_int(M, "M")
    seed = check_seed(seed)
    return _draw_T(assoc, theta, M, np.random.default_rng(seed))


def _draw_T(assoc, theta, M, rng):
    theta_sim = assoc.simulation_point(theta)
    out = np.empty(M)
    for start in range(0, M, _CHUNK):
        stop = min(M, start + _CHUNK)
        y = assoc.model.simulate(theta_sim, stop - start, rng)
        out[start:stop] = assoc.statistic(y, theta_sim)
    return out


def check_domain(model, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    lo, hi = model.bounds
    if theta.shape != (model.dim,) or np.any(theta < lo) or np.any(theta > hi):
        raise DomainError(f"parameter {theta.tolist()} outside the domain of {model!r}")
    return theta
