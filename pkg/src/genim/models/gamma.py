"""Two-parameter gamma model (shape, scale) and the baselines it is compared with."""
from __future__ import annotations

import numpy as np
from scipy import special, stats

from .._validation import DomainError, check_sample
from ..assoc import Model, rng_for

__all__ = [
    "GammaModel",
    "gamma_mle",
    "basic_im_plausibility",
    "wald_ellipse_statistic",
]

SHAPE_CAP = 1e6


def _shape_from_s(s, n_iter=12):
    """Solve ``log k - digamma(k) = s`` for ``k`` (vectorized, Minka's update)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
        for _ in range(n_iter):
            num = np.log(k) - special.digamma(k) - s
            den = k * k * (1.0 / k - special.polygamma(1, k))
            k_new = 1.0 / (1.0 / k + num / den)
            k = np.where(np.isfinite(k_new) & (k_new > 0), k_new, k)
    return k


def _inverse_digamma(v, n_iter=10):
    """Solve ``digamma(k) = v`` (vectorized Newton from Minka's start)."""
    v = np.asarray(v, dtype=float)
    k = np.where(v >= -2.22, np.exp(v) + 0.5, -1.0 / (v - special.digamma(1.0)))
    for _ in range(n_iter):
        k = k - (special.digamma(k) - v) / special.polygamma(1, k)
    return k


class GammaModel(Model):
    """iid ``Gamma(shape, scale)`` sample of size ``n``."""

    dim = 2
    param_names = ("shape", "scale")

    @property
    def bounds(self):
        return np.zeros(2), np.full(2, np.inf)

    def check_data(self, y):
        return check_sample(y, lower=0.0, strict_lower=True, min_size=2)

    def loglik(self, y, theta):
        k, s = float(theta[0]), float(theta[1])
        if k <= 0 or s <= 0:
            return np.full(np.shape(y)[:-1], -np.inf) if np.ndim(y) > 1 else -np.inf
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        return ((k - 1.0) * np.log(y).sum(-1) - y.sum(-1) / s
                - n * (k * np.log(s) + special.gammaln(k)))

    def simulate(self, theta, size, rng):
        return rng.gamma(float(theta[0]), float(theta[1]), size=(size, self.n))

    def canonical(self, theta):
        # the law of every built-in statistic is free of the scale
        return np.array([float(theta[0]), 1.0])

    def start(self, y):
        m, v = np.mean(y), np.var(y)
        return np.array([m * m / v, v / m])

    def mle(self, y):
        y = np.asarray(y, dtype=float)
        mean = y.mean(-1)
        s = np.log(mean) - np.log(y).mean(-1)
        if np.any(~(s > 1e-13)):
            raise DomainError("degenerate sample (zero spread): gamma shape MLE diverges")
        k = _shape_from_s(s)
        if np.any(k > SHAPE_CAP):
            raise DomainError(f"gamma shape MLE exceeds {SHAPE_CAP:g}; sample is nearly degenerate")
        return np.stack([k, mean / k], axis=-1)

    def max_loglik(self, y):
        y = np.asarray(y, dtype=float)
        th = self.mle(y)
        k, sc = th[..., 0], th[..., 1]
        n = y.shape[-1]
        return ((k - 1.0) * np.log(y).sum(-1) - y.sum(-1) / sc
                - n * (k * np.log(sc) + special.gammaln(k)))

    def profile_mle(self, y, psi, interest=0):
        y = np.asarray(y, dtype=float)
        mean = y.mean(-1)
        if interest == 0:
            k = np.broadcast_to(float(psi), mean.shape)
            return np.stack([k, mean / k], axis=-1)
        scale = np.broadcast_to(float(psi), mean.shape)
        k = _inverse_digamma(np.log(y).mean(-1) - np.log(scale))
        return np.stack([k, scale], axis=-1)

    def score(self, y, theta):
        y = np.asarray(y, dtype=float)
        k, s = float(theta[0]), float(theta[1])
        n = y.shape[-1]
        d_k = np.log(y).sum(-1) - n * (np.log(s) + special.digamma(k))
        d_s = y.sum(-1) / s**2 - n * k / s
        return np.stack([d_k, d_s], axis=-1)

    def fisher_info(self, theta, y=None):
        k, s = float(theta[0]), float(theta[1])
        return self.n * np.array([[special.polygamma(1, k), 1.0 / s], [1.0 / s, k / s**2]])


def gamma_mle(y):
    """Maximum likelihood ``(shape, scale)`` for a positive sample."""
    y = check_sample(y, lower=0.0, strict_lower=True, min_size=2)
    k, s = GammaModel(y.size).mle(y)
    return float(k), float(s)


def _log_ratio_stat(y):
    """``mean(log y) - log(mean y)``; its law depends on the shape only."""
    y = np.asarray(y, dtype=float)
    return np.log(y).mean(-1) - np.log(y.mean(-1))


def basic_im_plausibility(y, shapes, scales, M=10_000, seed=0):
    """Plausibility surface of the square-set IM built on two independent uniforms.

    The sufficient statistic is split into the scale-free log ratio of
    geometric to arithmetic mean (law depends on the shape alone, computed by
    Monte Carlo) and the sum, which is ``Gamma(n * shape, scale)`` and
    independent of the ratio.  A square predictive random set centred at
    ``(0.5, 0.5)`` has contention ``1 - max(|2u1 - 1|, |2u2 - 1|)^2``.

    Returns an array of shape ``(len(shapes), len(scales))``.
    """
    y = check_sample(y, lower=0.0, strict_lower=True, min_size=2)
    n = y.size
    shapes = np.asarray(shapes, dtype=float)
    scales = np.asarray(scales, dtype=float)
    r_obs = _log_ratio_stat(y)
    total = y.sum()
    model = GammaModel(n)
    u1 = np.empty(shapes.size)
    for i, k in enumerate(shapes):
        draws = _log_ratio_stat(model.simulate([k, 1.0], M, rng_for(seed, np.array([k]))))
        u1[i] = np.mean(draws <= r_obs)
    u2 = special.gammainc(shapes[:, None] * n, total / scales[None, :])
    dev = np.maximum(np.abs(2.0 * u1[:, None] - 1.0), np.abs(2.0 * u2 - 1.0))
    return 1.0 - dev**2


def wald_ellipse_statistic(y, shapes, scales):
    """Wald quadratic form ``(theta - mle)' I(mle) (theta - mle)`` on a grid."""
    y = check_sample(y, lower=0.0, strict_lower=True, min_size=2)
    model = GammaModel(y.size)
    mle = model.mle(y)
    info = model.fisher_info(mle)
    d0 = np.asarray(shapes, dtype=float)[:, None] - mle[0]
    d1 = np.asarray(scales, dtype=float)[None, :] - mle[1]
    return info[0, 0] * d0**2 + 2 * info[0, 1] * d0 * d1 + info[1, 1] * d1**2


def asymptotic_region_level(alpha, dof=2):
    """Chi-square cutoff for the asymptotic deviance / Wald regions."""
    return float(stats.chi2.ppf(1.0 - alpha, dof))
