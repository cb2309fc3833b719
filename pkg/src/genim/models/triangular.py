"""Asymmetric triangular distribution on [0, 1] with mode ``theta``."""
from __future__ import annotations

import numpy as np

from .._validation import check_sample, check_seed, check_unit_interval
from ..assoc import Model

__all__ = ["TriangularModel", "tri_mle", "tri_simulate", "tri_loglik"]


def tri_loglik(y, theta):
    """Log-likelihood of each sample in ``y`` (``(..., n)``) at scalar ``theta``."""
    y = np.asarray(y, dtype=float)
    theta = float(np.asarray(theta).reshape(-1)[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        if theta <= 0.0:
            terms = np.log(2.0 * (1.0 - y))
        elif theta >= 1.0:
            terms = np.log(2.0 * y)
        else:
            terms = np.where(y <= theta, np.log(2.0 * y / theta), np.log(2.0 * (1.0 - y) / (1.0 - theta)))
    return terms.sum(-1)


def _profile_at_data(y):
    """Log-likelihood at each data point as candidate mode, plus sorted data.

    Returns ``(sorted_y, ll)`` both of shape ``(..., n)``; ``ll[..., j]`` is
    the log-likelihood at ``theta = sorted_y[..., j]``.
    """
    ys = np.sort(np.asarray(y, dtype=float), axis=-1)
    n = ys.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_left = np.log(2.0 * ys)
        log_right = np.log(2.0 * (1.0 - ys))
        # counts of observations <= each candidate (ties included)
        k = (ys[..., None, :] <= ys[..., :, None]).sum(-1)
        zeros = np.zeros(ys.shape[:-1] + (1,))
        cum_left = np.concatenate([zeros, np.cumsum(log_left, axis=-1)], axis=-1)
        cum_right = np.concatenate([zeros, np.cumsum(log_right, axis=-1)], axis=-1)
        left = np.take_along_axis(cum_left, k, axis=-1) - k * np.log(ys)
        right = (cum_right[..., -1:] - np.take_along_axis(cum_right, k, axis=-1)) - (n - k) * np.log1p(-ys)
        # y == theta exactly: the right-branch term is absent so 0 * log(0) must read as 0
        right = np.where(n - k == 0, cum_right[..., -1:] - np.take_along_axis(cum_right, k, axis=-1), right)
        left = np.where(k == 0, 0.0, left)
    return ys, left + right


class TriangularModel(Model):
    """iid sample of size ``n`` from the triangular density with mode ``theta``."""

    dim = 1
    param_names = ("theta",)

    @property
    def bounds(self):
        return np.zeros(1), np.ones(1)

    def check_data(self, y):
        return check_sample(y, lower=0.0, upper=1.0)

    def loglik(self, y, theta):
        return tri_loglik(y, theta)

    def simulate(self, theta, size, rng):
        theta = float(np.asarray(theta).reshape(-1)[0])
        u = rng.random((size, self.n))
        with np.errstate(invalid="ignore"):
            return np.where(u <= theta, np.sqrt(u * theta), 1.0 - np.sqrt((1.0 - u) * (1.0 - theta)))

    def mle(self, y):
        ys, ll = _profile_at_data(y)
        j = np.argmax(ll, axis=-1)
        return np.take_along_axis(ys, j[..., None], axis=-1)

    def max_loglik(self, y):
        return _profile_at_data(y)[1].max(axis=-1)


def tri_mle(y):
    """Mode estimate: the data point with the largest likelihood (smallest on ties)."""
    y = check_sample(y, lower=0.0, upper=1.0)
    return float(TriangularModel(y.size).mle(y)[0])


def tri_simulate(theta, n, seed):
    """Inverse-CDF draws of an iid triangular sample."""
    theta = float(check_unit_interval(theta, "theta"))
    return TriangularModel(n).simulate([theta], 1, np.random.default_rng(check_seed(seed)))[0]
