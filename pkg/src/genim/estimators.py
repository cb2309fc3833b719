"""scikit-learn style front ends: ``fit`` the data, then query plausibilities.

``transform`` maps parameter values to plausibilities and ``predict``
reports membership in the level-``alpha`` plausibility region.
"""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_theta
from .assoc import Association, Model
from .cdf import CdfEstimator, CdfKind
from .models.gamma import GammaModel
from .models.mixed import mixed_interval, mixed_plaus_curve, mixed_prepare
from .models.oddsratio import TwoByTwoTable, or_curve, or_plateau, or_plaus, sample_odds_ratio
from .models.triangular import TriangularModel
from .plaus import PlausibilityWarning, nonempty_diagnostic, plaus_curve, plaus_point
from .prs import RandomSetFamily
from .regions import interval_from_curve

__all__ = ["GeneralizedIM", "OddsRatioIM", "MixedVarianceIM", "MODELS"]

MODELS = {"gamma": GammaModel, "triangular": TriangularModel}


def _as_points(theta, dim):
    pts = np.asarray(theta, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None] if dim == 1 else pts[None, :]
    if pts.shape[1] != dim:
        raise ValueError(f"expected parameter points with {dim} coordinates, got shape {pts.shape}")
    return pts


class GeneralizedIM(BaseEstimator):
    """Generalized IM for an iid parametric model.

    Parameters
    ----------
    model : {"gamma", "triangular"} or Model
    statistic : {"deviance", "profile_deviance", "score"}
    random_set : {"one_sided", "default"}
    cdf : {"naive", "importance", "asymptotic"}
    M : int
        Monte Carlo size for the simulated distribution functions.
    seed : int
    interest : int or None
        Interest coordinate for ``profile_deviance``.
    alpha : float
        Level used by :meth:`predict`.
    defensive : array-like or None
        Extra proposal points for importance sampling (see
        :class:`~genim.cdf.CdfEstimator`).
    """

    def __init__(self, model="triangular", statistic="deviance", random_set="one_sided", cdf="naive",
                 M=10_000, seed=0, interest=None, alpha=0.1, defensive=None):
        self.model = model
        self.statistic = statistic
        self.random_set = random_set
        self.cdf = cdf
        self.M = M
        self.seed = seed
        self.interest = interest
        self.alpha = alpha
        self.defensive = defensive

    def _base_model(self, n):
        if isinstance(self.model, Model):
            return self.model.resized(n)
        try:
            return MODELS[self.model](n)
        except KeyError:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}") from None

    def fit(self, y, _unused=None):
        y = np.asarray(y, dtype=float).ravel()
        model = self._base_model(y.size)
        self.y_ = model.check_data(y)
        self.model_ = model
        self.assoc_ = Association(model, self.statistic, interest=self.interest)
        self.prs_ = RandomSetFamily.coerce(self.random_set)
        self.mle_ = np.atleast_1d(model.mle(self.y_)).astype(float)
        kind = CdfKind(self.cdf)
        anchor = self.mle_ if kind is CdfKind.IMPORTANCE else None
        defensive = self.defensive if kind is CdfKind.IMPORTANCE else None
        self.cdf_ = CdfEstimator(kind, M=self.M, seed=self.seed, anchor=anchor, defensive=defensive)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", PlausibilityWarning)
            self.pl_at_mle_ = nonempty_diagnostic(self.assoc_, self.prs_, self.cdf_, self.y_)
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
        return self

    def plausibility(self, theta):
        """Plausibility of a single parameter value."""
        check_is_fitted(self, "assoc_")
        theta = check_theta(theta, self.model_)
        return plaus_point(self.assoc_, self.prs_, self.cdf_, self.y_, theta)

    def transform(self, theta):
        """Plausibility at each row of ``theta`` (shape ``(G,)`` or ``(G, dim)``)."""
        check_is_fitted(self, "assoc_")
        pts = _as_points(theta, self.model_.dim)
        for p in pts:
            check_theta(p, self.model_)
        return plaus_curve(self.assoc_, self.prs_, self.cdf_, self.y_, pts).values

    def predict(self, theta):
        """Whether each parameter point lies in ``{theta : pl > alpha}``."""
        return self.transform(theta) > check_alpha(self.alpha)

    def curve(self, grid):
        check_is_fitted(self, "assoc_")
        return plaus_curve(self.assoc_, self.prs_, self.cdf_, self.y_, grid)

    def interval(self, grid):
        """Level-``alpha`` region of a one-parameter model from a curve on ``grid``."""
        if self.model_.dim != 1:
            raise ValueError("interval() needs a one-parameter model")
        return interval_from_curve(self.curve(grid), check_alpha(self.alpha))


class OddsRatioIM(BaseEstimator):
    """Exact discrete IM for the odds ratio of a 2x2 table."""

    def __init__(self, alpha=0.05, log_psi_range=(-6.0, 6.0), n_points=481, extend=True):
        self.alpha = alpha
        self.log_psi_range = log_psi_range
        self.n_points = n_points
        self.extend = extend

    def fit(self, table, _unused=None):
        """``table`` is a :class:`TwoByTwoTable` or ``(y0, y1, n0, n1)``."""
        if not isinstance(table, TwoByTwoTable):
            vals = np.asarray(table).ravel()
            if vals.size != 4:
                raise ValueError("expected four counts (y0, y1, n0, n1)")
            table = TwoByTwoTable(*(int(v) for v in vals))
        self.table_ = table
        self.odds_ratio_ = sample_odds_ratio(table)
        self.plateau_ = or_plateau(table)
        self.log_psi_, self.pl_ = or_curve(table, self.log_psi_range, self.n_points, self.extend)
        curve = (self.log_psi_, self.pl_, {"model": "oddsratio"})
        self.region_ = interval_from_curve(curve, check_alpha(self.alpha))
        return self

    def transform(self, psi):
        check_is_fitted(self, "table_")
        return np.atleast_1d(or_plaus(self.table_, np.asarray(psi, dtype=float)))

    def predict(self, psi):
        return self.transform(psi) > check_alpha(self.alpha)


class MixedVarianceIM(BaseEstimator):
    """Marginal IM for the error variance of a linear mixed model."""

    def __init__(self, alpha=0.05, lambda_grid=None, M=10_000, seed=0, index_set=None):
        self.alpha = alpha
        self.lambda_grid = lambda_grid
        self.M = M
        self.seed = seed
        self.index_set = index_set

    def fit(self, X, y, Z=None, A=None):
        if Z is None:
            raise ValueError("Z (random-effect design) is required")
        y = np.asarray(y, dtype=float).ravel()
        self.spec_ = mixed_prepare(X, Z, A, index_set=self.index_set)
        if y.size != self.spec_.n:
            raise ValueError(f"y has {y.size} entries but X has {self.spec_.n} rows")
        self.y_ = y
        self.region_, self.psi_grid_, self.pl_ = mixed_interval(
            self.spec_, y, check_alpha(self.alpha), self.lambda_grid, self.M, self.seed)
        return self

    def transform(self, psi):
        check_is_fitted(self, "spec_")
        return mixed_plaus_curve(self.spec_, self.y_, psi, self.lambda_grid, self.M, self.seed)

    def predict(self, psi):
        return self.transform(psi) > check_alpha(self.alpha)
