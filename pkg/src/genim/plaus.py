"""Plausibility of point and set assertions for a generalized association."""
from __future__ import annotations

import dataclasses
import enum
import warnings
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from ._optimize import OptimizationError, coordinate_search
from .cdf import evaluate_cdf
from .prs import RandomSetFamily, point_plaus_continuous, point_plaus_discrete

__all__ = [
    "AssertionKind",
    "Assertion",
    "OptimizerConfig",
    "SetPlausibility",
    "PlausibilityCurve",
    "PlausibilityWarning",
    "plaus_point",
    "plaus_set",
    "marginal_plaus",
    "plaus_curve",
    "nonempty_diagnostic",
]

NONEMPTY_FLOOR = 1e-6


class PlausibilityWarning(RuntimeWarning):
    """The random set may be empty with positive probability, or a search failed."""


class AssertionKind(str, enum.Enum):
    POINT = "point"
    FINITE_SET = "finite_set"
    BOX = "box"


@dataclasses.dataclass(frozen=True)
class Assertion:
    """A subset of the parameter space: a point, finitely many points, or a box.

    Infinite box bounds must come with a finite ``search_lower`` /
    ``search_upper`` truncation used by the optimizer.
    """

    kind: AssertionKind
    points: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    search_lower: Optional[np.ndarray] = None
    search_upper: Optional[np.ndarray] = None

    @classmethod
    def point(cls, theta):
        return cls(AssertionKind.POINT, points=np.atleast_2d(np.asarray(theta, dtype=float)))

    @classmethod
    def finite(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("a finite assertion needs at least one point")
        return cls(AssertionKind.FINITE_SET, points=pts)

    @classmethod
    def box(cls, lower, upper, search_lower=None, search_upper=None):
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs matching bounds with lower <= upper")
        slo = lo if search_lower is None else np.maximum(lo, np.atleast_1d(np.asarray(search_lower, dtype=float)))
        shi = hi if search_upper is None else np.minimum(hi, np.atleast_1d(np.asarray(search_upper, dtype=float)))
        if not (np.all(np.isfinite(slo)) and np.all(np.isfinite(shi))):
            raise ValueError("half-open boxes need a finite search truncation")
        return cls(AssertionKind.BOX, lower=lo, upper=hi, search_lower=slo, search_upper=shi)


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 16
    xtol: float = 1e-6
    max_evals: int = 2000
    seed: int = 0


class SetPlausibility(NamedTuple):
    value: float
    argmax: np.ndarray
    converged: bool


@dataclasses.dataclass
class PlausibilityCurve:
    """Plausibility evaluated on an ordered grid of parameter points."""

    points: np.ndarray
    values: np.ndarray
    metadata: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.points.shape[0],):
            raise ValueError("one plausibility value per grid point is required")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("plausibility values must lie in [0, 1]")
        if self.points.shape[1] == 1 and np.any(np.diff(self.points[:, 0]) <= 0):
            raise ValueError("1-D curve grid must be strictly increasing")

    @property
    def theta(self):
        return self.points[:, 0] if self.points.shape[1] == 1 else self.points

    def __len__(self):
        return self.values.size


def _oriented(assoc, cdf_value):
    F, F_left = cdf_value.F, cdf_value.F_left
    if not assoc.large_is_poor:
        # small T indicates poor fit: use the law of -T
        F, F_left = 1.0 - F_left, 1.0 - F
    return F, F_left


def plaus_point(assoc, prs, cdf, y, theta, max_loglik=None):
    """``pl_y(theta)`` from ``t = T_{y,theta}`` and ``F = F_theta(t)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    t = float(assoc.statistic(y, theta, max_loglik=max_loglik))
    F, F_left = _oriented(assoc, evaluate_cdf(assoc, theta, t, cdf))
    prs = RandomSetFamily.coerce(prs)
    if assoc.discrete:
        return float(point_plaus_discrete(prs, F_left, F))
    return float(point_plaus_continuous(prs, F))


def plaus_set(assoc, prs, cdf, y, A, opt=None):
    """``pl_y(A) = sup_{theta in A} pl_y(theta)`` (consonant random sets).

    Boxes are searched from ``opt.n_starts`` Latin-hypercube starts, each
    polished by compass search.  Raises :class:`OptimizationError` carrying
    the best incumbent when no start converges.
    """
    opt = opt or OptimizerConfig()
    top = assoc.precompute(y)
    if A.kind in (AssertionKind.POINT, AssertionKind.FINITE_SET):
        vals = np.array([plaus_point(assoc, prs, cdf, y, p, max_loglik=top) for p in A.points])
        i = int(np.argmax(vals))
        return SetPlausibility(float(vals[i]), A.points[i].copy(), True)

    lo, hi = A.search_lower, A.search_upper
    d = lo.size
    cache = {}

    def f(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = plaus_point(assoc, prs, cdf, y, x, max_loglik=top)
        return cache[key]

    if np.all(lo == hi):
        return SetPlausibility(f(lo.copy()), lo.copy(), True)
    starts = qmc.LatinHypercube(d=d, seed=opt.seed).random(opt.n_starts)
    starts = lo + starts * (hi - lo)
    best, best_x, any_conv = -np.inf, None, False
    for s in starts:
        x, fx, conv = coordinate_search(f, s, lo, hi, xtol=opt.xtol, max_evals=opt.max_evals)
        any_conv |= conv
        if fx > best:
            best, best_x = fx, x
        if best >= 1.0:
            break
    if not any_conv:
        raise OptimizationError("plausibility maximization did not converge from any start", best=best_x, value=best)
    return SetPlausibility(float(best), best_x, True)


def marginal_plaus(assoc, prs, cdf, y, psi, lambda_box, interest=0, opt=None):
    """Plausibility of ``{psi} x lambda_box`` for the full parameter.

    ``lambda_box`` is ``(lower, upper)`` for the remaining coordinates, in
    order.
    """
    lam_lo = np.atleast_1d(np.asarray(lambda_box[0], dtype=float))
    lam_hi = np.atleast_1d(np.asarray(lambda_box[1], dtype=float))
    lo = np.insert(lam_lo, interest, psi)
    hi = np.insert(lam_hi, interest, psi)
    return plaus_set(assoc, prs, cdf, y, Assertion.box(lo, hi), opt=opt).value


def plaus_curve(assoc, prs, cdf, y, grid):
    """Pointwise plausibility over ``grid`` (``(G,)`` or ``(G, dim)``)."""
    grid = np.asarray(grid, dtype=float)
    pts = grid[:, None] if grid.ndim == 1 else grid
    if pts.shape[0] == 0:
        raise ValueError("grid must be non-empty")
    top = assoc.precompute(y)
    vals = np.array([plaus_point(assoc, prs, cdf, y, p, max_loglik=top) for p in pts])
    meta = {"estimator": cdf.describe(), "association": assoc.kind.value,
            "random_set": RandomSetFamily.coerce(prs).value}
    return PlausibilityCurve(pts, vals, meta)


def nonempty_diagnostic(assoc, prs, cdf, y):
    """Plausibility at the maximum likelihood estimate; warns when it is below 1e-6.

    A near-zero supremum means the random set is (numerically) empty for these
    data, so the validity guarantee does not apply.
    """
    theta_hat = np.atleast_1d(assoc.model.mle(y))
    value = plaus_point(assoc, prs, cdf, y, theta_hat)
    if value < NONEMPTY_FLOOR:
        warnings.warn(f"sup of the plausibility is {value:.3g} < {NONEMPTY_FLOOR:g}: possible empty random set "
                      "or optimizer failure", PlausibilityWarning, stacklevel=2)
    return value
