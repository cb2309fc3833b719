"""Generalized inferential models.

Plausibility functions built from a generalized association ``T_{y,theta}``
whose distribution ``F_theta`` is known exactly or simulated.
"""
from ._validation import DomainError
from .assoc import Association, Model, StatisticKind, sample_T
from .cdf import CdfEstimator, CdfKind, evaluate_cdf
from .estimators import GeneralizedIM, MixedVarianceIM, OddsRatioIM
from .plaus import Assertion, PlausibilityCurve, marginal_plaus, plaus_curve, plaus_point, plaus_set
from .prs import RandomSetFamily, contention
from .qform import ChiSqMix, imhof_cdf, mc_cdf
from .regions import PlausibilityRegion, contour_region_2d, coverage_sim, interval_from_curve, sa_root

__version__ = "0.1.0"

__all__ = [
    "DomainError", "Association", "Model", "StatisticKind", "sample_T",
    "CdfEstimator", "CdfKind", "evaluate_cdf",
    "GeneralizedIM", "MixedVarianceIM", "OddsRatioIM",
    "Assertion", "PlausibilityCurve", "marginal_plaus", "plaus_curve", "plaus_point", "plaus_set",
    "RandomSetFamily", "contention", "ChiSqMix", "imhof_cdf", "mc_cdf",
    "PlausibilityRegion", "contour_region_2d", "coverage_sim", "interval_from_curve", "sa_root",
]
