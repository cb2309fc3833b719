"""Concrete sampling models: gamma, triangular, 2x2 odds ratio and the mixed-model error variance."""
from .gamma import GammaModel, basic_im_plausibility, gamma_mle, wald_ellipse_statistic
from .mixed import (
    MixedModelSpec,
    f_lambda_cdf,
    lambda_mle,
    mixed_interval,
    mixed_marginal_plaus,
    mixed_prepare,
    mixed_T,
    one_way_design,
    s_stats,
    simulate_mixed,
)
from .oddsratio import TwoByTwoTable, nchg_cdf, or_curve, or_plateau, or_plaus, sample_odds_ratio
from .triangular import TriangularModel, tri_mle, tri_simulate

__all__ = [
    "GammaModel", "basic_im_plausibility", "gamma_mle", "wald_ellipse_statistic",
    "MixedModelSpec", "f_lambda_cdf", "lambda_mle", "mixed_interval", "mixed_marginal_plaus",
    "mixed_prepare", "mixed_T", "one_way_design", "s_stats", "simulate_mixed",
    "TwoByTwoTable", "nchg_cdf", "or_curve", "or_plateau", "or_plaus", "sample_odds_ratio",
    "TriangularModel", "tri_mle", "tri_simulate",
]
