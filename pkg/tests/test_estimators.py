import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from genim import DomainError
from genim.estimators import GeneralizedIM, MixedVarianceIM, OddsRatioIM
from genim.models.mixed import mixed_plaus_curve, mixed_prepare, one_way_design, simulate_mixed
from genim.models.oddsratio import TwoByTwoTable, or_plaus
from genim.models.triangular import tri_simulate
from genim.plaus import plaus_point
from genim.regions import interval_from_curve


@pytest.fixture(scope="module")
def tri_data():
    return tri_simulate(0.3, 10, 7)


def test_params_round_trip_and_clone():
    est = GeneralizedIM(model="gamma", M=500, seed=3, alpha=0.2)
    params = est.get_params()
    assert params["model"] == "gamma" and params["M"] == 500 and params["alpha"] == 0.2
    twin = clone(est)
    assert twin.get_params() == params and not hasattr(twin, "assoc_")
    est.set_params(alpha=0.05)
    assert est.alpha == 0.05


def test_unfitted_estimator_raises():
    with pytest.raises(NotFittedError):
        GeneralizedIM().transform([0.3])
    with pytest.raises(NotFittedError):
        OddsRatioIM().transform(1.0)
    with pytest.raises(NotFittedError):
        MixedVarianceIM().transform(1.0)


def test_fit_transform_agrees_with_functional_api(tri_data):
    est = GeneralizedIM(M=1000, seed=2).fit(tri_data)
    theta = np.array([0.1, 0.3, 0.6])
    got = est.transform(theta)
    for t, g in zip(theta, got):
        assert g == plaus_point(est.assoc_, est.prs_, est.cdf_, est.y_, [t])
    assert est.plausibility(est.mle_) == 1.0
    assert est.pl_at_mle_ == 1.0
    np.testing.assert_array_equal(est.predict(theta), got > est.alpha)


def test_interval_matches_region_from_curve(tri_data):
    est = GeneralizedIM(M=1000, seed=2, alpha=0.1).fit(tri_data)
    grid = np.linspace(0.005, 0.995, 100)
    region = est.interval(grid)
    assert region.intervals == interval_from_curve(est.curve(grid), 0.1).intervals
    assert any(lo <= est.mle_[0] <= hi for lo, hi in region.intervals)


def test_importance_estimator_anchors_at_mle(tri_data):
    est = GeneralizedIM(cdf="importance", M=1000, seed=2, defensive=[0.0, 0.5, 1.0]).fit(tri_data)
    np.testing.assert_array_equal(est.cdf_.anchor, est.mle_)
    assert np.all((est.transform([0.2, 0.4]) >= 0) & (est.transform([0.2, 0.4]) <= 1))


def test_two_parameter_model_points():
    y = np.random.default_rng(0).gamma(7.0, 3.0, 25)
    est = GeneralizedIM(model="gamma", M=300, seed=1).fit(y)
    pl = est.transform([[7.0, 3.0], [20.0, 20.0]])
    assert pl.shape == (2,) and pl[1] < pl[0]
    with pytest.raises(ValueError, match="2 coordinates"):
        est.transform([[7.0, 3.0, 1.0]])
    with pytest.raises(ValueError):
        est.interval([1.0, 2.0])


def test_bad_inputs(tri_data):
    with pytest.raises(ValueError, match="unknown model"):
        GeneralizedIM(model="weibull").fit(tri_data)
    with pytest.raises(DomainError):
        GeneralizedIM().fit([0.2, 1.5, 0.3])
    est = GeneralizedIM(M=200).fit(tri_data)
    with pytest.raises(DomainError):
        est.transform([1.5])


def test_odds_ratio_estimator():
    est = OddsRatioIM().fit((1, 2, 43, 39))
    assert round(est.odds_ratio_, 2) == 2.27
    lo, hi = est.plateau_
    assert lo <= np.log(est.odds_ratio_) <= hi
    psi = np.array([0.5, 2.27, 50.0])
    np.testing.assert_array_equal(est.transform(psi), or_plaus(TwoByTwoTable(1, 2, 43, 39), psi))
    assert est.predict(2.27)[0]
    assert est.region_.alpha == 0.05
    with pytest.raises(ValueError, match="four counts"):
        OddsRatioIM().fit((1, 2, 3))


def test_mixed_variance_estimator():
    X, Z = one_way_design([4] * 6)
    spec = mixed_prepare(X, Z)
    y = simulate_mixed(spec, 1.0, 1.0, 1, np.random.default_rng(0))[0]
    est = MixedVarianceIM(M=1000, seed=1).fit(X, y, Z=Z)
    psi = np.array([0.5, 1.0, 3.0])
    np.testing.assert_array_equal(est.transform(psi), mixed_plaus_curve(spec, y, psi, M=1000, seed=1))
    (lo, hi), = est.region_.intervals
    assert lo < 1.0 < hi
    with pytest.raises(ValueError, match="Z"):
        MixedVarianceIM().fit(X, y)
    with pytest.raises(ValueError, match="rows"):
        MixedVarianceIM(M=1000).fit(X, y[:-1], Z=Z)
