import numpy as np
import pytest
from scipy import optimize, special, stats

from genim.assoc import (
    Association,
    Model,
    StatisticKind,
    deviance,
    profile_deviance,
    rng_for,
    sample_T,
    score_stat,
)
from genim.models import GammaModel, TriangularModel


def gamma_sample(n=25, theta=(7.0, 3.0), seed=0):
    return np.random.default_rng(seed).gamma(theta[0], theta[1], size=n)


def gamma_loglik_oracle(y, k, s):
    return np.sum(stats.gamma.logpdf(y, a=k, scale=s))


def gamma_max_oracle(y):
    """Coarse 2-D grid search refined by Nelder-Mead on the scipy log-density."""
    ks = np.linspace(0.5, 30, 120)
    ss = np.linspace(0.1, 15, 120)
    K, S = np.meshgrid(ks, ss, indexing="ij")
    ll = ((K - 1) * np.log(y).sum() - y.sum() / S - y.size * (K * np.log(S) + special.gammaln(K)))
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    res = optimize.minimize(lambda t: -gamma_loglik_oracle(y, *np.exp(t)), np.log([ks[i], ss[j]]),
                            method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 10_000})
    return -res.fun


def test_deviance_zero_at_mle():
    y = gamma_sample()
    m = GammaModel(25)
    assert deviance(m, y, m.mle(y)) == pytest.approx(0.0, abs=1e-9)
    yt = np.array([0.2, 0.4, 0.7])
    tm = TriangularModel(3)
    assert deviance(tm, yt, tm.mle(yt)) == pytest.approx(0.0, abs=1e-12)


def test_triangular_deviance_matches_grid_oracle():
    y = np.array([0.2, 0.4])
    model = TriangularModel(2)
    grid = np.linspace(0.0, 1.0, 100_001)
    with np.errstate(divide="ignore"):
        top = max(np.sum(np.log(np.where(y <= t, 2 * y / t, 2 * (1 - y) / (1 - t)))) for t in grid[1:-1])
    ll = np.log(2 * 0.2 / 0.4) + np.log(2 * 0.4 / 0.4)
    assert deviance(model, y, [0.4]) == pytest.approx(-2 * (ll - top), abs=1e-8)


def test_gamma_deviance_matches_grid_oracle():
    y = gamma_sample(seed=3)
    model = GammaModel(25)
    theta = np.array([7.0, 3.0])
    oracle = -2.0 * (gamma_loglik_oracle(y, *theta) - gamma_max_oracle(y))
    value = deviance(model, y, theta)
    assert value >= 0
    assert value == pytest.approx(oracle, abs=1e-6)


def test_gamma_profile_deviance_matches_nested_oracle():
    y = gamma_sample(seed=5)
    model = GammaModel(25)
    top = gamma_max_oracle(y)
    for psi in (4.0, 7.0, 12.0):
        res = optimize.minimize_scalar(lambda ls: -gamma_loglik_oracle(y, psi, np.exp(ls)),
                                       bounds=(-5, 5), method="bounded", options={"xatol": 1e-12})
        oracle = -2.0 * (-res.fun - top)
        assert profile_deviance(model, y, psi, interest=0) == pytest.approx(oracle, abs=1e-5)


def test_profile_deviance_zero_at_mle_and_nonnegative():
    y = gamma_sample(seed=8)
    model = GammaModel(25)
    k_hat = model.mle(y)[0]
    assert profile_deviance(model, y, k_hat, 0) == pytest.approx(0.0, abs=1e-9)
    for psi in np.random.default_rng(1).uniform(0.2, 40, 50):
        assert profile_deviance(model, y, psi, 0) >= 0.0
        assert profile_deviance(model, y, psi / 7, 1) >= 0.0


class GammaLogScale(Model):
    """Gamma with the scale stored on the log scale; uses only the generic machinery."""

    dim = 2

    @property
    def bounds(self):
        return np.array([0.0, -30.0]), np.array([np.inf, 30.0])

    def loglik(self, y, theta):
        return GammaModel(self.n).loglik(y, [theta[0], np.exp(theta[1])])

    def simulate(self, theta, size, rng):
        return rng.gamma(theta[0], np.exp(theta[1]), size=(size, self.n))

    def max_loglik(self, y):
        return GammaModel(self.n).max_loglik(y)


def test_profile_deviance_invariant_to_scale_reparameterization():
    y = gamma_sample(seed=9)
    for psi in (3.0, 7.0, 15.0):
        a = profile_deviance(GammaModel(25), y, psi, 0)
        b = profile_deviance(GammaLogScale(25), y, psi, 0)
        assert a == pytest.approx(b, abs=1e-6)


def test_gamma_mle_dominates_random_points():
    y = gamma_sample(seed=11)
    model = GammaModel(25)
    top = model.loglik(y, model.mle(y))
    rng = np.random.default_rng(0)
    for th in np.column_stack([rng.uniform(0.1, 30, 100), rng.uniform(0.05, 20, 100)]):
        assert top >= model.loglik(y, th)


def test_generic_mle_fallback_agrees_with_closed_form():
    y = gamma_sample(seed=2)
    closed = GammaModel(25).mle(y)
    generic = Model.mle(GammaLogScale(25), y)
    assert generic[0] == pytest.approx(closed[0], rel=1e-4)
    assert np.exp(generic[1]) == pytest.approx(closed[1], rel=1e-4)


def test_score_stat_mean_is_dimension():
    model = GammaModel(100)
    theta = np.array([7.0, 3.0])
    y = model.simulate(theta, 10_000, np.random.default_rng(4))
    q = score_stat(model, y, theta)
    assert np.all(q >= 0)
    se = q.std(ddof=1) / np.sqrt(q.size)
    assert abs(q.mean() - 2.0) <= 3 * se


def test_finite_difference_score_matches_analytic():
    y = gamma_sample(seed=6)
    model = GammaModel(25)
    theta = np.array([6.5, 2.8])
    analytic = model.score(y, theta)
    fd = Model.score(model, y, theta)
    np.testing.assert_allclose(fd, analytic, rtol=1e-4, atol=1e-6)


class CollinearGamma(GammaModel):
    def fisher_info(self, theta, y=None):
        return np.ones((2, 2))


def test_score_stat_singular_information_names_point():
    y = gamma_sample(n=5)
    with pytest.raises(np.linalg.LinAlgError, match=r"theta=\[7.0, 3.0\]"):
        score_stat(CollinearGamma(5), y, np.array([7.0, 3.0]))


def test_sample_T_deterministic_and_nonnegative():
    assoc = Association(TriangularModel(10))
    a = sample_T(assoc, [0.3], 500, seed=3)
    b = sample_T(assoc, [0.3], 500, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.all(a >= 0)
    assert not np.array_equal(a, sample_T(assoc, [0.3], 500, seed=4))


def test_gamma_deviance_quantile_matches_wilks():
    assoc = Association(GammaModel(200))
    T = sample_T(assoc, [7.0, 3.0], 10_000, seed=1)
    q95 = stats.chi2.ppf(0.95, 2)
    dens = stats.chi2.pdf(q95, 2)
    se = np.sqrt(0.95 * 0.05 / T.size) / dens
    assert abs(np.quantile(T, 0.95) - q95) <= 3 * se


@pytest.mark.parametrize("model,theta,kind,interest", [
    (TriangularModel(10), [0.3], "deviance", None),
    (GammaModel(25), [7.0, 3.0], "deviance", None),
    (GammaModel(25), [7.0, 3.0], "profile_deviance", 0),
    (GammaModel(25), [7.0, 3.0], "score", None),
])
def test_two_batches_are_exchangeable(model, theta, kind, interest):
    assoc = Association(model, kind, interest=interest)
    a = sample_T(assoc, theta, 10_000, seed=21)
    b = sample_T(assoc, theta, 10_000, seed=22)
    assert np.all(np.isfinite(a))
    assert stats.ks_2samp(a, b).statistic < 0.03


def test_custom_association_requires_function():
    with pytest.raises(ValueError):
        Association(TriangularModel(3), StatisticKind.CUSTOM)
    assoc = Association(TriangularModel(3), "custom", func=lambda y, th: np.abs(np.mean(y, -1) - th[0]))
    assert assoc.statistic(np.array([0.1, 0.2, 0.3]), np.array([0.2])) == pytest.approx(0.0)


def test_profile_deviance_needs_interest():
    with pytest.raises(ValueError):
        Association(GammaModel(5), "profile_deviance")


def test_rng_for_distinguishes_nearby_floats():
    a = rng_for(0, 1, np.array([0.3])).random()
    b = rng_for(0, 1, np.array([np.nextafter(0.3, 1)])).random()
    assert a != b
    assert rng_for(0, 1, np.array([0.3])).random() == a
