import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from genim import DomainError
from genim.qform import ChiSqMix, chisq_mix_cdf, imhof_cdf, mc_cdf

MIX = ChiSqMix((2.0, 1.0, 0.5), (1, 2, 3))


def hypoexponential_cdf(w, x):
    """Exact CDF of sum of w_i * ChiSq(2) (exponentials with means 2 w_i), distinct w."""
    w = np.asarray(w, dtype=float)
    total = 0.0
    for i, wi in enumerate(w):
        coef = np.prod([wi / (wi - wj) for j, wj in enumerate(w) if j != i])
        total += coef * np.exp(-x / (2 * wi))
    return 1.0 - total


def convolution_cdf(w1, r1, w2, r2, x):
    """P(w1 V1 + w2 V2 <= x) by one-dimensional quadrature over V1."""
    f = lambda v: stats.chi2.pdf(v, r1) * stats.chi2.cdf((x - w1 * v) / w2, r2)
    return integrate.quad(f, 0, x / w1, epsabs=1e-12, epsrel=1e-12, limit=200)[0]


@pytest.mark.parametrize("k", [1, 2, 3, 5, 10])
@pytest.mark.parametrize("x", [0.05, 0.5, 1.0, 3.0, 10.0, 30.0])
def test_single_term_matches_incomplete_gamma(k, x):
    assert imhof_cdf(ChiSqMix((1.0,), (k,)), x) == pytest.approx(special.gammainc(k / 2, x / 2), abs=1e-7)


def test_x_zero_is_zero():
    assert imhof_cdf(MIX, 0.0) == pytest.approx(0.0, abs=1e-8)
    assert imhof_cdf(MIX, 0.0, full_output=True).fallback
    assert mc_cdf(MIX, 0.0, 10_000, 0) == 0.0


def test_three_term_mix_at_mean_matches_monte_carlo():
    assert MIX.mean == pytest.approx(5.5)
    assert abs(imhof_cdf(MIX, 5.5) - mc_cdf(MIX, 5.5, 1_000_000, 1)) <= 2e-3


def test_mc_median_of_chisq2():
    v = mc_cdf(ChiSqMix((1.0,), (2,)), 1.386, 1_000_000, 3)
    assert abs(v - 0.5) <= 3 * np.sqrt(0.25 / 1_000_000)


@settings(max_examples=30)
@given(w=st.lists(st.floats(0.1, 10), min_size=2, max_size=4, unique=True), q=st.floats(0.05, 0.99))
def test_matches_hypoexponential_closed_form(w, q):
    w = np.asarray(w)
    if np.min(np.abs(np.subtract.outer(w, w))[~np.eye(w.size, dtype=bool)]) < 0.05:
        return
    x = float(stats.expon.ppf(q, scale=2 * w.sum()))
    exact = hypoexponential_cdf(w, x)
    assert imhof_cdf(ChiSqMix(tuple(w), (2,) * w.size), x) == pytest.approx(exact, abs=1e-7)


@settings(max_examples=20)
@given(w1=st.floats(0.1, 10), w2=st.floats(0.1, 10), r1=st.integers(1, 5), r2=st.integers(1, 5),
       q=st.floats(0.02, 0.98))
def test_matches_convolution_quadrature(w1, w2, r1, r2, q):
    mix = ChiSqMix((w1, w2), (r1, r2))
    x = mix.mean * q * 2
    assert imhof_cdf(mix, x) == pytest.approx(convolution_cdf(w1, r1, w2, r2, x), abs=1e-6)


@settings(max_examples=10)
@given(w=st.lists(st.floats(0.1, 10), min_size=1, max_size=6), seed=st.integers(0, 1000))
def test_monotone_in_x(w, seed):
    r = np.random.default_rng(seed).integers(1, 6, size=len(w))
    mix = ChiSqMix(tuple(w), tuple(r))
    xs = np.sort(np.random.default_rng(seed).uniform(0, mix.mean + 6 * mix.sd, 100))
    vals = np.array([imhof_cdf(mix, x) for x in xs])
    assert np.all(np.diff(vals) >= -1e-8)
    assert np.all((vals >= 0) & (vals <= 1))


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_scale_equivariance(c):
    for x in (0.5, 3.0, 5.5, 12.0):
        assert imhof_cdf(MIX.scaled(c), c * x) == pytest.approx(imhof_cdf(MIX, x), abs=1e-8)


@settings(max_examples=15)
@given(w=st.lists(st.floats(0.1, 10), min_size=1, max_size=10), seed=st.integers(0, 1000))
def test_upper_tail_reaches_one(w, seed):
    r = np.random.default_rng(seed).integers(1, 6, size=len(w))
    mix = ChiSqMix(tuple(w), tuple(r))
    assert imhof_cdf(mix, mix.mean + 10 * mix.sd) >= 0.999


def test_error_bound_and_domain_checks():
    res = imhof_cdf(MIX, 4.0, full_output=True)
    assert res.error_bound <= 1e-7 and not res.fallback and res.n_panels > 0
    with pytest.raises(DomainError):
        imhof_cdf(MIX, -1.0)
    with pytest.raises(DomainError):
        imhof_cdf(MIX, 1.0, tol=1e-2)
    with pytest.raises(DomainError):
        ChiSqMix((1.0, -1.0), (1, 1))
    with pytest.raises(DomainError):
        ChiSqMix((1.0,), (0,))
    with pytest.raises(ValueError):
        ChiSqMix((1.0, 2.0), (1,))
    with pytest.raises(ValueError):
        mc_cdf(MIX, 1.0, 9_999, 0)


def test_chisq_mix_cdf_equal_weight_fast_path():
    x = np.array([0.5, 2.0, 9.0])
    np.testing.assert_allclose(chisq_mix_cdf([3.0, 3.0], [2, 4], x), stats.chi2.cdf(x / 3.0, 6), atol=1e-13)
    assert chisq_mix_cdf([2.0, 1.0, 0.5], [1, 2, 3], 5.5) == pytest.approx(imhof_cdf(MIX, 5.5), abs=1e-12)
