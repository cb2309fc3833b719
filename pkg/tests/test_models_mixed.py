import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from genim import DomainError
from genim.models.mixed import (
    DEFAULT_LAMBDA_GRID,
    default_index_set,
    f_lambda_cdf,
    lambda_mle,
    mixed_interval,
    mixed_marginal_plaus,
    mixed_plaus_curve,
    mixed_prepare,
    mixed_T,
    one_way_design,
    s_stats,
    simulate_mixed,
)

BALANCED = mixed_prepare(*one_way_design([4] * 6))
UNBALANCED = mixed_prepare(*one_way_design([2, 3, 4, 5, 6]))
# enough groups for lambda to be estimated reasonably well
WIDE = mixed_prepare(*one_way_design([2, 4, 6, 8] * 5))


def profile(lam, v, e, r):
    w = lam * e + 1.0
    return np.sum(-0.5 * r * np.log(w) - 0.5 * v / w)


def test_intercept_projection_identities():
    X, Z = np.ones((4, 1)), np.eye(4)[:, :2]
    spec = mixed_prepare(X, Z)
    K = spec.K
    np.testing.assert_allclose(K.T @ K, np.eye(3), atol=1e-12)
    H = X @ np.linalg.solve(X.T @ X, X.T)
    np.testing.assert_allclose(K @ K.T, np.eye(4) - H, atol=1e-12)
    np.testing.assert_allclose(K.T @ X, 0, atol=1e-12)


def test_one_way_eigenvalues_match_dense_oracle():
    X, Z = one_way_design([2, 2, 2])
    spec = mixed_prepare(X, Z)
    H = X @ np.linalg.solve(X.T @ X, X.T)
    R = np.eye(6) - H
    dense = np.linalg.eigvalsh(R @ Z @ Z.T @ R)
    # R Z Z' R shares the spectrum of G up to p extra zeros
    distinct = np.unique(np.round(dense, 10))[::-1]
    np.testing.assert_allclose(spec.e, [2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(spec.e, distinct, atol=1e-9)
    np.testing.assert_array_equal(spec.r, [2, 3])
    assert spec.r.sum() == spec.n - spec.p


@pytest.mark.parametrize("spec", [BALANCED, UNBALANCED, WIDE])
def test_spec_invariants(spec):
    np.testing.assert_allclose(spec.K.T @ spec.K, np.eye(spec.n - spec.p), atol=1e-10)
    H = spec.X @ np.linalg.solve(spec.X.T @ spec.X, spec.X.T)
    np.testing.assert_allclose(spec.K @ spec.K.T, np.eye(spec.n) - H, atol=1e-10)
    assert spec.r.sum() == spec.n - spec.p
    assert np.all(-np.diff(spec.e) > spec.tol)
    for P, e in zip(spec.P, spec.e):
        np.testing.assert_allclose(spec.G @ P, e * P, atol=1e-9)


def test_correlated_random_effects():
    X, Z = one_way_design([3, 3, 3])
    A = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
    spec = mixed_prepare(X, Z, A)
    np.testing.assert_allclose(np.sort(np.repeat(spec.e, spec.r)),
                               np.sort(np.linalg.eigvalsh(spec.K.T @ Z @ A @ Z.T @ spec.K)), atol=1e-10)


def test_prepare_errors():
    X, Z = one_way_design([3, 3])
    with pytest.raises(DomainError, match="rank"):
        mixed_prepare(np.column_stack([X, 2 * X]), Z)
    with pytest.raises(DomainError, match="symmetric"):
        mixed_prepare(X, Z, np.array([[1.0, 0.2], [0.0, 1.0]]))
    with pytest.raises(DomainError, match="semi-definite"):
        mixed_prepare(X, Z, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        mixed_prepare(X, Z, index_set=[0, 1])
    with pytest.raises(DomainError):
        mixed_prepare(np.ones((4, 1)), np.ones((4, 1)))


def test_default_index_set():
    assert default_index_set(2) == (1,)
    assert default_index_set(5) == (1, 2, 3, 4)
    assert default_index_set(165) == tuple(range(81, 165))
    with pytest.raises(DomainError):
        default_index_set(1)


def test_s_stats_basic_identities():
    rng = np.random.default_rng(0)
    spec = UNBALANCED
    assert np.allclose(s_stats(spec, spec.X @ np.array([3.7])), 0.0, atol=1e-20)
    y = rng.normal(size=spec.n)
    S = s_stats(spec, y)
    assert np.all(S >= 0)
    assert S.sum() == pytest.approx(np.sum((spec.K.T @ y) ** 2))


@pytest.mark.parametrize("spec,psi,lam", [(BALANCED, 1.0, 1.0), (UNBALANCED, 2.0, 0.5)])
def test_scaled_s_stats_are_chi_square(spec, psi, lam):
    Y = simulate_mixed(spec, psi, lam, 2000, np.random.default_rng(8))
    S = s_stats(spec, Y)
    for l in range(spec.L):
        V = S[:, l] / (psi * (lam * spec.e[l] + 1.0))
        assert stats.kstest(V, "chi2", args=(spec.r[l],)).statistic < 0.05


@settings(max_examples=40)
@given(lam=st.floats(0.01, 1e4), seed=st.integers(0, 100))
def test_lambda_mle_moment_match(lam, seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, 6))
    e = rng.uniform(0.1, 10, L)
    r = rng.integers(1, 6, L).astype(float)
    v = r * (lam * e + 1)
    got = lambda_mle(v, e, r)
    assert not got.unidentifiable
    assert got.value == pytest.approx(lam, rel=1e-6)
    w = got.value * e + 1
    assert abs(np.sum(e * (v - r * w) / (2 * w * w))) < 1e-8 * np.sum(e * r / w)


def test_lambda_mle_unidentifiable():
    assert lambda_mle([1.0, 2.0], [0.0, 0.0], [1, 2]) == (0.0, True)


@pytest.mark.parametrize("seed", range(5))
def test_lambda_mle_beats_grid(seed):
    rng = np.random.default_rng(seed)
    e = np.array([5.0, 3.0, 0.5])
    r = np.array([2.0, 1.0, 3.0])
    v = (rng.uniform(0, 5) * e + 1) * rng.chisquare(r)
    lam = lambda_mle(v, e, r).value
    grid = np.concatenate([[0.0], np.logspace(-4, 5, 10_000)])
    assert profile(lam, v, e, r) >= max(profile(g, v, e, r) for g in grid) - 1e-12


def test_lambda_mle_boundary_zero():
    e = np.array([4.0])
    r = np.array([5.0])
    assert lambda_mle([1.0], e, r).value == 0.0


def test_lambda_mle_rejects_bad_input():
    with pytest.raises(DomainError):
        lambda_mle([-1.0], [1.0], [1])
    with pytest.raises(ValueError):
        lambda_mle([1.0, 2.0], [1.0], [1])


@pytest.mark.parametrize("spec", [BALANCED, UNBALANCED])
def test_mixed_T_monotone_and_vanishing(spec):
    y = simulate_mixed(spec, 1.0, 1.0, 1, np.random.default_rng(3))[0]
    psi = np.logspace(-2, 2, 50)
    T = mixed_T(spec, y, psi)
    assert np.all(np.diff(T) <= 1e-12)
    assert mixed_T(spec, y, 1e12) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(DomainError):
        mixed_T(spec, y, 0.0)


def test_mixed_T_batch_matches_scalar():
    y = simulate_mixed(UNBALANCED, 1.0, 1.0, 1, np.random.default_rng(4))[0]
    psi = np.array([0.3, 1.0, 2.0])
    batch, lam = mixed_T(UNBALANCED, y, psi, full_output=True)
    for i, p in enumerate(psi):
        t, l = mixed_T(UNBALANCED, y, p, full_output=True)
        assert batch[i] == pytest.approx(t, abs=1e-12) and lam[i] == pytest.approx(l, rel=1e-10)


def test_T_at_truth_follows_F_lambda():
    spec = UNBALANCED
    Y = simulate_mixed(spec, 1.0, 1.0, 2000, np.random.default_rng(5))
    T = np.array([mixed_T(spec, y, 1.0) for y in Y])
    Z = f_lambda_cdf(spec, 1.0, M=2000, seed=9).sample
    assert stats.ks_2samp(T, Z).statistic < 0.06


def test_F_lambda_with_true_lambda_is_uniform():
    ecdf = f_lambda_cdf(BALANCED, 1.0, M=10_000, seed=0, true_lambda=True)
    assert stats.kstest(ecdf.sample, "uniform").statistic < 0.02


def test_F_lambda_depends_on_lambda_only_mildly():
    samples = {lam: f_lambda_cdf(WIDE, lam, M=2000, seed=1).sample for lam in (0.1, 1.0, 10.0, 100.0)}
    for s in samples.values():
        assert stats.kstest(s, "uniform").statistic < 0.2
    assert stats.ks_2samp(samples[0.1], samples[100.0]).statistic > 0.05


def test_F_lambda_deterministic_and_validated():
    a = f_lambda_cdf(UNBALANCED.with_index_set((2, 3, 4)), 2.0, M=1000, seed=4).sample
    b = f_lambda_cdf(UNBALANCED.with_index_set((2, 3, 4)), 2.0, M=1000, seed=4).sample
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        f_lambda_cdf(UNBALANCED, 1.0, M=999)
    ecdf = f_lambda_cdf(UNBALANCED, 1.0, M=1000, seed=0)
    assert ecdf(-1.0) == 0.0 and ecdf(2.0) == 1.0 and ecdf.left(2.0) == 1.0


def test_marginal_single_lambda_and_grid_monotonicity():
    spec = UNBALANCED
    y = simulate_mixed(spec, 1.0, 1.0, 1, np.random.default_rng(6))[0]
    psi = np.array([0.2, 0.7, 1.5, 4.0])
    F = f_lambda_cdf(spec, 3.0, M=2000, seed=0)
    T = mixed_T(spec, y, psi)
    # pooled atoms at the clip bounds make ties possible, hence the left limit
    single = 1 - np.maximum(2 * F.left(T) - 1, 0) - np.maximum(1 - 2 * F(T), 0)
    np.testing.assert_allclose(mixed_plaus_curve(spec, y, psi, [3.0], M=2000), single, atol=1e-12)
    grids = [DEFAULT_LAMBDA_GRID[::8], DEFAULT_LAMBDA_GRID[::4], DEFAULT_LAMBDA_GRID[::2], DEFAULT_LAMBDA_GRID]
    curves = [mixed_plaus_curve(spec, y, psi, g, M=2000) for g in grids]
    for small, big in zip(curves, curves[1:]):
        assert np.all(big >= small)
    assert mixed_marginal_plaus(spec, y, 0.7, M=2000) == curves[-1][1]


def test_interval_lower_endpoint_zero_when_pl_near_zero_exceeds_alpha():
    spec = UNBALANCED
    found = 0
    for seed in range(6):
        y = simulate_mixed(spec, 1.0, 1.0, 1, np.random.default_rng(seed))[0]
        region, grid, pl = mixed_interval(spec, y, 0.05, M=2000)
        assert region.metadata["lower_is_zero"] == (pl[0] > 0.05)
        if pl[0] > 0.05:
            found += 1
            assert region.intervals[0][0] == 0.0
        assert region.intervals == sorted(region.intervals)
    assert found > 0


def test_interval_lower_endpoint_positive_in_balanced_design():
    y = simulate_mixed(BALANCED, 1.0, 1.0, 1, np.random.default_rng(0))[0]
    region, grid, pl = mixed_interval(BALANCED, y, 0.05, M=2000)
    assert pl[0] <= 0.05 and not region.metadata["lower_is_zero"]
    (lo, hi), = region.intervals
    assert 0 < lo < hi
    inside = grid[(grid > lo) & (grid < hi)]
    assert np.all(mixed_plaus_curve(BALANCED, y, inside, M=2000) > 0.05)
