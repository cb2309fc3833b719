import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genim import DomainError
from genim.models import TriangularModel, tri_mle, tri_simulate
from genim.models.triangular import tri_loglik


def brute_loglik(y, theta):
    dens = np.where(y <= theta, 2 * y / theta, 2 * (1 - y) / (1 - theta))
    with np.errstate(divide="ignore"):
        return np.log(dens).sum()


def test_singleton():
    assert tri_mle([0.3]) == 0.3


def test_mle_dominates_dense_grid():
    y = tri_simulate(0.3, 10, seed=11)
    th = tri_mle(y)
    grid = np.linspace(1e-5, 1 - 1e-5, 100_000)
    assert tri_loglik(y, th) >= max(brute_loglik(y, t) for t in grid[::7]) - 1e-12
    ll = np.array([tri_loglik(y, t) for t in grid[::50]])
    assert tri_loglik(y, th) >= ll.max()


@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=12))
def test_mle_is_best_data_point(y):
    y = np.array(y)
    th = tri_mle(y)
    assert th in y
    vals = np.array([brute_loglik(y, t) for t in y])
    assert brute_loglik(y, th) >= vals.max() - 1e-9 * max(1.0, abs(vals.max()))


def test_ties_pick_smallest():
    y = np.array([0.25, 0.75])
    assert tri_loglik(y, 0.25) == pytest.approx(tri_loglik(y, 0.75))
    assert tri_mle(y) == 0.25
    assert tri_mle(np.array([0.75, 0.25])) == 0.25


def test_out_of_range_data():
    with pytest.raises(DomainError):
        tri_mle([0.2, 1.3])
    with pytest.raises(DomainError):
        tri_simulate(1.5, 3, 0)


@pytest.mark.parametrize("theta,mean", [(0.0, 1 / 3), (1.0, 2 / 3)])
def test_simulated_means(theta, mean):
    y = tri_simulate(theta, 1_000_000, seed=1)
    se = np.sqrt(1 / 18) / np.sqrt(y.size)
    assert abs(y.mean() - mean) <= 3 * se
    assert np.all((y >= 0) & (y <= 1))


def test_cdf_at_mode_equals_mode():
    y = tri_simulate(0.3, 1_000_000, seed=2)
    assert abs(np.mean(y <= 0.3) - 0.3) <= 3 * np.sqrt(0.21 / y.size)


def test_loglik_finite_on_interior_for_simulated_data():
    model = TriangularModel(10)
    y = model.simulate([0.4], 200, np.random.default_rng(0))
    for t in (0.01, 0.4, 0.99):
        assert np.all(np.isfinite(model.loglik(y, [t])))
