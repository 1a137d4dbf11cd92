import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from quadcatch.errors import DegenerateDataError, InvalidInputError
from quadcatch.gmm import (
    DemoDataset,
    GaussianComponent,
    GaussianMixture,
    bic,
    fit_em,
    log_density,
    log_likelihood,
    n_parameters,
    read_dataset,
    read_mixture,
    select_k,
    synthetic_demos,
    write_dataset,
    write_mixture,
)


def random_spd(rng, scale=0.05):
    A = rng.normal(0, scale, (3, 3))
    return A @ A.T + scale**2 * np.eye(3)


def random_mixture(rng, K):
    w = rng.dirichlet(np.ones(K))
    comps = tuple(GaussianComponent(float(wk), rng.normal(0, 0.3, 3), random_spd(rng)) for wk in w)
    # dirichlet weights can miss 1 by an ulp
    s = sum(c.weight for c in comps)
    return GaussianMixture(tuple(GaussianComponent(c.weight / s, c.mean, c.covariance) for c in comps))


@settings(max_examples=30, deadline=None)
@given(K=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_density_matches_scipy(K, seed):
    rng = np.random.default_rng(seed)
    mix = random_mixture(rng, K)
    X = rng.normal(0, 0.3, (20, 3))
    expect = np.log(sum(c.weight * multivariate_normal(c.mean, c.covariance).pdf(X) for c in mix.components))
    np.testing.assert_allclose(log_density(mix, X), expect, rtol=1e-10, atol=1e-10)
    assert log_density(mix, X[0]) == pytest.approx(expect[0], rel=1e-10)


def test_component_validation():
    with pytest.raises(InvalidInputError):
        GaussianComponent(1.0, np.zeros(3), np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidInputError):
        GaussianComponent(1.0, np.zeros(3), np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1.0]]))
    with pytest.raises(InvalidInputError):
        GaussianMixture((GaussianComponent(0.5, np.zeros(3), np.eye(3)),))


def test_single_component_em_is_closed_form():
    rng = np.random.default_rng(4)
    X = rng.normal([0.3, 0.0, -0.05], [0.05, 0.04, 0.03], (100, 3))
    mix = fit_em(DemoDataset(X), 1)
    np.testing.assert_allclose(mix.means[0], X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(mix.covariances[0], np.cov(X.T, bias=True), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(K=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_em_log_likelihood_non_decreasing(K, seed):
    rng = np.random.default_rng(seed)
    X = random_mixture(rng, 3).means[rng.integers(0, 3, 80)] + rng.normal(0, 0.05, (80, 3))
    hist = np.array(fit_em(DemoDataset(X), K, seed=seed).log_likelihood_history)
    assert np.all(np.diff(hist) >= -1e-9 * np.abs(hist[1:]).max())


def test_em_recovers_separated_clusters():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal([0, 0, 0], 0.02, (60, 3)), rng.normal([0.5, 0.2, 0], 0.02, (40, 3))])
    mix = fit_em(DemoDataset(X), 2, seed=1)
    order = np.argsort(mix.means[:, 0])
    np.testing.assert_allclose(mix.means[order], [[0, 0, 0], [0.5, 0.2, 0]], atol=0.01)
    np.testing.assert_allclose(mix.weights[order], [0.6, 0.4], atol=1e-6)
    assert mix.converged


def test_bic_picks_one_and_two():
    rng = np.random.default_rng(5)
    one = DemoDataset(rng.normal(0, [0.05, 0.04, 0.03], (100, 3)))
    assert select_k(one).K == 1
    two = DemoDataset(np.vstack([rng.normal(0, 0.02, (50, 3)), rng.normal(0.4, 0.02, (50, 3))]))
    assert select_k(two).K == 2


def test_bic_formula():
    rng = np.random.default_rng(2)
    data = DemoDataset(rng.normal(0, 1, (50, 3)))
    mix = fit_em(data, 1)
    assert n_parameters(1) == 9 and n_parameters(2) == 19
    assert bic(mix, data) == pytest.approx(9 * np.log(50) - 2 * log_likelihood(mix, data))


def test_covariance_floor_on_planar_data():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.normal(0, 0.1, (30, 2)), np.zeros(30)])
    mix = fit_em(DemoDataset(X), 1)
    assert np.linalg.eigvalsh(mix.covariances[0]).min() >= 1e-6 * (1 - 1e-9)


def test_too_few_distinct_points():
    X = np.repeat([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 10, axis=0)
    with pytest.raises(DegenerateDataError):
        fit_em(DemoDataset(X), 2)


def test_weights_sum_to_one():
    rng = np.random.default_rng(8)
    mix = fit_em(DemoDataset(rng.normal(0, 1, (60, 3))), 3)
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_synthetic_demos_respect_acceptance():
    data = synthetic_demos([0, 0, 0], [0.1, 0.1, 0.1], n=200, seed=1, accept=lambda p: p[:, 0] > 0)
    assert len(data) == 200 and data.points[:, 0].min() > 0
    with pytest.raises(DegenerateDataError):
        synthetic_demos([0, 0, 0], [0.1, 0.1, 0.1], n=10, accept=lambda p: np.zeros(len(p), bool))


def test_dataset_round_trip(tmp_path):
    data = synthetic_demos([0.3, 0, 0], [0.05, 0.05, 0.05], n=20, seed=3)
    write_dataset(data, tmp_path / "d.txt")
    np.testing.assert_array_equal(read_dataset(tmp_path / "d.txt").points, data.points)


def test_dataset_reader_reports_line(tmp_path):
    (tmp_path / "d.txt").write_text("0 0 0\n1 2\n")
    with pytest.raises(InvalidInputError, match=":2:"):
        read_dataset(tmp_path / "d.txt")


def test_mixture_round_trip(tmp_path):
    mix = random_mixture(np.random.default_rng(9), 2)
    write_mixture(mix, tmp_path / "m.json")
    back = read_mixture(tmp_path / "m.json")
    np.testing.assert_array_equal(back.means, mix.means)
    np.testing.assert_array_equal(back.covariances, mix.covariances)


def test_shifted_mixture_moves_density():
    mix = random_mixture(np.random.default_rng(1), 2)
    v = np.array([0.1, -0.2, 0.3])
    x = np.array([0.05, 0.0, 0.1])
    assert log_density(mix.shifted(v), x + v) == pytest.approx(log_density(mix, x))
