import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from filterstab.estimator import BayesFilter
from filterstab.filtering import discretize, run_filter
from filterstab.measure import FiniteDistribution
from filterstab.models import GaussianPrior, GridSpec, Normal, SignalKernel, build_additive_model, simulate_path


def paths(model, n, count):
    return np.stack([simulate_path(model, n, seed)[1] for seed in range(count)])


def test_params_and_clone(prop4_model, prop4_priors):
    est = BayesFilter(prop4_model, prior=prop4_priors[1])
    params = est.get_params()
    assert params["model"] is prop4_model and params["grid"] is None
    twin = clone(est)
    np.testing.assert_array_equal(twin.prior.weights, prop4_priors[1].weights)
    assert not hasattr(twin, "model_")


def test_matches_run_filter(prop4_model, prop4_priors):
    nu_bar = prop4_priors[1]
    X = paths(prop4_model, 25, 4)
    est = BayesFilter(prop4_model, prior=nu_bar).fit(X)
    means = est.transform(X)
    assert means.shape == (4, 26)
    for row, m in zip(X, means):
        traj = run_filter(prop4_model, nu_bar, row)
        np.testing.assert_array_equal(m, traj.means)
    np.testing.assert_array_equal(est.predict(X), means[:, -1])
    lik = np.mean([run_filter(prop4_model, nu_bar, row).log_likelihood for row in X])
    assert est.score(X) == pytest.approx(lik, abs=1e-12)


def test_default_prior_is_model_prior(prop4_model):
    X = paths(prop4_model, 10, 2)
    est = BayesFilter(prop4_model).fit(X)
    assert isinstance(est.prior_, FiniteDistribution)
    np.testing.assert_array_equal(est.prior_.weights, prop4_model.nu.weights)


def test_continuous_model_on_grid():
    model = build_additive_model(SignalKernel.ar1(0.8, 0.5), lambda x: x, Normal(0.0, 1.0), nu=GaussianPrior(0.0, 1.0))
    X = paths(model, 10, 3)
    est = BayesFilter(model, grid=(-6.0, 6.0, 512)).fit(X)
    assert est.n_states_ == 512
    grid_model = discretize(model, GridSpec(-6.0, 6.0, 512))
    expected = run_filter(grid_model, grid_model.nu, X[1]).means
    np.testing.assert_allclose(est.transform(X)[1], expected, rtol=0, atol=1e-12)


def test_validation(prop4_model):
    with pytest.raises(ValueError):
        BayesFilter().fit()
    model = build_additive_model(SignalKernel.ar1(0.8, 0.5), lambda x: x, Normal(0.0, 1.0))
    with pytest.raises(ValueError):
        BayesFilter(model).fit()
    with pytest.raises(NotFittedError):
        BayesFilter(prop4_model).transform(np.zeros((1, 3)))
    est = BayesFilter(prop4_model).fit()
    with pytest.raises(ValueError):
        est.transform(np.array([[1.0, 0.5, 0.2]]))  # Y_0 must be 0
    with pytest.raises(ValueError):
        est.transform(np.array([[0.0, np.nan]]))
