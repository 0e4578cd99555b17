import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from filterstab.errors import MassLeak, TooLarge, ZeroLikelihood, ZeroRho
from filterstab.filtering import (
    discretize, enumerate_initial_posterior, enumerate_posterior_oracle, filter_step, kalman_oracle,
    likelihood_ratio, predict, predictor, prior_on_grid, run_filter,
)
from filterstab.measure import FiniteDistribution, GridDistribution, expect
from filterstab.models import (
    Categorical, GaussianPrior, GridSpec, MultNoiseParams, Normal, SgParams, SignalKernel, build_additive_model,
    build_finite_hmm, build_mult_noise_model, simulate_path, stationary_distribution, with_prior,
)
from filterstab.stability import enumerate_observation_tree, moment_matrix


def two_letter_model(matrix, p0, p1, nu=(0.5, 0.5)):
    dists = (Categorical((0, 1), (p0, 1 - p0)), Categorical((0, 1), (p1, 1 - p1)))
    return build_finite_hmm(matrix, obs_dists=dists, nu=FiniteDistribution(np.arange(2), nu))


def linear_model(nu=GaussianPrior(1.0, 0.5)):
    return build_additive_model(SignalKernel.ar1(0.8, 0.5), lambda x: x, Normal(0.0, 1.0), nu=nu)


# --- predict ----------------------------------------------------------------

def test_predict_finite_examples():
    pi = FiniteDistribution(np.arange(2), [0.2, 0.8])
    np.testing.assert_array_equal(predict(pi, SignalKernel.finite(np.eye(2))).weights, pi.weights)
    delta = FiniteDistribution(np.arange(2), [1.0, 0.0])
    np.testing.assert_allclose(predict(delta, SignalKernel.finite([[0.7, 0.3], [0.3, 0.7]])).weights,
                               [0.7, 0.3], atol=1e-15)


def test_predict_grid_point_mass_matches_gaussian_cdf():
    gs = GridSpec(-5.0, 5.0, 2048)
    mids = gs.midpoints
    # the grid avoids 0, so the point mass sits on the nearest midpoint
    i0 = int(np.argmin(np.abs(mids)))
    w = np.zeros(gs.cells)
    w[i0] = 1.0
    out = predict(GridDistribution(mids, w, gs.width), SignalKernel.ar1(0.8, 0.5))
    exact = np.diff(stats.norm.cdf(gs.edges, loc=0.8 * mids[i0], scale=0.5))
    assert np.max(np.abs(out.weights - exact)) < 1e-6
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)


@given(st.integers(2, 6), st.integers(0, 10 ** 6))
def test_tower_property(d, seed):
    rng = np.random.default_rng(seed)
    K = rng.dirichlet(np.ones(d), size=d)
    pi = FiniteDistribution(np.arange(d), rng.dirichlet(np.ones(d)))
    f = rng.normal(size=d)
    lhs = expect(predict(pi, SignalKernel.finite(K)), lambda x: f[x])
    rhs = expect(pi, lambda u: (K @ f)[u])
    assert lhs == pytest.approx(rhs, abs=1e-12)


# --- filter_step / run_filter -----------------------------------------------

def test_filter_step_hand_bayes():
    model = two_letter_model(np.eye(2), 0.8, 0.3)
    post, c = filter_step(model, model.nu, 0.0)
    np.testing.assert_allclose(post.weights, [8 / 11, 3 / 11], atol=1e-15)
    assert c == pytest.approx(0.55, abs=1e-15)


def test_filter_step_uninformative_is_prediction():
    model = two_letter_model([[0.6, 0.4], [0.1, 0.9]], 0.3, 0.3, nu=(0.25, 0.75))
    post, c = filter_step(model, model.nu, 1.0)
    np.testing.assert_allclose(post.weights, predict(model.nu, model.signal).weights, atol=1e-15)
    assert c == pytest.approx(0.7, abs=1e-15)


def test_filter_step_zero_likelihood():
    model = two_letter_model(np.eye(2), 0.0, 0.5)
    with pytest.raises(ZeroLikelihood):
        filter_step(model, FiniteDistribution(np.arange(2), [1.0, 0.0]), 0.0)


def test_run_filter_reports_step():
    model = two_letter_model(np.eye(2), 0.0, 0.5, nu=(1.0, 0.0))
    with pytest.raises(ZeroLikelihood) as info:
        run_filter(model, model.nu, [0.0, 1.0, 1.0, 0.0])
    assert info.value.step == 3


def test_run_filter_trivial_cases(prop4_model, prop4_priors):
    nu, _ = prop4_priors
    traj = run_filter(prop4_model, nu, [0.0])
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.weights[0], nu.weights)
    _, y = simulate_path(prop4_model, 25, 4)
    a, b = run_filter(prop4_model, nu, y), run_filter(prop4_model, nu, y)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.log_likelihood == pytest.approx(float(np.sum(np.log(a.normalizers))), abs=1e-10)
    np.testing.assert_allclose(a.weights.sum(axis=1), 1.0, atol=1e-10)
    with pytest.raises(ValueError):
        run_filter(prop4_model, nu, [1.0, 0.5])


def test_run_filter_matches_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(5):
        K = rng.dirichlet(np.ones(3), size=3)
        dists = tuple(Categorical((0, 1, 2, 3), tuple(rng.dirichlet(np.ones(4)))) for _ in range(3))
        model = build_finite_hmm(K, obs_dists=dists, nu=FiniteDistribution(np.arange(3), rng.dirichlet(np.ones(3))))
        _, y = simulate_path(model, 5, rng)
        traj = run_filter(model, model.nu, y)
        for k in range(1, 6):
            oracle = enumerate_posterior_oracle(model, y[: k + 1])
            assert np.max(np.abs(traj.weights[k] - oracle.weights)) <= 1e-12


def test_enumeration_oracle_examples(prop4_model, prop4_priors):
    nu, _ = prop4_priors
    y = [0.0, 0.4]
    np.testing.assert_allclose(enumerate_posterior_oracle(prop4_model, y, nu).weights,
                               filter_step(prop4_model, nu, 0.4)[0].weights, atol=1e-15)
    flat = two_letter_model([[0.6, 0.4], [0.1, 0.9]], 0.3, 0.3, nu=(0.25, 0.75))
    path = [0.0, 1.0, 0.0, 0.0, 1.0]
    np.testing.assert_allclose(enumerate_posterior_oracle(flat, path).weights,
                               flat.nu.weights @ np.linalg.matrix_power(flat.signal.matrix, 4), atol=1e-15)
    with pytest.raises(TooLarge):
        enumerate_posterior_oracle(build_finite_hmm(np.full((10, 10), 0.1), obs_dists=(Normal(),) * 10),
                                   np.zeros(8))


def test_long_path_stays_finite(prop4_model, prop4_priors):
    nu, nu_bar = prop4_priors
    _, y = simulate_path(prop4_model, 2000, 1)
    a, b = run_filter(prop4_model, nu, y), run_filter(prop4_model, nu_bar, y)
    assert math.isfinite(a.log_likelihood) and a.log_likelihood < -1000
    assert np.all(np.isfinite(likelihood_ratio(a, b).log_values))


def test_tiny_multiplicative_observation_does_not_underflow():
    model = build_mult_noise_model(MultNoiseParams(0.8, 0.5, 1.0, SgParams(0.7, (0.5, 0.5))))
    grid_model = discretize(model, GridSpec(-6.0, 6.0, 2048))
    # every grid state puts ~exp(-1e10) mass here; only the log-space update survives
    post, c = filter_step(grid_model, grid_model.nu, 1e-6)
    assert np.all(np.isfinite(post.weights)) and post.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert c == 0.0
    traj = run_filter(grid_model, grid_model.nu, [0.0, 1e-6, 0.3])
    assert np.isfinite(traj.log_normalizers[0]) and traj.log_normalizers[0] < -1e4


def test_trajectory_csv(tmp_path, prop4_model, prop4_priors):
    nu, nu_bar = prop4_priors
    _, y = simulate_path(prop4_model, 5, 2)
    a, b = run_filter(prop4_model, nu, y), run_filter(prop4_model, nu_bar, y)
    rows = a.to_csv(tmp_path / "t.csv", likelihood_ratio(a, b))
    with open(tmp_path / "t.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["step", "mean", "variance", "mass_0", "mass_1", "c", "log_rho"]
    assert rows == len(table) - 1 == 6
    assert table[1][5] == "" and float(table[1][6]) == 0.0


# --- predictor --------------------------------------------------------------

def test_predictor_examples(prop4_model):
    pi = FiniteDistribution(prop4_model.states, [0.5, 0.5])
    assert predictor(prop4_model, pi, lambda y: np.ones_like(np.asarray(y, dtype=float))) == pytest.approx(1.0, abs=1e-12)
    assert predictor(prop4_model, pi, lambda y: y) == pytest.approx(0.5, abs=1e-12)
    grid_model = discretize(linear_model(), GridSpec(-6.0, 6.0, 256))
    post = grid_model.nu
    assert predictor(grid_model, post, lambda y: y) == pytest.approx(expect(post, lambda x: x), abs=1e-10)


@given(st.floats(0.0, 1.0))
def test_predictor_moment_identity(p):
    prop4_model = build_finite_hmm([[0.7, 0.3], [0.3, 0.7]], obs_dists=(Normal(0.0, 1.0), Normal(1.0, 1.0)))
    pi = FiniteDistribution(prop4_model.states, [p, 1 - p])
    B = moment_matrix(prop4_model.channel.dists).entries
    for i in (1, 2):
        value = predictor(prop4_model, pi, lambda y, i=i: np.asarray(y, dtype=float) ** i)
        assert value == pytest.approx(float(B[i - 1] @ pi.weights), abs=1e-10)


# --- likelihood ratio -------------------------------------------------------

def test_rho_identical_priors(prop4_model, prop4_priors):
    nu, _ = prop4_priors
    _, y = simulate_path(prop4_model, 20, 6)
    traj = run_filter(prop4_model, nu, y)
    np.testing.assert_array_equal(likelihood_ratio(traj, traj).values, np.ones(21))


def test_rho_matches_conditional_expectation():
    model = two_letter_model([[0.8, 0.2], [0.35, 0.65]], 0.75, 0.2, nu=(0.3, 0.7))
    nu_bar = FiniteDistribution(model.states, [0.6, 0.4])
    ratio = model.nu.weights / nu_bar.weights
    bar_model = with_prior(model, nu_bar)
    for seed in range(4):
        _, y = simulate_path(bar_model, 8, seed)
        rho = likelihood_ratio(run_filter(model, model.nu, y), run_filter(model, nu_bar, y)).values
        assert rho[0] == 1.0
        for k in range(1, 9):
            post0 = enumerate_initial_posterior(bar_model, y[: k + 1]).weights
            assert rho[k] == pytest.approx(float(post0 @ ratio), abs=1e-12)


def test_rho_martingale_and_product_identity():
    model = two_letter_model([[0.8, 0.2], [0.35, 0.65]], 0.75, 0.2, nu=(0.3, 0.7))
    nu_bar = FiniteDistribution(model.states, [0.6, 0.4])
    levels = enumerate_observation_tree(model, model.nu, nu_bar, 6)
    g = np.array([1.5, -0.25])
    for n in range(1, 7):
        child, parent = levels[n], levels[n - 1]
        step = np.exp(child.log_pb - np.repeat(parent.log_pb, 2)).reshape(-1, 2)
        rho = child.rho.reshape(-1, 2)
        np.testing.assert_allclose((step * rho).sum(axis=1), parent.rho, rtol=0, atol=1e-12)
        # rho_{n-1} eta_{n|n-1}(g) = E_bar(g(Y_n) rho_n | F_{n-1})
        eta = parent.W @ model.channel.conditional_expectation(lambda y: g[np.asarray(y, dtype=int)], model.states)
        np.testing.assert_allclose((step * rho * g).sum(axis=1), parent.rho * eta, rtol=0, atol=1e-12)


def test_zero_rho_on_impossible_path():
    model = two_letter_model(np.eye(2), 1.0, 0.5, nu=(0.5, 0.5))
    y = [0.0, 1.0]
    a = run_filter(model, model.nu, y)
    b = run_filter(model, FiniteDistribution(model.states, [0.5, 0.5]), y)
    assert likelihood_ratio(a, b).values[1] == 1.0
    impossible = run_filter(model, FiniteDistribution(model.states, [1.0, 0.0]), [0.0, 0.0])
    fake = type(impossible)(impossible.atoms, impossible.weights, np.array([-np.inf]))
    with pytest.raises(ZeroRho):
        likelihood_ratio(impossible, fake)


# --- discretization and the Kalman oracle -----------------------------------

def test_discretize_rows_and_leak():
    grid_model = discretize(linear_model(), GridSpec(-5.0, 5.0, 2048))
    np.testing.assert_allclose(grid_model.signal.matrix.sum(axis=1), 1.0, rtol=0, atol=1e-14)
    with pytest.raises(MassLeak):
        discretize(linear_model(), GridSpec(-0.5, 0.5, 64))
    with pytest.raises(MassLeak):
        prior_on_grid(GaussianPrior(5.0, 1.0), GridSpec(-3.0, 3.0, 64))


def test_discretized_stationary_variance():
    grid_model = discretize(linear_model(), GridSpec(-5.0, 5.0, 2048))
    mu = stationary_distribution(grid_model.signal).weights
    x = grid_model.states
    var = mu @ x ** 2 - (mu @ x) ** 2
    assert var == pytest.approx(0.25 / (1 - 0.64), abs=1e-3)


def test_kalman_examples():
    out = kalman_oracle(1.0, 0.0, 1.0, 0.0, 1.0, [0.0, 2.0])
    assert out[1] == pytest.approx((1.0, 0.5), abs=1e-15)
    blind = kalman_oracle(0.8, 0.5, math.inf, 1.0, 0.25, [0.0, 3.0, -2.0])
    assert blind[2][0] == pytest.approx(0.64, abs=1e-15)
    assert blind[2][1] == pytest.approx(0.64 ** 2 * 0.25 + 0.64 * 0.25 + 0.25, abs=1e-15)


def test_grid_filter_matches_kalman():
    model = linear_model()
    grid_model = discretize(model, GridSpec(-6.0, 6.0, 2048))
    _, y = simulate_path(model, 100, 31)
    means = run_filter(grid_model, grid_model.nu, y).means
    kal = np.array(kalman_oracle(0.8, 0.5, 1.0, 1.0, 0.25, y))
    assert np.max(np.abs(means - kal[:, 0])) <= 1e-4


def test_grid_convergence():
    model = linear_model()
    _, y = simulate_path(model, 50, 12)
    moments = []
    for cells in (1024, 2048):
        traj = run_filter(discretize(model, GridSpec(-6.0, 6.0, cells)), prior_on_grid(model.nu, GridSpec(-6.0, 6.0, cells)), y)
        x = traj.atoms
        moments.append(np.stack([traj.weights @ x, traj.weights @ x ** 2]))
    assert np.max(np.abs(moments[0] - moments[1])) < 1e-4


def test_far_tail_cells_keep_positive_mass():
    gs = GridSpec(-5.0, 5.0, 256)
    for prior in (GaussianPrior(0.0, 0.6), SgParams(0.6, (0.5, 0.5))):
        w = prior_on_grid(prior, gs).weights
        assert np.all(w > 0)
        # the outermost cells against a direct upper-tail integral
        assert w[-1] == pytest.approx((prior.sf(gs.edges[-2]) - prior.sf(gs.edges[-1])) / w.sum(), rel=1e-12)
    edges = np.linspace(-3, 3, 13)
    sg = SgParams(0.8, (0.2, 0.5, 0.3))
    np.testing.assert_allclose(sg.cdf(edges) + sg.sf(edges), 1.0, rtol=0, atol=1e-15)
