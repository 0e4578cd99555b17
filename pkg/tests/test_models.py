import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from filterstab.errors import BadStochasticMatrix, NoConvergence, UnsupportedNoiseFamily
from filterstab.measure import FiniteDistribution
from filterstab.models import (
    AdditiveChannel, Categorical, GaussianPrior, MultiplicativeChannel, MultNoise, MultNoiseParams, Normal,
    PerStateChannel, SgParams, SignalKernel, abs_mean_xi, build_additive_model, build_finite_hmm,
    build_mult_noise_model, build_nonmixing_control, mult_noise_density, noise_from_record, prior_ratio_sup,
    sg_density, sg_normalizer, simulate_path, stationary_distribution,
)
from filterstab.stability import moment_matrix

# frozen from scipy.stats.norm.pdf(0.0)
GAUSS_PDF_0 = 0.3989422804014327
# sup of sg(0.7, (.5, .5)) / N(0, 1); agrees with the 2e6-point grid maximum below to 1e-9
SG_RATIO_SUP = 1.32978795501376


def test_finite_hmm_density(prop4_model):
    assert prop4_model.gamma(0, 0.0) == pytest.approx(GAUSS_PDF_0, abs=1e-15)
    assert prop4_model.gamma(1, 1.0) == pytest.approx(GAUSS_PDF_0, abs=1e-15)


def test_finite_hmm_rejects_bad_matrix():
    with pytest.raises(BadStochasticMatrix):
        build_finite_hmm([[0.6, 0.3], [0.3, 0.7]], obs_dists=(Normal(), Normal()))
    with pytest.raises(BadStochasticMatrix):
        build_finite_hmm([[1.2, -0.2], [0.3, 0.7]], obs_dists=(Normal(), Normal()))


def test_unsupported_noise_family():
    with pytest.raises(UnsupportedNoiseFamily):
        noise_from_record({"kind": "cauchy"})
    with pytest.raises(UnsupportedNoiseFamily):
        PerStateChannel(np.arange(2), (Normal(), MultNoise(1.0)))


def test_identical_channel_is_valid_and_singular():
    control = build_nonmixing_control()
    assert control.signal.matrix.min() == 0
    assert moment_matrix(control.channel.dists).is_singular()


def test_mult_noise_model_values():
    model = build_mult_noise_model(MultNoiseParams(0.8, 0.5, 1.0, SgParams(1.0, (1.0,))))
    # p(1) / 2 = e^-1 / 2 for rho = 1
    assert model.gamma(2.0, 2.0) == pytest.approx(0.18393972058572117, abs=1e-15)
    assert model.gamma(1.0, 0.0) == 0.0
    x = np.linspace(-4, 4, 81)
    np.testing.assert_allclose(sg_density(x, model.nu), stats.norm.pdf(x), rtol=0, atol=1e-15)


def test_mult_noise_params_invariants():
    with pytest.raises(ValueError):
        MultNoiseParams(1.0, 0.5, 1.0, SgParams(1.0))
    with pytest.raises(ValueError):
        MultNoiseParams(0.5, 0.5, 0.0, SgParams(1.0))
    with pytest.raises(ValueError):
        SgParams(1.0, (0.5, 0.6))


def test_additive_model_values():
    model = build_additive_model(SignalKernel.ar1(0.8, 0.5), lambda x: x, Normal(0.0, 2.0))
    assert model.gamma(1.0, 1.0) == pytest.approx(1 / (2.0 * math.sqrt(2 * math.pi)), abs=1e-15)
    flat = AdditiveChannel(lambda x: 0.0 * np.asarray(x), Normal(0.0, 1.0))
    np.testing.assert_array_equal(flat.density(np.array([-3.0, 0.0, 5.0]), 0.7),
                                  np.full(3, flat.density(np.array([0.0]), 0.7)[0]))


def test_mult_noise_density_closed_forms():
    assert mult_noise_density(0.0, 1.0) == 0.0
    mass = sum(integrate.quad(lambda x: mult_noise_density(x, 1.0), lo, hi, limit=200)[0]
               for lo, hi in ((-np.inf, -1), (-1, 0), (0, 1), (1, np.inf)))
    assert mass == pytest.approx(1.0, abs=1e-8)
    # tail P(|xi| > t) = 1 - exp(-rho / t^2)
    tail = 2 * integrate.quad(lambda x: mult_noise_density(x, 1.0), 2.0, np.inf)[0]
    assert tail == pytest.approx(1 - math.exp(-0.25), abs=1e-10)
    assert abs_mean_xi(1.0) == pytest.approx(math.sqrt(math.pi), abs=1e-6)


@pytest.mark.parametrize("rho", [0.5, 1.0, 4.0])
def test_abs_mean_scale_invariance(rho):
    assert abs_mean_xi(rho) / math.sqrt(rho) == pytest.approx(math.sqrt(math.pi), abs=1e-8)


def test_sg_normalizers_match_gaussian_moments():
    for i, expected in ((0, 1.0), (1, 1.0), (2, 3.0), (3, 15.0)):
        assert sg_normalizer(i) == expected
    for i in range(1, 6):
        moment = integrate.quad(lambda x: x ** (2 * i) * stats.norm.pdf(x), -np.inf, np.inf, epsabs=1e-12)[0]
        assert sg_normalizer(i) == pytest.approx(moment, abs=1e-8)


@given(st.floats(0.2, 3.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5).filter(lambda a: sum(a) > 0.01))
def test_sg_density_integrates_to_one(sigma, raw):
    alpha = np.array(raw) / sum(raw)
    alpha[-1] = 1.0 - alpha[:-1].sum()
    p = SgParams(sigma, tuple(np.clip(alpha, 0, None)))
    mass = integrate.quad(lambda x: sg_density(x, p), -10 * sigma, 10 * sigma, epsabs=1e-13, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert float(p.cdf(0.0)) == 0.5


def test_sg_sampler_matches_mean_abs():
    p = SgParams(0.7, (0.5, 0.5))
    draws = p.sample(np.random.default_rng(5), size=200_000)
    assert np.mean(np.abs(draws)) == pytest.approx(p.mean_abs(), abs=4 * np.std(np.abs(draws)) / math.sqrt(2e5))


def test_sg_ratio_matches_dense_grid():
    x = np.linspace(-12, 12, 2_000_001)
    dense = np.max(sg_density(x, SgParams(0.7, (0.5, 0.5))) / stats.norm.pdf(x))
    analytic = prior_ratio_sup(SgParams(0.7, (0.5, 0.5)), GaussianPrior(0.0, 1.0))
    assert analytic == pytest.approx(dense, rel=0.05)
    assert analytic == pytest.approx(SG_RATIO_SUP, rel=1e-12)


@pytest.mark.parametrize("sigma_bar, bounded", [(1.0, True), (0.7, False), (0.5, False)])
def test_sg_ratio_bounded_iff_wider_filter_prior(sigma_bar, bounded):
    assert math.isfinite(prior_ratio_sup(SgParams(0.7, (0.5, 0.5)), GaussianPrior(0.0, sigma_bar))) == bounded


def test_stationary_examples():
    np.testing.assert_allclose(stationary_distribution(np.array([[0.7, 0.3], [0.3, 0.7]])).weights,
                               [0.5, 0.5], atol=1e-13)
    np.testing.assert_allclose(stationary_distribution(np.array([[0.9, 0.1], [0.5, 0.5]])).weights,
                               [5 / 6, 1 / 6], atol=1e-13)
    with pytest.raises(NoConvergence):
        stationary_distribution(np.eye(2))
    with pytest.raises(NoConvergence):
        stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))


@given(st.integers(2, 6), st.integers(0, 10 ** 6))
def test_stationary_is_invariant(d, seed):
    P = np.random.default_rng(seed).dirichlet(np.ones(d), size=d)
    mu = stationary_distribution(P).weights
    np.testing.assert_allclose(mu @ P, mu, rtol=0, atol=1e-12)


def _channel_mass(channel, state):
    if channel.alphabet is not None:
        return float(channel.density(np.array([state]), channel.alphabet).sum())
    f = lambda y: float(channel.density(np.array([state]), y)[0])
    return sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in ((-np.inf, 0), (0, np.inf)))


@pytest.mark.parametrize("channel, states", [
    (PerStateChannel(np.arange(2), (Normal(0, 1), Normal(1, 2))), [0, 1]),
    (PerStateChannel(np.arange(2), (Categorical((0, 1, 2), (0.2, 0.3, 0.5)), Categorical((1, 3), (0.5, 0.5)))), [0, 1]),
    (AdditiveChannel(np.tanh, Normal(0.0, 0.5)), [-2.0, 0.1, 3.0]),
    (MultiplicativeChannel(1.0), [-1.5, 0.05, 2.0]),
])
def test_channels_are_densities(channel, states):
    for u in states:
        assert _channel_mass(channel, u) == pytest.approx(1.0, abs=1e-8)


def test_simulate_is_deterministic(prop4_model):
    a = simulate_path(prop4_model, 30, 11)
    b = simulate_path(prop4_model, 30, 11)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert a[1][0] == 0.0
    with pytest.raises(ValueError):
        simulate_path(prop4_model, 0, 1)


def test_simulate_frozen_signal():
    model = build_finite_hmm(np.eye(2), obs_dists=(Normal(), Normal(1.0)),
                             nu=FiniteDistribution(np.arange(2), [1.0, 0.0]))
    x, _ = simulate_path(model, 20, 3)
    assert np.all(x == 0)


def test_simulate_marginals(prop4_model):
    model = build_finite_hmm([[0.9, 0.1], [0.4, 0.6]], obs_dists=(Normal(), Normal(1.0)),
                             nu=FiniteDistribution(np.arange(2), [0.2, 0.8]))
    rng = np.random.default_rng(2024)
    n, draws = 3, 100_000
    hits = np.zeros(2)
    for _ in range(draws):
        hits[simulate_path(model, n, rng)[0][n]] += 1
    target = model.nu.weights @ np.linalg.matrix_power(model.signal.matrix, n)
    se = np.sqrt(target * (1 - target) / draws)
    assert np.all(np.abs(hits / draws - target) <= 3 * se)


def test_simulate_additive_clt():
    model = build_additive_model(SignalKernel.ar1(0.8, 0.5), lambda x: x, Normal(0.0, 1.0),
                                 nu=FiniteDistribution(np.array([0.0]), [1.0]))
    rng = np.random.default_rng(99)
    y1 = np.array([simulate_path(model, 1, rng)[1][1] for _ in range(100_000)])
    assert abs(y1.mean()) <= 0.01
