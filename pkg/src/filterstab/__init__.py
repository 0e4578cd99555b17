"""Stability of nonlinear filters started from the wrong prior.

Finite and grid-discretized hidden Markov models, the exact Bayes filter,
likelihood-ratio and predictor diagnostics, Monte-Carlo stability series and
a reproducible experiment harness.
"""
from .errors import *  # noqa: F401,F403
from .estimator import BayesFilter
from .filtering import (
    FilterTrajectory, RhoSeries, ar1_transition_matrix, discretize, enumerate_initial_posterior,
    enumerate_path_probability, enumerate_posterior_oracle, filter_step, kalman_oracle, likelihood_ratio,
    predict, predictor, prior_on_grid, run_filter,
)
from .harness import ExperimentConfig, RunManifest, canned_experiments, load_config, run_experiment
from .measure import (
    DensityRatio, FiniteDistribution, GridDistribution, density_ratio, expect, l1_tv, normalize, same_carrier,
)
from .models import (
    AdditiveChannel, Categorical, GaussianPrior, GridSpec, HmmModel, MultiplicativeChannel, MultNoise,
    MultNoiseParams, Normal, PerStateChannel, SgParams, SignalKernel, abs_mean_xi, build_additive_model,
    build_finite_hmm, build_mult_noise_model, build_nonmixing_control, mult_noise_density, prior_ratio_sup,
    sg_density, sg_normalizer, simulate_path, stationary_distribution, with_prior,
)
from .seeding import RNG_ALGORITHM, derive_seed
from .stability import (
    ConditionReport, MixingReport, MomentMatrix, StabilitySeries, char_func_series, check_conditions,
    martingale_diff_series, mixing_constants, moment_matrix, predictor_stability_series, rate_bound, solve_g,
    tv_stability_series, weak_stability_series, write_series_csv,
)

__version__ = "0.1.0"
