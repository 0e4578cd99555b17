"""The Bayes filter recursion, predictive estimates, likelihood ratios and oracles.

One step of the filter with the lagged channel reads

    pi_n(x) = sum_u Lambda(u, x) gamma(u, Y_n) pi_{n-1}(u) / c_n,
    c_n     = sum_v gamma(v, Y_n) pi_{n-1}(v),

so the observation reweights the previous posterior before it is pushed
through the signal kernel.
"""
import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from ._validation import check_observation_path
from .errors import MassLeak, NonFiniteResult, TooLarge, ZeroLikelihood, ZeroRho
from .measure import FiniteDistribution, GridDistribution
from .models import GridSpec, HmmModel, MultiplicativeChannel, SignalKernel

MASS_LEAK_TOL = 1e-6


# --- discretization --------------------------------------------------------

def ar1_transition_matrix(gs, a, b):
    """Cell-to-cell kernel of ``x' = a x + b eps`` from the midpoints of ``gs``.

    Row ``i`` holds the exact Gaussian mass of each cell given the state at
    midpoint ``i``, renormalized to absorb what falls outside the grid.
    """
    edges = gs.edges
    z = (edges[None, :] - a * gs.midpoints[:, None]) / b
    cdf = special.ndtr(z)
    # upper tail through the complement keeps far-right cells accurate
    upper = special.ndtr(-z)
    K = np.where(z[:, 1:] > 0, upper[:, :-1] - upper[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    K = np.clip(K, 0.0, None)
    K /= K.sum(axis=1, keepdims=True)
    return K


def prior_on_grid(prior, gs):
    """Cell masses of a continuous prior (anything with a ``cdf``)."""
    if isinstance(prior, GridDistribution):
        return prior
    cdf = np.asarray(prior.cdf(gs.edges), dtype=float)
    w = np.diff(cdf)
    if hasattr(prior, "sf"):
        # upper-tail cells from survival differences, which do not round to 0
        upper = cdf[1:] > 0.5
        w = np.where(upper, -np.diff(np.asarray(prior.sf(gs.edges), dtype=float)), w)
    w = np.clip(w, 0.0, None)
    leak = 1.0 - w.sum()
    if leak > MASS_LEAK_TOL:
        raise MassLeak(f"prior loses {leak:.3g} of its mass outside [{gs.lo}, {gs.hi}]")
    return GridDistribution(gs.midpoints, w / w.sum(), gs.width)


def discretize(model, gs):
    """Finite-state version of a continuous AR(1) model on the cells of ``gs``."""
    if model.signal.is_finite:
        raise ValueError("discretize expects a continuous model")
    a, b = model.signal.a, model.signal.b
    s = b / math.sqrt(1 - a * a)
    outside = special.ndtr(gs.lo / s) + special.ndtr(-gs.hi / s)
    if outside > MASS_LEAK_TOL:
        raise MassLeak(f"grid [{gs.lo}, {gs.hi}] misses {outside:.3g} of the stationary mass")
    mids = gs.midpoints
    if isinstance(model.channel, MultiplicativeChannel) and np.any(mids == 0):
        raise ValueError("a grid midpoint sits at 0 where the multiplicative channel is undefined")
    K = ar1_transition_matrix(gs, a, b)
    nu = prior_on_grid(model.nu, gs)
    return HmmModel(SignalKernel.finite(K), model.channel, nu, states=mids, grid=gs,
                    name=model.name, spec=model.spec, source=model)


# --- filter recursion ------------------------------------------------------

def predict(pi, kernel):
    """Push ``pi`` through the signal kernel."""
    if kernel.is_finite:
        K = kernel.matrix
    elif isinstance(pi, GridDistribution):
        lo = pi.grid[0] - pi.cell_width / 2
        gs = GridSpec(lo, lo + pi.cell_width * len(pi), len(pi))
        K = ar1_transition_matrix(gs, kernel.a, kernel.b)
    else:
        raise ValueError("continuous kernels act on grid distributions only")
    w = pi.weights @ K
    return pi.with_weights(w / w.sum())


def _reweight(log_lik, W):
    """``W * exp(log_lik)`` rescaled per row by the largest log-likelihood.

    Returns the scaled products and the log normalizers; the shift cancels
    in the posterior and is added back to the normalizer.
    """
    shift = np.max(log_lik, axis=-1, keepdims=True)
    finite = np.isfinite(shift)
    shift = np.where(finite, shift, 0.0)
    U = W * np.exp(log_lik - shift)
    s = U.sum(axis=-1)
    with np.errstate(divide="ignore"):
        log_c = np.where(s > 0, np.log(s), -np.inf) + shift[..., 0]
    return U, s, log_c


def batch_step(K, log_lik, W):
    """Filter update for a batch of posteriors (rows of ``W``).

    Returns the new posteriors and the log normalizers; rows with a zero
    normalizer come back unchanged and are left to the caller.
    """
    U, s, log_c = _reweight(log_lik, W)
    ok = s > 0
    U[ok] /= s[ok, None]
    U[~ok] = W[~ok]
    W_new = U @ K
    W_new /= W_new.sum(axis=1, keepdims=True)
    return W_new, log_c


def filter_step(model, pi_prev, y):
    """One Bayes update; returns the new posterior and the normalizer ``c``."""
    U, s, log_c = _reweight(np.asarray(model.log_likelihood(y), dtype=float), pi_prev.weights)
    if not s > 0:
        raise ZeroLikelihood(f"observation {y!r} has zero likelihood under the current posterior")
    w = (U / s) @ model.signal.matrix
    return pi_prev.with_weights(w / w.sum()), float(np.exp(log_c))


@dataclass(frozen=True, eq=False)
class FilterTrajectory:
    """Posteriors ``pi_0..pi_n`` (rows of ``weights``) and step normalizers ``c_1..c_n``.

    Normalizers are stored as logs; ``renorm_drift`` accumulates how far each
    propagated posterior strayed from unit mass before renormalization.
    """

    atoms: np.ndarray
    weights: np.ndarray
    log_normalizers: np.ndarray
    cell_width: Optional[float] = None
    renorm_drift: float = 0.0

    @property
    def log_likelihood(self):
        return float(np.sum(self.log_normalizers))

    @property
    def normalizers(self):
        return np.exp(self.log_normalizers)

    def __len__(self):
        return len(self.weights)

    def posterior(self, n):
        if self.cell_width is not None:
            return GridDistribution(self.atoms, self.weights[n], self.cell_width)
        return FiniteDistribution(self.atoms, self.weights[n])

    @property
    def posteriors(self):
        return [self.posterior(n) for n in range(len(self))]

    @property
    def means(self):
        return self.weights @ np.asarray(self.atoms, dtype=float)

    @property
    def variances(self):
        x = np.asarray(self.atoms, dtype=float)
        return self.weights @ (x * x) - self.means ** 2

    def to_csv(self, path, rho=None):
        """Write one row per step: mean, variance, per-atom masses (d <= 16), c_n, log rho_n."""
        d = self.weights.shape[1]
        header = ["step", "mean", "variance"]
        if d <= 16:
            header += [f"mass_{i}" for i in range(d)]
        header += ["c", "log_rho"]
        means, variances = self.means, self.variances
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for n in range(len(self)):
                row = [n, repr(float(means[n])), repr(float(variances[n]))]
                if d <= 16:
                    row += [repr(float(v)) for v in self.weights[n]]
                row.append("" if n == 0 else repr(float(self.normalizers[n - 1])))
                row.append("" if rho is None else repr(float(rho.log_values[n])))
                writer.writerow(row)
        return len(self)


def run_filter(model, init, y_path):
    """Run the recursion from ``init`` along ``y_path`` (``y_path[0]`` is ``Y_0``)."""
    y = check_observation_path(y_path)
    if not np.array_equal(init.atoms, model.states):
        raise ValueError("initial law does not live on the model's state carrier")
    K = model.signal.matrix
    n = len(y) - 1
    weights = np.empty((n + 1, len(model.states)))
    weights[0] = init.weights
    log_normalizers = np.empty(n)
    drift = 0.0
    w = init.weights
    for k in range(1, n + 1):
        u, s, log_c = _reweight(np.asarray(model.log_likelihood(y[k]), dtype=float), w)
        if not s > 0:
            raise ZeroLikelihood(f"zero likelihood at step {k}", step=k)
        w = (u / s) @ K
        total = w.sum()
        drift += abs(1.0 - total)
        w = w / total
        weights[k] = w
        log_normalizers[k - 1] = log_c
    width = model.grid.width if model.grid is not None else None
    return FilterTrajectory(model.states, weights, log_normalizers, width, drift)


def predictor(model, pi_prev, g):
    """One-step predictive estimate of ``g(Y_n)`` given the posterior ``pi_{n-1}``."""
    inner = model.channel.conditional_expectation(g, pi_prev.atoms)
    value = np.dot(pi_prev.weights, inner)
    if not np.isfinite(value):
        raise NonFiniteResult("predictive integral diverges on the support")
    return value.item()


@dataclass(frozen=True)
class RhoSeries:
    """Observation likelihood ratios ``rho_0..rho_n``, kept in log space."""

    log_values: np.ndarray

    @property
    def values(self):
        return np.exp(self.log_values)


def likelihood_ratio(traj_nu, traj_nu_bar):
    if len(traj_nu) != len(traj_nu_bar):
        raise ValueError("trajectories must run on the same observation path")
    if np.any(np.isneginf(traj_nu_bar.log_normalizers)):
        raise ZeroRho("path has zero likelihood under the filter prior")
    steps = traj_nu.log_normalizers - traj_nu_bar.log_normalizers
    return RhoSeries(np.concatenate([[0.0], np.cumsum(steps)]))


# --- independent oracles ---------------------------------------------------

def kalman_oracle(a, b, obs_noise_std, prior_mean, prior_var, y_path):
    """Exact moments of ``pi_n`` for ``X_n = a X_{n-1} + b eps_n``, ``Y_n = X_{n-1} + xi_n``.

    The observation at step n updates the lagged state before the prediction,
    so the pairs returned are the mean and variance of ``X_n | Y_1..Y_n``.
    """
    y = check_observation_path(y_path)
    R = obs_noise_std ** 2
    m, P = float(prior_mean), float(prior_var)
    out = [(m, P)]
    for yk in y[1:]:
        gain = 0.0 if math.isinf(R) else P / (P + R)
        m_upd = m + gain * (yk - m)
        P_upd = (1.0 - gain) * P
        m = a * m_upd
        P = a * a * P_upd + b * b
        out.append((m, P))
    return out


MAX_ENUMERATION = 10 ** 7


def _enumerate_joint(model, init, y):
    d = len(model.states)
    n = len(y) - 1
    if d ** (n + 1) > MAX_ENUMERATION:
        raise TooLarge(f"{d}^{n + 1} signal paths exceed {MAX_ENUMERATION}")
    paths = np.array(list(itertools.product(range(d), repeat=n + 1)), dtype=np.int64).reshape(-1, n + 1)
    weight = np.asarray(init.weights)[paths[:, 0]].copy()
    K = model.signal.matrix
    for k in range(1, n + 1):
        lik = np.asarray(model.likelihood(y[k]), dtype=float)
        weight *= lik[paths[:, k - 1]] * K[paths[:, k - 1], paths[:, k]]
    return paths, weight


def enumerate_posterior_oracle(model, y_path, init=None):
    """``P(X_n = x | Y_1..Y_n)`` by summing the joint law over every signal path."""
    y = check_observation_path(y_path)
    init = model.nu if init is None else init
    paths, weight = _enumerate_joint(model, init, y)
    marg = np.bincount(paths[:, -1], weights=weight, minlength=len(model.states))
    return FiniteDistribution(model.states, marg / marg.sum())


def enumerate_initial_posterior(model, y_path, init=None):
    """``P(X_0 = x | Y_1..Y_n)`` by brute force; used to check the likelihood ratio."""
    y = check_observation_path(y_path)
    init = model.nu if init is None else init
    paths, weight = _enumerate_joint(model, init, y)
    marg = np.bincount(paths[:, 0], weights=weight, minlength=len(model.states))
    return FiniteDistribution(model.states, marg / marg.sum())


def enumerate_path_probability(model, y_path, init=None):
    """Joint density of ``Y_1..Y_n`` (w.r.t. the observation reference measure)."""
    y = check_observation_path(y_path)
    init = model.nu if init is None else init
    return float(_enumerate_joint(model, init, y)[1].sum())
