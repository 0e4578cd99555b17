"""Stability diagnostics for a filter started from the wrong prior.

Monte-Carlo series draw observation paths under the true prior and feed the
same path to both filters, so every metric is a paired, path-wise distance.
Where the observation alphabet is finite and the horizon short, the same
quantities are computed exactly by walking the tree of observation paths.
"""
import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CharZero, DegenerateSeries, NoConvergence
from .filtering import batch_step, prior_on_grid
from .measure import FiniteDistribution, GridDistribution, density_ratio
from .models import (
    AdditiveChannel,
    Categorical,
    Normal,
    SignalKernel,
    prior_ratio_sup,
    quadrature_moment,
    simulate_path,
    stationary_distribution,
    with_prior,
)
from .seeding import derive_seed

SOLVE_G_TOL = 1e-8
CHAR_ZERO_TOL = 1e-10
MAX_ENUMERATION_DEPTH = 8
CHUNK = 64


# --- mixing ----------------------------------------------------------------

@dataclass(frozen=True)
class MixingReport:
    lambda_star: float
    lambda_sup: float
    lambda_circ: Optional[float]
    rate_star: float
    rate_circ: Optional[float]

    def to_dict(self):
        return dict(self.__dict__)


def mixing_constants(kernel):
    """Two-sided density bounds of a finite kernel and the averaged lower bound.

    ``lambda_circ`` weights each row's minimum by the invariant law and is
    None when the chain has no unique limit law.
    """
    P = kernel.matrix if isinstance(kernel, SignalKernel) else SignalKernel.finite(kernel).matrix
    lo, hi = float(P.min()), float(P.max())
    try:
        mu = stationary_distribution(P).weights
        circ = float(np.dot(mu, P.min(axis=1)))
    except NoConvergence:
        circ = None
    return MixingReport(lo, hi, circ, -lo / hi, None if circ is None else -circ / hi)


# --- moment matrix and the integral equation -------------------------------

@dataclass(frozen=True, eq=False)
class MomentMatrix:
    entries: np.ndarray
    condition_number: float

    @property
    def det(self):
        return float(np.linalg.det(self.entries))

    def is_singular(self, rcond=1e-12):
        return not self.condition_number < 1.0 / rcond


def moment_matrix(obs_dists, d=None, method="closed"):
    """``B[i-1, j] = E xi(j)**i`` for ``i = 1..d``.

    ``method="quadrature"`` integrates every entry numerically and raises
    MomentDivergence when a moment does not exist.
    """
    d = len(obs_dists) if d is None else d
    B = np.empty((d, len(obs_dists)))
    for j, dist in enumerate(obs_dists):
        for i in range(1, d + 1):
            if method == "quadrature" or not isinstance(dist, (Normal, Categorical)):
                if isinstance(dist, Categorical):
                    B[i - 1, j] = dist.raw_moment(i)
                else:
                    B[i - 1, j] = quadrature_moment(dist.pdf, i)
            else:
                B[i - 1, j] = dist.raw_moment(i)
    sv = np.linalg.svd(B, compute_uv=False)
    cond = math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])
    return MomentMatrix(B, cond)


@dataclass(frozen=True, eq=False)
class TabulatedFunction:
    """A function on a finite observation alphabet."""

    alphabet: np.ndarray
    values: np.ndarray

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        pos = np.clip(np.searchsorted(self.alphabet, y), 0, len(self.alphabet) - 1)
        if not np.all(self.alphabet[pos] == y):
            raise KeyError("observation outside the alphabet")
        out = self.values[pos]
        return out if out.ndim else float(out)


def solve_g(f, channel, states):
    """Least-squares solution of ``f(x) = sum_y g(y) gamma(x, y)`` over a finite alphabet.

    Returns ``(g, residual)`` with ``residual = max |Gamma g - f|``; a
    residual above ``SOLVE_G_TOL`` means no solution exists.
    """
    if channel.alphabet is None:
        raise ValueError("solve_g needs a finite observation alphabet")
    states = np.asarray(getattr(states, "atoms", states))
    G = channel.density(states, channel.alphabet).T
    fx = np.asarray([f(x) for x in states], dtype=float)
    square = G.shape[0] == G.shape[1] and np.linalg.cond(G) < 1e12
    g = np.linalg.solve(G, fx) if square else np.linalg.lstsq(G, fx, rcond=None)[0]
    residual = float(np.max(np.abs(G @ g - fx)))
    return TabulatedFunction(channel.alphabet, g), residual


def channel_matrix(channel, states):
    """``Gamma[x, y] = gamma(x, y)`` on a finite alphabet, e.g. ``[[0.8, 0.2], [0.3, 0.7]]``."""
    return channel.density(np.asarray(states), channel.alphabet).T


# --- predictor-stability conditions ----------------------------------------

@dataclass
class ConditionReport:
    g_bounded: bool
    g_bound: float
    ratio_bounded: bool
    ratio_sup: float
    ratio_p_norm: Optional[tuple]
    g_ui_moment: Optional[tuple]
    ui_method: str
    notes: list = field(default_factory=list)

    @property
    def condition_i(self):
        return self.g_bounded

    @property
    def condition_ii(self):
        # surrogate: a finite (1+eps)-moment bound stands in for uniform integrability
        return self.ratio_bounded and self.g_ui_moment is not None and math.isfinite(self.g_ui_moment[1])

    @property
    def condition_iii(self):
        return (self.ratio_p_norm is not None and math.isfinite(self.ratio_p_norm[1])
                and self.g_ui_moment is not None and math.isfinite(self.g_ui_moment[1]))

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items()}
        out.update(condition_i=self.condition_i, condition_ii=self.condition_ii,
                   condition_iii=self.condition_iii, ui_label="surrogate")
        return _jsonable(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _g_bound(g, channel, states):
    if channel.alphabet is not None:
        reachable = channel.density(states, channel.alphabet).max(axis=1) > 0
        vals = np.abs(np.asarray([g(y) for y in channel.alphabet[reachable]], dtype=float))
        return True, float(vals.max()), True
    probes = np.concatenate([[0.0], np.logspace(-3, 8, 45), -np.logspace(-3, 8, 45)])
    vals = np.abs(np.asarray([g(y) for y in probes], dtype=float))
    far, near = vals[np.abs(probes) >= 1e7].max(), vals[np.abs(probes) <= 1e4].max()
    bounded = bool(np.all(np.isfinite(vals)) and far <= 2 * max(near, 1e-300))
    return bounded, float(vals.max()) if bounded else math.inf, False


def check_conditions(model, nu, nu_bar, g, horizon, eps=0.5, p=2.0, trials=200, seed=0):
    """Evidence for the three alternative sufficient conditions for predictor stability.

    Uniform integrability is replaced by the moment bound
    ``sup_{n <= horizon} E_bar |g(Y_n)|^(1+eps)``: exact marginal recursion
    for finite models, Monte-Carlo under the filter prior otherwise.
    """
    notes = []
    w_nu, w_bar = _prior_weights(model, nu), _prior_weights(model, nu_bar)
    ratio = density_ratio(w_nu, w_bar, p=p)
    if model.grid is None:
        ratio_sup, ratio_bounded = ratio.sup_bound, True
    else:
        analytic = prior_ratio_sup(nu, nu_bar) if hasattr(nu, "pdf") and hasattr(nu_bar, "pdf") else None
        if analytic is None:
            ratio_sup, ratio_bounded = ratio.sup_bound, True
            notes.append("ratio bound: estimate only (grid maximum)")
        else:
            ratio_sup, ratio_bounded = analytic, math.isfinite(analytic)
        notes.append("ratio p-norm: estimate only (grid cell masses)")

    g_ok, g_sup, exact = _g_bound(g, model.channel, model.states)
    if not exact:
        notes.append("g bound: estimate only (probed on a log grid)")

    q = 1.0 + eps
    if model.grid is None:
        mu = w_bar.weights
        inner = model.channel.conditional_expectation(lambda y: np.abs(g(y)) ** q, model.states)
        moments = []
        for _ in range(horizon):
            moments.append(float(np.dot(mu, inner)))
            mu = mu @ model.signal.matrix
        method = "exact"
    else:
        sim = with_prior(model.source, nu_bar if hasattr(nu_bar, "cdf") else w_bar)
        acc = np.zeros(horizon)
        for t in range(trials):
            _, y = simulate_path(sim, horizon, derive_seed(seed, t))
            acc += np.abs(np.asarray([g(v) for v in y[1:]], dtype=float)) ** q
        moments = list(acc / trials)
        method = "monte-carlo"
        notes.append("uniform-integrability moment: estimate only (Monte-Carlo)")
    return ConditionReport(g_ok, g_sup, ratio_bounded, ratio_sup, ratio.p_norm,
                           (q, float(max(moments))), method, notes)


# --- stability series ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StabilitySeries:
    n_values: np.ndarray
    metric: np.ndarray
    std_err: np.ndarray
    trials: int
    metric_kind: str
    failures: tuple = ()
    label: str = ""

    def at(self, n):
        return float(self.metric[np.flatnonzero(self.n_values == n)[0]])

    @property
    def failed_fraction(self):
        return len(self.failures) / max(self.trials + len(self.failures), 1)

    def rows(self, model_id, fg_id, seed):
        for n, m, s in zip(self.n_values, self.metric, self.std_err):
            yield [int(n), repr(float(m)), repr(float(s)), self.trials, self.metric_kind, model_id, fg_id, seed]

    CSV_HEADER = ["n", "metric", "std_err", "trials", "metric_kind", "model_id", "f_or_g_id", "seed"]


@dataclass
class _Metric:
    kind: str
    timing: str  # "posterior" (pi_n), "predictive" (pi_{n-1}) or "ratio" (rho_n - rho_{n-1})
    weights: Optional[np.ndarray] = None  # per-state values; None means total variation
    law: str = "true"

    def value(self, W, Wb):
        if self.weights is None:
            return np.abs(W - Wb).sum(axis=1)
        if np.all(self.weights == self.weights[0]):
            # a constant integrates to itself under any probability measure
            return np.zeros(W.shape[0])
        return np.abs((W - Wb) @ self.weights)


def _prior_weights(model, nu):
    if model.grid is not None and not isinstance(nu, GridDistribution):
        return prior_on_grid(nu, model.grid)
    if isinstance(nu, (FiniteDistribution, GridDistribution)):
        if not np.array_equal(nu.atoms, model.states):
            raise ValueError("prior does not live on the model's state carrier")
        return nu
    raise TypeError(f"cannot place prior {nu!r} on a finite carrier")


def _simulation_model(model, nu):
    if model.grid is not None:
        return with_prior(model.source, nu)
    return with_prior(model, nu)


def _aggregate(per_trial, alive):
    """Mean and standard error per step, summing in trial order with ``math.fsum``."""
    rows = per_trial[alive]
    m = rows.shape[0]
    means = np.array([math.fsum(col) / m for col in rows.T]) if m else np.full(per_trial.shape[1], np.nan)
    if m > 1:
        dev = rows - means
        var = np.array([math.fsum(col) for col in dev.T * dev.T]) / (m - 1)
        se = np.sqrt(var / m)
    else:
        se = np.zeros(per_trial.shape[1])
    return means, se


def run_paired_trials(model, nu, nu_bar, metrics, trials, n_max, seed, workers=None, trial_ids=None):
    """Per-trial metric paths for both filters on shared simulated observations.

    Returns ``(values, failures, alive)``: ``values[kind]`` has shape
    ``(len(trial_ids), n_max + 1)`` (NaN where undefined), ``failures``
    lists ``(trial, step)`` for trials whose filter hit a zero normalizer and
    ``alive`` masks the rows that did not fail.
    """
    density_ratio(_prior_weights(model, nu), _prior_weights(model, nu_bar))
    w0, w0b = _prior_weights(model, nu).weights, _prior_weights(model, nu_bar).weights
    K = model.signal.matrix
    ids = list(range(trials)) if trial_ids is None else list(trial_ids)
    laws = {m.law for m in metrics}
    sims = {"true": _simulation_model(model, nu), "filter": _simulation_model(model, nu_bar)}
    # one chunk per CHUNK consecutive trial indices keeps results independent of workers
    chunks = {}
    for pos, t in enumerate(ids):
        chunks.setdefault(t // CHUNK, []).append(pos)

    def work(law, positions):
        sim = sims[law]
        mets = [m for m in metrics if m.law == law]
        Y = np.stack([simulate_path(sim, n_max, derive_seed(seed, ids[p]))[1] for p in positions])
        b = len(positions)
        W = np.tile(w0, (b, 1))
        Wb = np.tile(w0b, (b, 1))
        out = {m.kind: np.full((b, n_max + 1), np.nan) for m in mets}
        log_rho = np.zeros(b)
        fail_step = np.zeros(b, dtype=np.int64)
        for n in range(n_max + 1):
            if n > 0:
                for m in mets:
                    if m.timing == "predictive":
                        out[m.kind][:, n] = m.value(W, Wb)
                log_lik = model.log_likelihood(Y[:, n])
                W, lc = batch_step(K, log_lik, W)
                Wb, lcb = batch_step(K, log_lik, Wb)
                bad = (np.isneginf(lc) | np.isneginf(lcb)) & (fail_step == 0)
                fail_step[bad] = n
                prev = log_rho
                with np.errstate(invalid="ignore"):
                    log_rho = log_rho + lc - lcb
                for m in mets:
                    if m.timing == "ratio":
                        out[m.kind][:, n] = np.abs(np.exp(log_rho) - np.exp(prev))
            for m in mets:
                if m.timing == "posterior":
                    out[m.kind][:, n] = m.value(W, Wb)
        return positions, out, fail_step

    workers = workers or int(os.environ.get("FILTERSTAB_WORKERS", "1"))
    jobs = [(law, positions) for law in sorted(laws) for _, positions in sorted(chunks.items())]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: work(*job), jobs))
    else:
        results = [work(*job) for job in jobs]

    values = {m.kind: np.full((len(ids), n_max + 1), np.nan) for m in metrics}
    failed = np.zeros(len(ids), dtype=np.int64)
    for positions, out, fail_step in results:
        for kind, arr in out.items():
            values[kind][positions] = arr
        failed[positions] = np.maximum(failed[positions], fail_step)
    failures = tuple((ids[p], int(failed[p])) for p in np.flatnonzero(failed))
    return values, failures, failed == 0


def _series_from_trials(values, failures, alive, metric, n_start, label=""):
    means, se = _aggregate(values[:, n_start:], alive)
    n_values = np.arange(n_start, values.shape[1])
    return StabilitySeries(n_values, means, se, int(alive.sum()), metric.kind, failures, label)


# exact enumeration over observation paths

@dataclass(frozen=True, eq=False)
class TreeLevel:
    """All observation prefixes of one length with both filters' posteriors."""

    letters: np.ndarray      # (paths, n) indices into the alphabet
    W: np.ndarray            # (paths, d) posteriors under the true prior
    Wb: np.ndarray           # (paths, d) posteriors under the filter prior
    log_p: np.ndarray        # log P(y_1..y_n)
    log_pb: np.ndarray       # log P_bar(y_1..y_n)

    @property
    def rho(self):
        with np.errstate(invalid="ignore"):
            return np.exp(self.log_p - self.log_pb)


def enumerate_observation_tree(model, nu, nu_bar, n_max):
    """Levels 0..n_max of the observation tree for a finite-alphabet model."""
    alphabet = model.channel.alphabet
    if alphabet is None:
        raise ValueError("exact enumeration needs a finite observation alphabet")
    w0, w0b = _prior_weights(model, nu).weights, _prior_weights(model, nu_bar).weights
    K = model.signal.matrix
    lik = model.channel.density(model.states, alphabet)  # (k, d)
    k = len(alphabet)
    level = TreeLevel(np.zeros((1, 0), dtype=np.int64), w0[None, :], w0b[None, :], np.zeros(1), np.zeros(1))
    levels = [level]
    for _ in range(n_max):
        m, d = level.W.shape
        children = []
        for post in (level.W, level.Wb):
            U = post[:, None, :] * lik[None, :, :]
            c = U.sum(axis=2)
            safe = np.where(c > 0, c, 1.0)
            nxt = np.where((c > 0)[:, :, None], U / safe[:, :, None], post[:, None, :])
            nxt = nxt.reshape(m * k, d) @ K
            nxt /= nxt.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore"):
                children.append((nxt, np.log(c).reshape(m * k)))
        (W, lc), (Wb, lcb) = children
        letters = np.concatenate([np.repeat(level.letters, k, axis=0),
                                  np.tile(np.arange(k), m)[:, None]], axis=1)
        level = TreeLevel(letters, W, Wb, np.repeat(level.log_p, k) + lc, np.repeat(level.log_pb, k) + lcb)
        levels.append(level)
    return levels


def _enumerated_series(model, nu, nu_bar, metric, n_max):
    if n_max > MAX_ENUMERATION_DEPTH:
        raise ValueError(f"exact enumeration is limited to n <= {MAX_ENUMERATION_DEPTH}")
    levels = enumerate_observation_tree(model, nu, nu_bar, n_max)
    vals = np.full(n_max + 1, np.nan)
    for n in range(n_max + 1):
        if metric.timing == "ratio":
            if n == 0:
                continue
            child, parent = levels[n], levels[n - 1]
            k = len(model.channel.alphabet)
            diff = np.abs(child.rho - np.repeat(parent.rho, k))
            prob = np.exp(child.log_pb)
        elif metric.timing == "predictive":
            if n == 0:
                continue
            lvl = levels[n - 1]
            diff, prob = metric.value(lvl.W, lvl.Wb), np.exp(lvl.log_p)
        else:
            lvl = levels[n]
            diff, prob = metric.value(lvl.W, lvl.Wb), np.exp(lvl.log_p)
        keep = prob > 0
        vals[n] = math.fsum(prob[keep] * diff[keep])
    start = 0 if metric.timing == "posterior" else 1
    n_values = np.arange(start, n_max + 1)
    paths = len(model.channel.alphabet) ** n_max
    return StabilitySeries(n_values, vals[start:], np.zeros(len(n_values)), paths, metric.kind, (), "exact")


def _run_series(model, nu, nu_bar, metric, trials, n_max, seed, method, workers):
    if method == "auto":
        finite = model.channel.alphabet is not None and n_max <= MAX_ENUMERATION_DEPTH
        method = "enumerate" if finite else "montecarlo"
    if method == "enumerate":
        density_ratio(_prior_weights(model, nu), _prior_weights(model, nu_bar))
        return _enumerated_series(model, nu, nu_bar, metric, n_max)
    values, failures, alive = run_paired_trials(model, nu, nu_bar, [metric], trials, n_max, seed, workers)
    start = 0 if metric.timing == "posterior" else 1
    return _series_from_trials(values[metric.kind], failures, alive, metric, start, "monte-carlo")


def _state_values(fn, states):
    x = np.asarray(states)
    try:
        out = np.asarray(fn(x))
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([fn(v) for v in x])


def weak_metric(model, f):
    return _Metric("weak-f", "posterior", _state_values(f, model.states).astype(float))


def tv_metric():
    return _Metric("tv", "posterior")


def predictor_metric(model, g):
    return _Metric("predictor-g", "predictive", model.channel.conditional_expectation(g, model.states))


def char_metric(model, t):
    return _Metric(f"char-t={t!r}", "posterior", np.exp(1j * t * np.asarray(model.states, dtype=float)))


def rho_metric():
    return _Metric("rho-diff", "ratio", law="filter")


def weak_stability_series(model, nu, nu_bar, f, trials, n_max, seed, method="montecarlo", workers=None):
    """``E|pi_n(f) - pi_bar_n(f)|`` for ``n = 0..n_max`` under the true law."""
    return _run_series(model, nu, nu_bar, weak_metric(model, f), trials, n_max, seed, method, workers)


def tv_stability_series(model, nu, nu_bar, trials, n_max, seed, method="montecarlo", workers=None):
    return _run_series(model, nu, nu_bar, tv_metric(), trials, n_max, seed, method, workers)


def predictor_stability_series(model, nu, nu_bar, g, trials, n_max, seed, method="montecarlo", workers=None):
    """``E|eta_{n|n-1}(g) - eta_bar_{n|n-1}(g)|`` for ``n = 1..n_max``."""
    return _run_series(model, nu, nu_bar, predictor_metric(model, g), trials, n_max, seed, method, workers)


def martingale_diff_series(model, nu, nu_bar, n_max, trials=None, seed=0, method="auto", workers=None):
    """``E_bar|rho_n - rho_{n-1}|``: exact for finite alphabets, else Monte-Carlo under the filter prior."""
    if method == "auto" and trials is not None and model.channel.alphabet is None:
        method = "montecarlo"
    return _run_series(model, nu, nu_bar, rho_metric(), trials or 0, n_max, seed, method, workers)


def char_func_series(model, nu, nu_bar, t_values, trials, n_max, seed, workers=None):
    """``E|pi_n(e^{itx}) - pi_bar_n(e^{itx})|`` per frequency, for the additive linear model."""
    channel = model.channel
    if not isinstance(channel, AdditiveChannel):
        raise ValueError("characteristic-function series need an additive channel")
    for t in t_values:
        if abs(channel.noise.char_func(t)) < CHAR_ZERO_TOL:
            raise CharZero(f"noise characteristic function vanishes at t={t!r}")
    metrics = [char_metric(model, t) for t in t_values]
    values, failures, alive = run_paired_trials(model, nu, nu_bar, metrics, trials, n_max, seed, workers)
    return {t: _series_from_trials(values[m.kind], failures, alive, m, 0, "monte-carlo") for t, m in zip(t_values, metrics)}


def rate_bound(series, report, slack=0.1, floor=1e-14):
    """Fit the exponential decay rate of a TV series and compare it with ``rate_star``.

    The slope of ``log(metric)`` against ``n`` is fitted on the last half of
    the range where the metric stays above ``floor``; below it both filters
    agree to rounding. Returns ``(slope, satisfied)``; a series that
    coalesces before three points are available returns ``(-inf, True)``.
    """
    n = np.asarray(series.n_values)
    m = np.asarray(series.metric, dtype=float)
    keep = n >= 1
    n, m = n[keep], m[keep]
    below = np.flatnonzero(~(m > floor))
    end = below[0] if below.size else len(m)
    if end < 3:
        if below.size:
            return -math.inf, True
        raise DegenerateSeries("need at least three positive points to fit a rate")
    start = end // 2
    if end - start < 2:
        start = end - 2
    slope = float(np.polyfit(n[start:end], np.log(m[start:end]), 1)[0])
    return slope, slope <= report.rate_star + slack


def write_series_csv(path, series_list):
    """Write ``(series, model_id, fg_id, seed)`` tuples to one CSV; returns the data-row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(StabilitySeries.CSV_HEADER)
        for series, model_id, fg_id, seed in series_list:
            for row in series.rows(model_id, fg_id, seed):
                writer.writerow(row)
                rows += 1
    return rows
