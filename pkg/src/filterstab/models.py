"""Signal kernels, observation channels and the model constructors.

Observations follow the lagged convention: ``Y_n`` is emitted from the
state ``X_{n-1}``, and ``Y_0 = 0`` carries no information.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from ._validation import check_probability_vector, check_stochastic_matrix
from .errors import (
    BadStochasticMatrix,
    MomentDivergence,
    NoConvergence,
    UnsupportedNoiseFamily,
)
from .measure import FiniteDistribution, normalize

SQRT_2PI = math.sqrt(2 * math.pi)


def quadrature_moment(pdf, order, absolute=False):
    """Raw moment ``E xi**order`` of a density on the real line by adaptive quadrature."""
    if absolute:
        integrand = lambda x: abs(x) ** order * pdf(x)
    else:
        integrand = lambda x: x ** order * pdf(x)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
                value, err = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500)
                if not np.isfinite(value) or err > 1e-6 * max(1.0, abs(value)):
                    raise MomentDivergence(f"moment of order {order} did not converge")
                total += value
        except integrate.IntegrationWarning as exc:
            raise MomentDivergence(f"moment of order {order} did not converge: {exc}") from None
    return total


def quadrature_char_func(pdf, t):
    re = integrate.quad(lambda x: math.cos(t * x) * pdf(x), -np.inf, np.inf, limit=500)[0]
    im = integrate.quad(lambda x: math.sin(t * x) * pdf(x), -np.inf, np.inf, limit=500)[0]
    return complex(re, im)


# --- observation noise families -------------------------------------------

@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    def pdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * SQRT_2PI)

    def sample(self, rng, size=None):
        return self.mean + self.std * rng.standard_normal(size)

    def raw_moment(self, order):
        # E(m + s Z)^k expanded with the even moments of Z
        total = 0.0
        for j in range(0, order + 1, 2):
            total += math.comb(order, j) * self.mean ** (order - j) * self.std ** j * _double_factorial(j - 1)
        return total

    def char_func(self, t):
        return complex(np.exp(1j * t * self.mean - 0.5 * (t * self.std) ** 2))

    def to_record(self):
        return {"kind": "normal", "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class Categorical:
    """Finite observation law on the letters ``values``."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = check_probability_vector(self.probs, name="probs")
        if len(values) != len(probs) or len(set(values)) != len(values):
            raise ValueError("values must be distinct and match probs")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", tuple(probs.tolist()))

    def pdf(self, y):
        table = dict(zip(self.values, self.probs))
        y = np.asarray(y, dtype=float)
        return np.vectorize(lambda v: table.get(float(v), 0.0), otypes=[float])(y)

    def sample(self, rng, size=None):
        idx = rng.choice(len(self.values), size=size, p=self.probs)
        return np.asarray(self.values)[idx]

    def raw_moment(self, order):
        return float(sum(p * v ** order for v, p in zip(self.values, self.probs)))

    def char_func(self, t):
        return complex(sum(p * np.exp(1j * t * v) for v, p in zip(self.values, self.probs)))

    def to_record(self):
        return {"kind": "categorical", "values": list(self.values), "probs": list(self.probs)}


def mult_noise_density(x, rho):
    """Density ``rho/|x|^3 exp(-rho/x^2)`` of the multiplicative noise, zero at the origin."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    ax = np.abs(x[nz])
    out[nz] = rho / ax ** 3 * np.exp(-rho / ax ** 2)
    return out if out.ndim else float(out)


def abs_mean_xi(rho):
    """``E|xi|`` for the multiplicative noise, by quadrature."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    # the integrand |x| p(x) decays like x^-2; integrate on u = 1/x instead
    value, _ = integrate.quad(lambda u: rho * math.exp(-rho * u * u), 0.0, np.inf, epsabs=1e-14, epsrel=1e-13)
    return 2.0 * value


@dataclass(frozen=True)
class MultNoise:
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    def pdf(self, y):
        return mult_noise_density(y, self.rho)

    def sample(self, rng, size=None):
        # P(|xi| > t) = 1 - exp(-rho/t^2), so |xi| = sqrt(rho/E) with E ~ Exp(1)
        e = rng.standard_exponential(size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * np.sqrt(self.rho / e)

    def raw_moment(self, order):
        return quadrature_moment(self.pdf, order)

    def abs_mean(self):
        return abs_mean_xi(self.rho)

    def char_func(self, t):
        return quadrature_char_func(self.pdf, t)

    def to_record(self):
        return {"kind": "mult-noise", "rho": self.rho}


def noise_from_record(record):
    kind = record.get("kind")
    if kind == "normal":
        return Normal(float(record.get("mean", 0.0)), float(record.get("std", 1.0)))
    if kind == "categorical":
        return Categorical(tuple(record["values"]), tuple(record["probs"]))
    if kind == "mult-noise":
        return MultNoise(float(record["rho"]))
    raise UnsupportedNoiseFamily(f"unknown noise family {kind!r}")


# --- priors on the real line -----------------------------------------------

def _double_factorial(k):
    return 1 if k <= 0 else math.prod(range(k, 0, -2))


def sg_normalizer(i):
    """Normalizer ``C_{2i} = (2i-1)!!`` of the i-th Serial Gaussian term."""
    if i < 0:
        raise ValueError("i must be nonnegative")
    return float(_double_factorial(2 * i - 1))


@dataclass(frozen=True)
class SgParams:
    """Serial Gaussian density: even polynomial times a centred Gaussian."""

    sigma: float
    alpha: tuple = (1.0,)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        alpha = check_probability_vector(self.alpha, name="alpha", tol=1e-12)
        object.__setattr__(self, "alpha", tuple(alpha.tolist()))

    def pdf(self, x):
        return sg_density(x, self)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        s = x * x / (2 * self.sigma ** 2)
        half = sum(a * special.gammainc(i + 0.5, s) for i, a in enumerate(self.alpha))
        return 0.5 + 0.5 * np.sign(x) * half

    def sf(self, x):
        # upper tail through the regularized complement, exact far out
        x = np.asarray(x, dtype=float)
        s = x * x / (2 * self.sigma ** 2)
        lo = sum(a * special.gammainc(i + 0.5, s) for i, a in enumerate(self.alpha))
        hi = sum(a * special.gammaincc(i + 0.5, s) for i, a in enumerate(self.alpha))
        return np.where(x > 0, 0.5 * hi, 0.5 + 0.5 * lo)

    def sample(self, rng, size=None):
        # term i is sigma * (+-) sqrt(chi^2 with 2i+1 dof)
        i = rng.choice(len(self.alpha), size=size, p=self.alpha)
        chi = np.sqrt(rng.chisquare(2 * np.asarray(i) + 1))
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return self.sigma * sign * chi

    def mean_abs(self):
        # E|Z|^{2i+1} / (2i-1)!!  =  sqrt(2/pi) * 2^i i! / (2i-1)!!
        return self.sigma * math.sqrt(2 / math.pi) * sum(
            a * 2 ** i * math.factorial(i) / sg_normalizer(i) for i, a in enumerate(self.alpha)
        )

    def to_record(self):
        return {"kind": "sg", "sigma": self.sigma, "alpha": list(self.alpha)}


def sg_density(x, p):
    x = np.asarray(x, dtype=float)
    z2 = (x / p.sigma) ** 2
    poly = sum(a * z2 ** i / sg_normalizer(i) for i, a in enumerate(p.alpha))
    return poly * np.exp(-0.5 * z2) / (p.sigma * SQRT_2PI)


@dataclass(frozen=True)
class GaussianPrior:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    def pdf(self, x):
        return Normal(self.mean, self.std).pdf(x)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def sf(self, x):
        return special.ndtr((self.mean - np.asarray(x, dtype=float)) / self.std)

    def sample(self, rng, size=None):
        return self.mean + self.std * rng.standard_normal(size)

    def to_record(self):
        return {"kind": "gaussian", "mean": self.mean, "std": self.std}


def prior_ratio_sup(nu, nu_bar):
    """Supremum over the line of ``nu.pdf / nu_bar.pdf``; ``inf`` when unbounded.

    Handles Gaussian/Gaussian and SG/centred-Gaussian pairs in closed form
    (roots of a polynomial); other pairs return ``None``.
    """
    if isinstance(nu, SgParams) and isinstance(nu_bar, SgParams) and len(nu_bar.alpha) == 1:
        nu_bar = GaussianPrior(0.0, nu_bar.sigma)
    if isinstance(nu, GaussianPrior) and isinstance(nu_bar, GaussianPrior):
        if nu.std == nu_bar.std and nu.mean == nu_bar.mean:
            return 1.0
        if nu.std >= nu_bar.std:
            return math.inf
        # log ratio is a concave quadratic in x
        k = 1 / nu.std ** 2 - 1 / nu_bar.std ** 2
        x = (nu.mean / nu.std ** 2 - nu_bar.mean / nu_bar.std ** 2) / k
        return float(nu.pdf(x) / nu_bar.pdf(x))
    if isinstance(nu, GaussianPrior) and nu.mean == 0.0:
        nu = SgParams(nu.std, (1.0,))
    if isinstance(nu, SgParams) and isinstance(nu_bar, GaussianPrior) and nu_bar.mean == 0.0:
        sigma, sbar = nu.sigma, nu_bar.std
        k = 0.5 * (1 / sigma ** 2 - 1 / sbar ** 2)
        # ratio(s) = (sbar/sigma) P(s) exp(-k s) with s = x^2 >= 0
        coeffs = np.array([a / (sigma ** (2 * i) * sg_normalizer(i)) for i, a in enumerate(nu.alpha)])
        last = np.max(np.flatnonzero(coeffs > 0))
        if k < 0 or (k == 0 and last > 0):
            return math.inf
        poly = np.polynomial.Polynomial(coeffs[: last + 1])
        if k == 0:
            return float(sbar / sigma * poly.coef[0])
        stationary = poly.deriv() - k * poly
        candidates = [0.0] + [r.real for r in stationary.roots() if abs(r.imag) < 1e-12 and r.real > 0]
        return float(max(sbar / sigma * poly(s) * math.exp(-k * s) for s in candidates))
    return None


def prior_from_record(record):
    kind = record.get("kind")
    if kind == "finite":
        return normalize(record["weights"], atoms=record.get("atoms"))
    if kind == "gaussian":
        return GaussianPrior(float(record.get("mean", 0.0)), float(record["std"]))
    if kind == "sg":
        return SgParams(float(record["sigma"]), tuple(record.get("alpha", (1.0,))))
    raise ValueError(f"unknown prior kind {kind!r}")


# --- signal kernels --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SignalKernel:
    """Either a row-stochastic matrix or the Gaussian AR(1) recursion."""

    kind: str
    matrix: Optional[np.ndarray] = None
    a: Optional[float] = None
    b: Optional[float] = None

    @classmethod
    def finite(cls, matrix):
        return cls("finite-matrix", matrix=check_stochastic_matrix(matrix))

    @classmethod
    def ar1(cls, a, b, require_stable=True):
        if not b > 0:
            raise ValueError("noise_std b must be positive")
        if require_stable and not abs(a) < 1:
            raise ValueError("|a| < 1 is required for an ergodic AR(1) signal")
        return cls("continuous", a=float(a), b=float(b))

    @property
    def is_finite(self):
        return self.kind == "finite-matrix"

    def to_record(self):
        if self.is_finite:
            return {"kind": "finite-matrix", "matrix": self.matrix.tolist()}
        return {"kind": "ar1", "a": self.a, "b": self.b}


def stationary_distribution(kernel, tol=1e-13, max_iter=100_000):
    """Invariant law of a finite kernel by power iteration on the matrix.

    The matrix is squared repeatedly, so ``max_iter`` bounds the equivalent
    number of single steps; convergence means every row of ``P^n`` agrees.
    A reducible or periodic chain never gets there and raises NoConvergence.
    """
    P = kernel.matrix if isinstance(kernel, SignalKernel) else check_stochastic_matrix(kernel)
    M = P.copy()
    power = 1
    while True:
        spread = np.abs(M - M.mean(axis=0)).max()
        if spread <= tol:
            break
        if power >= max_iter:
            raise NoConvergence(f"rows of P^{power} still differ by {spread:.3g}")
        M = M @ M
        M /= M.sum(axis=1, keepdims=True)
        power *= 2
    mu = M.mean(axis=0)
    mu = mu / mu.sum()
    # polish against accumulated rounding
    for _ in range(10):
        nxt = mu @ P
        nxt /= nxt.sum()
        if np.abs(nxt - mu).max() <= tol * 1e-1:
            mu = nxt
            break
        mu = nxt
    atoms = np.arange(len(mu))
    return normalize(mu, atoms=atoms)


# --- observation channels --------------------------------------------------

class _Channel:
    kind = "continuous"
    alphabet = None

    def density(self, states, y):
        """``gamma(x, y)`` for every state in ``states``; ``y`` scalar or 1-D.

        Returns shape ``(len(states),)`` for scalar ``y``, else ``(len(y), len(states))``.
        """
        raise NotImplementedError

    def log_density(self, states, y):
        with np.errstate(divide="ignore"):
            return np.log(self.density(states, y))

    def conditional_expectation(self, g, states):
        """``x -> integral of g(y) gamma(x, y) phi(dy)`` evaluated at each state."""
        raise NotImplementedError

    def sample(self, states, rng):
        raise NotImplementedError

    def total_mass(self, states):
        return self.conditional_expectation(lambda y: np.ones_like(np.asarray(y, dtype=float)), states)


def _gauss_hermite(n=80):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / w.sum()


_GH_NODES, _GH_WEIGHTS = _gauss_hermite()


def _apply(g, y):
    """Evaluate ``g`` elementwise, falling back to a Python loop for scalar-only callables."""
    try:
        out = np.asarray(g(y))
        if out.shape == np.shape(y):
            return out
    except (TypeError, ValueError):
        pass
    return np.vectorize(g, otypes=[complex])(y)


def _noise_expectation(noise, g, shifts):
    """``E g(shift + xi)`` for each shift."""
    shifts = np.asarray(shifts, dtype=float)
    if isinstance(noise, Normal):
        # Gauss-Hermite: exact for polynomials of degree < 160
        y = shifts[:, None] + noise.mean + noise.std * _GH_NODES[None, :]
        out = _apply(g, y) @ _GH_WEIGHTS
    elif isinstance(noise, Categorical):
        y = shifts[:, None] + np.asarray(noise.values)[None, :]
        out = _apply(g, y) @ np.asarray(noise.probs)
    else:
        out = []
        for s in shifts:
            f = lambda e: g(s + e) * noise.pdf(e)
            out.append(sum(integrate.quad(f, lo, hi, limit=400)[0] for lo, hi in ((-np.inf, 0), (0, np.inf))))
        out = np.array(out)
    return out.real if np.iscomplexobj(out) and not np.any(out.imag) else out


@dataclass(frozen=True, eq=False)
class PerStateChannel(_Channel):
    """``Y_n = xi_n(j)`` when ``X_{n-1} = a_j``; one noise law per atom."""

    atoms: np.ndarray
    dists: tuple

    def __post_init__(self):
        for d in self.dists:
            if not isinstance(d, (Normal, Categorical)):
                raise UnsupportedNoiseFamily(f"per-state noise must be Normal or Categorical, got {type(d).__name__}")
        kinds = {type(d) for d in self.dists}
        if len(kinds) > 1:
            raise UnsupportedNoiseFamily("per-state noise laws need a common reference measure")
        object.__setattr__(self, "_sorter", np.argsort(self.atoms, kind="stable"))
        if kinds == {Categorical}:
            letters = sorted({v for d in self.dists for v in d.values})
            table = np.array([[dict(zip(d.values, d.probs)).get(v, 0.0) for v in letters] for d in self.dists])
            object.__setattr__(self, "alphabet", np.array(letters))
            object.__setattr__(self, "emission", table)
            object.__setattr__(self, "kind", "finite-alphabet")
        else:
            object.__setattr__(self, "_means", np.array([d.mean for d in self.dists]))
            object.__setattr__(self, "_stds", np.array([d.std for d in self.dists]))

    def _index(self, states):
        states = np.asarray(states)
        pos = np.searchsorted(self.atoms, states, sorter=self._sorter)
        idx = self._sorter[np.clip(pos, 0, len(self.atoms) - 1)]
        if not np.array_equal(self.atoms[idx], states):
            raise ValueError("states are not atoms of this channel")
        return idx

    def density(self, states, y):
        idx = self._index(states)
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.kind == "finite-alphabet":
            pos = np.searchsorted(self.alphabet, y)
            pos_c = np.clip(pos, 0, len(self.alphabet) - 1)
            hit = self.alphabet[pos_c] == y
            out = np.where(hit[:, None], self.emission[:, pos_c].T, 0.0)[:, idx]
        else:
            out = np.exp(self._gauss_log(idx, y))
        return out[0] if scalar else out

    def _gauss_log(self, idx, y):
        z = (y[:, None] - self._means[idx][None, :]) / self._stds[idx][None, :]
        return -0.5 * z * z - np.log(self._stds[idx][None, :] * SQRT_2PI)

    def log_density(self, states, y):
        if self.kind == "finite-alphabet":
            return super().log_density(states, y)
        scalar = np.ndim(y) == 0
        out = self._gauss_log(self._index(states), np.atleast_1d(np.asarray(y, dtype=float)))
        return out[0] if scalar else out

    def conditional_expectation(self, g, states):
        idx = self._index(states)
        if self.kind == "finite-alphabet":
            return self.emission[idx] @ _apply(g, self.alphabet)
        return np.array([_noise_expectation(self.dists[j], g, [0.0])[0] for j in idx])

    def sample(self, states, rng):
        idx = self._index(np.atleast_1d(states))
        return np.array([self.dists[j].sample(rng) for j in idx], dtype=float)

    def moment_column(self, j, order):
        return self.dists[j].raw_moment(order)

    def to_record(self):
        return {"kind": "per-state", "noise": [d.to_record() for d in self.dists]}


@dataclass(frozen=True, eq=False)
class AdditiveChannel(_Channel):
    """``Y_n = h(X_{n-1}) + xi_n``."""

    h: Callable
    noise: object
    h_id: str = "h"

    def density(self, states, y):
        hx = np.asarray(self.h(np.asarray(states, dtype=float)), dtype=float)
        if np.ndim(y) == 0:
            return self.noise.pdf(float(y) - hx)
        y = np.asarray(y, dtype=float)
        return self.noise.pdf(y[:, None] - hx[None, :])

    def log_density(self, states, y):
        if not isinstance(self.noise, Normal):
            return super().log_density(states, y)
        hx = np.asarray(self.h(np.asarray(states, dtype=float)), dtype=float)
        r = (float(y) - hx) if np.ndim(y) == 0 else (np.asarray(y, dtype=float)[:, None] - hx[None, :])
        z = (r - self.noise.mean) / self.noise.std
        return -0.5 * z * z - math.log(self.noise.std * SQRT_2PI)

    def conditional_expectation(self, g, states):
        return _noise_expectation(self.noise, g, self.h(np.asarray(states, dtype=float)))

    def sample(self, states, rng):
        states = np.atleast_1d(np.asarray(states, dtype=float))
        return self.h(states) + self.noise.sample(rng, size=states.shape)

    def to_record(self):
        return {"kind": "additive", "h": self.h_id, "noise": self.noise.to_record()}


@dataclass(frozen=True, eq=False)
class MultiplicativeChannel(_Channel):
    """``Y_n = X_{n-1} xi_n`` with ``gamma(x, y) = p(y/x)/|x|``; undefined at ``x = 0``."""

    rho: float

    def density(self, states, y):
        x = np.asarray(states, dtype=float)
        if np.any(x == 0):
            raise ValueError("the multiplicative channel is undefined at state 0")
        ax = np.abs(x)
        if np.ndim(y) == 0:
            return mult_noise_density(float(y) / x, self.rho) / ax
        y = np.asarray(y, dtype=float)
        return mult_noise_density(y[:, None] / x[None, :], self.rho) / ax[None, :]

    def log_density(self, states, y):
        # log p(y/x) - log|x|, finite wherever y != 0 so tiny observations never underflow
        x = np.asarray(states, dtype=float)
        if np.any(x == 0):
            raise ValueError("the multiplicative channel is undefined at state 0")
        y = float(y) if np.ndim(y) == 0 else np.asarray(y, dtype=float)[:, None]
        z = y / x
        with np.errstate(divide="ignore"):
            az = np.abs(z)
            out = math.log(self.rho) - 3 * np.log(az) - self.rho / (az * az) - np.log(np.abs(x))
        return np.where(z == 0, -np.inf, out)

    def conditional_expectation(self, g, states):
        x = np.asarray(states, dtype=float)
        out = np.empty(len(x))
        for i, s in enumerate(x):
            # substitute u = 1/xi: p(1/u)/u^2 = rho |u| exp(-rho u^2)
            f = lambda u: g(s / u) * self.rho * abs(u) * math.exp(-self.rho * u * u) if u != 0 else 0.0
            out[i] = sum(integrate.quad(f, lo, hi, limit=400, epsabs=1e-12)[0] for lo, hi in ((-np.inf, 0), (0, np.inf)))
        return out

    def sample(self, states, rng):
        states = np.atleast_1d(np.asarray(states, dtype=float))
        return states * MultNoise(self.rho).sample(rng, size=states.shape)

    def to_record(self):
        return {"kind": "multiplicative", "rho": self.rho}


# --- models ----------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    cells: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid needs lo < hi")
        if int(self.cells) != self.cells or self.cells < 16:
            raise ValueError("grid needs at least 16 cells")

    @property
    def width(self):
        return (self.hi - self.lo) / self.cells

    @property
    def edges(self):
        return np.linspace(self.lo, self.hi, self.cells + 1)

    @property
    def midpoints(self):
        return self.lo + self.width * (np.arange(self.cells) + 0.5)

    def to_record(self):
        return {"lo": self.lo, "hi": self.hi, "cells": self.cells}


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Joint Markov model of signal and observations.

    ``states`` is the finite carrier (atoms or grid midpoints) and is None
    for a continuous model that still has to be discretized.
    """

    signal: SignalKernel
    channel: object
    nu: object
    states: Optional[np.ndarray] = None
    grid: Optional[GridSpec] = None
    name: str = ""
    spec: dict = field(default_factory=dict)
    source: Optional["HmmModel"] = None

    @property
    def is_finite(self):
        return self.states is not None and self.signal.is_finite

    @property
    def n_states(self):
        return len(self.states)

    def likelihood(self, y):
        return self.channel.density(self.states, y)

    def log_likelihood(self, y):
        return self.channel.log_density(self.states, y)

    def gamma(self, x, y):
        return float(np.atleast_1d(self.channel.density(np.atleast_1d(x), y))[0])


def build_finite_hmm(matrix, atoms=None, obs_dists=(), name="finite-hmm", nu=None):
    P = check_stochastic_matrix(matrix)
    d = P.shape[0]
    if d < 2:
        raise BadStochasticMatrix("need at least two states")
    atoms = np.arange(d) if atoms is None else np.asarray(atoms)
    if len(atoms) != d:
        raise ValueError("need one atom per row of the kernel")
    if len(obs_dists) != d:
        raise ValueError("need one observation law per state")
    channel = PerStateChannel(atoms, tuple(obs_dists))
    nu = FiniteDistribution(atoms, np.full(d, 1.0 / d)) if nu is None else nu
    return HmmModel(SignalKernel.finite(P), channel, nu, states=atoms, name=name)


def build_nonmixing_control(noise=None):
    """Deterministic 2-cycle signal observed through identical per-state noise."""
    noise = Normal(0.0, 1.0) if noise is None else noise
    return build_finite_hmm([[0.0, 1.0], [1.0, 0.0]], obs_dists=(noise, noise), name="nonmixing-control")


@dataclass(frozen=True)
class MultNoiseParams:
    a: float
    b: float
    rho: float
    prior: SgParams

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise ValueError("|a| < 1 required")
        if not self.b > 0 or not self.rho > 0:
            raise ValueError("b and rho must be positive")


def build_mult_noise_model(p):
    return HmmModel(SignalKernel.ar1(p.a, p.b), MultiplicativeChannel(p.rho), p.prior, name="mult-noise")


def build_additive_model(signal, h, noise, nu=None, h_id="h"):
    """Additive channel ``Y_n = h(X_{n-1}) + xi_n`` on top of ``signal``."""
    channel = AdditiveChannel(h, noise, h_id)
    if signal.is_finite:
        d = signal.matrix.shape[0]
        states = np.arange(d, dtype=float)
        nu = FiniteDistribution(states, np.full(d, 1.0 / d)) if nu is None else nu
        return HmmModel(signal, channel, nu, states=states, name="additive")
    nu = GaussianPrior(0.0, 1.0) if nu is None else nu
    return HmmModel(signal, channel, nu, name="additive")


def with_prior(model, nu):
    source = with_prior(model.source, nu) if model.source is not None and not hasattr(nu, "weights") else model.source
    return HmmModel(model.signal, model.channel, nu, model.states, model.grid, model.name, model.spec, source)


# --- simulation ------------------------------------------------------------

def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_path(model, n, seed):
    """Draw ``(x_path, y_path)`` of length ``n + 1`` with ``y_path[0] = 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _as_rng(seed)
    nu = model.nu
    if model.signal.is_finite:
        atoms = np.asarray(model.states)
        cum = np.cumsum(model.signal.matrix, axis=1)
        cum[:, -1] = 1.0
        u = rng.random(n + 1)
        idx = np.empty(n + 1, dtype=np.int64)
        idx[0] = min(np.searchsorted(np.cumsum(nu.weights), u[0], side="right"), len(atoms) - 1)
        for k in range(1, n + 1):
            idx[k] = np.searchsorted(cum[idx[k - 1]], u[k], side="right")
        x = atoms[idx]
    else:
        a, b = model.signal.a, model.signal.b
        if hasattr(nu, "sample"):
            x0 = float(nu.sample(rng))
        else:
            x0 = float(nu.atoms[rng.choice(len(nu), p=nu.weights)])
        eps = rng.standard_normal(n)
        x = np.empty(n + 1)
        x[0] = x0
        for k in range(1, n + 1):
            x[k] = a * x[k - 1] + b * eps[k - 1]
    y = np.zeros(n + 1)
    y[1:] = model.channel.sample(x[:-1], rng)
    return x, y
