"""Input validation helpers shared by the models, filters and estimators."""
import numpy as np
from sklearn.utils import check_array

from .errors import BadStochasticMatrix

STOCHASTIC_TOL = 1e-12


def check_stochastic_matrix(matrix, tol=STOCHASTIC_TOL):
    """Return ``matrix`` as a float array after checking it is row-stochastic."""
    try:
        P = check_array(matrix, dtype=float, ensure_min_samples=1, ensure_min_features=1)
    except ValueError as exc:
        raise BadStochasticMatrix(str(exc)) from None
    if P.shape[0] != P.shape[1]:
        raise BadStochasticMatrix(f"kernel must be square, got shape {P.shape}")
    if np.any(P < 0):
        raise BadStochasticMatrix("kernel has negative entries")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise BadStochasticMatrix(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    return P


def check_probability_vector(weights, name="weights", tol=1e-12):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"{name} sums to {w.sum()!r}, not 1")
    return w


def check_observation_path(y_path):
    """Observation path ``Y_0..Y_n`` as a float vector; ``Y_0`` must be 0."""
    y = np.asarray(y_path, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y_path must be a non-empty 1-D sequence starting with Y_0 = 0")
    if y[0] != 0:
        raise ValueError("y_path[0] is Y_0 and must be 0; pass observations from index 1")
    if not np.all(np.isfinite(y)):
        raise ValueError("y_path contains non-finite values")
    return y
