"""Probability measures on finite alphabets and uniform grids.

Grid measures carry cell masses (already integrated over each cell), not
density samples, so every operation here is a plain finite sum.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import MismatchedSupport, NonFiniteResult, NotAbsolutelyContinuous, ZeroMass

FINITE_TOL = 1e-12
GRID_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms)
        weights = np.asarray(self.weights, dtype=float)
        if atoms.ndim != 1 or weights.shape != atoms.shape:
            raise ValueError("atoms and weights must be 1-D of equal length")
        if len(np.unique(atoms)) != len(atoms):
            raise ValueError("atoms must be distinct")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > FINITE_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def kind(self):
        return "finite"

    def __len__(self):
        return len(self.weights)

    def with_weights(self, weights):
        return FiniteDistribution(self.atoms, weights)

    def to_record(self):
        return {"kind": "finite", "atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class GridDistribution:
    grid: np.ndarray
    cell_weights: np.ndarray
    cell_width: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        w = np.asarray(self.cell_weights, dtype=float)
        if grid.ndim != 1 or w.shape != grid.shape or len(grid) < 2:
            raise ValueError("grid and cell_weights must be 1-D of equal length >= 2")
        if self.cell_width <= 0:
            raise ValueError("cell_width must be positive")
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise ValueError("grid must be strictly increasing")
        # relative to the grid magnitude: linspace midpoints carry ulps of the bounds
        if np.max(np.abs(steps - self.cell_width)) > 1e-12 * max(self.cell_width, np.abs(grid).max()):
            raise ValueError("grid spacing is not uniform")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("cell weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > GRID_TOL:
            raise ValueError(f"cell weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cell_weights", w)
        object.__setattr__(self, "cell_width", float(self.cell_width))

    @property
    def kind(self):
        return "grid"

    @property
    def atoms(self):
        return self.grid

    @property
    def weights(self):
        return self.cell_weights

    def __len__(self):
        return len(self.cell_weights)

    def with_weights(self, weights):
        return GridDistribution(self.grid, weights, self.cell_width)

    def to_record(self):
        return {
            "kind": "grid",
            "lo": float(self.grid[0] - self.cell_width / 2),
            "hi": float(self.grid[-1] + self.cell_width / 2),
            "cells": len(self.grid),
            "weights": self.cell_weights.tolist(),
        }


Distribution = Union[FiniteDistribution, GridDistribution]


def distribution_from_record(record):
    if record["kind"] == "finite":
        return FiniteDistribution(np.asarray(record["atoms"]), record["weights"])
    if record["kind"] == "grid":
        cells = record["cells"]
        width = (record["hi"] - record["lo"]) / cells
        grid = record["lo"] + width * (np.arange(cells) + 0.5)
        return GridDistribution(grid, record["weights"], width)
    raise ValueError(f"unknown distribution kind {record['kind']!r}")


def same_carrier(p, q):
    if p.kind != q.kind or len(p) != len(q):
        return False
    if p.kind == "grid" and p.cell_width != q.cell_width:
        return False
    return bool(np.array_equal(p.atoms, q.atoms))


def _check_carrier(p, q):
    if not same_carrier(p, q):
        raise MismatchedSupport("distributions live on different atoms or grids")


def l1_tv(p, q):
    """Total variation as the un-halved L1 sum, with values in [0, 2]."""
    _check_carrier(p, q)
    return float(np.abs(p.weights - q.weights).sum())


def _evaluate(f, atoms):
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            values = np.asarray(f(atoms))
    except (TypeError, ValueError):
        values = None
    if values is None or values.shape != atoms.shape:
        values = np.array([f(x) for x in atoms])
    return values


def expect(d, f):
    """Integral of ``f`` against ``d``; ``f`` may be real or complex valued."""
    values = _evaluate(f, d.atoms)
    with np.errstate(over="ignore", invalid="ignore"):
        result = np.dot(d.weights, values)
    if not np.isfinite(result):
        raise NonFiniteResult("expectation is not finite")
    return result.item() if hasattr(result, "item") else result


def normalize(weights, atoms=None):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total == 0:
        raise ZeroMass("cannot normalize a zero measure")
    if atoms is None:
        atoms = np.arange(len(w))
    w = w / total
    # absorb the final rounding so the sum sits within FINITE_TOL
    w[np.argmax(w)] += 1.0 - w.sum()
    return FiniteDistribution(atoms, w)


@dataclass(frozen=True, eq=False)
class DensityRatio:
    """Radon-Nikodym derivative of the true prior w.r.t. the filter prior."""

    atoms: np.ndarray
    values: np.ndarray
    sup_bound: Optional[float]
    p_norm: Optional[tuple] = None
    reference: Optional[np.ndarray] = None

    def value_at(self, x):
        idx = np.searchsorted(self.atoms, x, sorter=self._sorter())
        return self.values[self._sorter()[idx]]

    def _sorter(self):
        return np.argsort(self.atoms, kind="stable")

    def p_moment(self, p):
        """Mean of ``ratio ** p`` under the filter prior."""
        return float(np.dot(self.reference, self.values ** p))


def density_ratio(nu, nu_bar, p=None):
    _check_carrier(nu, nu_bar)
    w, wb = nu.weights, nu_bar.weights
    bad = np.flatnonzero((w > 0) & (wb == 0))
    if bad.size:
        raise NotAbsolutelyContinuous(
            f"true prior has mass {w[bad[0]]!r} at atom {nu.atoms[bad[0]]!r} where the filter prior has none",
            witness=nu.atoms[bad[0]].item(),
        )
    values = np.zeros_like(w)
    pos = wb > 0
    values[pos] = w[pos] / wb[pos]
    sup = float(values[pos].max())
    ratio = DensityRatio(nu.atoms, values, sup, reference=wb)
    if p is not None:
        object.__setattr__(ratio, "p_norm", (float(p), ratio.p_moment(p)))
    return ratio
