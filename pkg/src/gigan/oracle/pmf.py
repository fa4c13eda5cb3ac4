"""Exact finite-support probability mass functions and metrics.

These are the inputs to the divergence oracle: small discrete supports
where every expectation, marginal, and transport problem can be solved
numerically to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..errors import MetricMissing

__all__ = ["FinitePmf", "FiniteMetric"]

_NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class FinitePmf:
    """A probability mass function on a finite product support.

    Parameters
    ----------
    support : ndarray of shape (size, k), integer
        Support points as rows of variable codes; no duplicate rows.
    probs : ndarray of shape (size,)
        Nonnegative masses summing to one within 1e-10.
    variables : tuple of int
        Variable ids naming the columns of ``support``.
    """

    support: np.ndarray
    probs: np.ndarray
    variables: tuple

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        if support.ndim != 2:
            raise ValueError("support must be a 2-D array of codes")
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (support.shape[0],):
            raise ValueError("one probability per support point required")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {probs.sum():.12g}, not 1")
        variables = tuple(int(v) for v in self.variables)
        if len(variables) != support.shape[1]:
            raise ValueError("one variable id per support column required")
        rows = {tuple(r) for r in support.tolist()}
        if len(rows) != support.shape[0]:
            raise ValueError("duplicate support points")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "variables", variables)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @staticmethod
    def from_probs(probs, cardinalities, variables=None) -> "FinitePmf":
        """Pmf on the full lexicographic grid of the given cardinalities."""
        cards = tuple(int(k) for k in cardinalities)
        grid = np.array(list(product(*[range(k) for k in cards])), dtype=np.int64)
        if variables is None:
            variables = tuple(range(len(cards)))
        return FinitePmf(grid, np.asarray(probs, dtype=np.float64), variables)

    def index_of(self, assignment) -> int:
        """Row index of an assignment in the support."""
        row = np.asarray(assignment, dtype=np.int64)
        hit = np.nonzero((self.support == row).all(axis=1))[0]
        if hit.size != 1:
            raise KeyError(f"assignment {assignment!r} not in support")
        return int(hit[0])

    def marginal(self, keep) -> "FinitePmf":
        """Exact marginal over the kept variable ids (mass-preserving)."""
        keep = tuple(int(v) for v in keep)
        cols = [self.variables.index(v) for v in keep]
        sub = self.support[:, cols]
        uniq, inverse = np.unique(sub, axis=0, return_inverse=True)
        mass = np.zeros(uniq.shape[0])
        np.add.at(mass, inverse, self.probs)
        return FinitePmf(uniq, mass, keep)


@dataclass(frozen=True)
class FiniteMetric:
    """A symmetric pairwise distance matrix over a common support.

    Invariants: zero diagonal, symmetry, and the triangle inequality
    within 1e-9 (checked at construction).
    """

    distances: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.any(np.abs(np.diag(d)) > 0):
            raise ValueError("diagonal must be zero")
        if np.max(np.abs(d - d.T)) > 1e-12:
            raise ValueError("distance matrix must be symmetric")
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        # Triangle inequality: d(x,z) <= d(x,y) + d(y,z) for all y.
        via = (d[:, :, None] + d[None, :, :]).min(axis=1)
        if np.max(d - via) > 1e-9:
            raise ValueError("triangle inequality violated")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)

    @property
    def size(self) -> int:
        return self.distances.shape[0]

    @staticmethod
    def hamming(support) -> "FiniteMetric":
        """Sum over coordinates of the discrete metric 1{x_i != y_i}."""
        s = np.asarray(support, dtype=np.int64)
        d = (s[:, None, :] != s[None, :, :]).sum(axis=2).astype(np.float64)
        return FiniteMetric(d)

    @staticmethod
    def l1_codes(support) -> "FiniteMetric":
        """Sum over coordinates of absolute code differences."""
        s = np.asarray(support, dtype=np.int64)
        d = np.abs(s[:, None, :] - s[None, :, :]).sum(axis=2).astype(np.float64)
        return FiniteMetric(d)

    @staticmethod
    def discrete(size: int, scale: float = 1.0) -> "FiniteMetric":
        """The discrete metric ``scale * 1{x != y}`` on ``size`` points."""
        d = scale * (1.0 - np.eye(size))
        return FiniteMetric(d)


def require_metric(metric) -> FiniteMetric:
    """Raise ``MetricMissing`` when a Lipschitz class lacks a metric."""
    if metric is None:
        raise MetricMissing("a FiniteMetric is required for Lipschitz classes")
    return metric
