"""Exact optimal transport on finite supports.

The Kantorovich problem is solved as an explicit linear program (HiGHS
via :func:`scipy.optimize.linprog`), returning both the optimal plan
and the dual potentials recovered from the equality-constraint
multipliers.  Small helper routines cover the empirical 1-D case used
by the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..errors import NoConvergence, ShapeMismatch

__all__ = ["TransportResult", "kantorovich", "w1", "empirical_w1_1d"]


@dataclass(frozen=True)
class TransportResult:
    """Optimal value, plan, and dual potentials of a transport LP.

    The potentials satisfy ``potential_q[x] + potential_p[y] <=
    cost[x, y]`` with ``value = q . potential_q + p . potential_p``.
    """

    value: float
    plan: np.ndarray
    potential_q: np.ndarray
    potential_p: np.ndarray


def kantorovich(q: np.ndarray, p: np.ndarray, cost: np.ndarray) -> TransportResult:
    """Solve ``min_plan <cost, plan>`` with marginals ``q`` (rows), ``p`` (cols).

    Both marginals must carry the same total mass (they are probability
    vectors everywhere in this package).
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if q.shape != (n,) or p.shape != (m,):
        raise ShapeMismatch(
            f"cost is {n}x{m} but marginals have sizes {q.shape} and {p.shape}"
        )

    # Equality constraints: row sums then column sums of the flattened plan.
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([q, p])

    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise NoConvergence(f"transport LP failed: {res.message}")

    duals = np.asarray(res.eqlin.marginals, dtype=np.float64)
    return TransportResult(
        value=float(res.fun),
        plan=res.x.reshape(n, m),
        potential_q=duals[:n],
        potential_p=duals[n:],
    )


def w1(q: np.ndarray, p: np.ndarray, dist: np.ndarray) -> float:
    """1-Wasserstein distance between finite pmfs under a ground metric."""
    return kantorovich(q, p, dist).value


def empirical_w1_1d(xs: np.ndarray, ys: np.ndarray) -> float:
    """Exact W1 between two empirical distributions on the real line.

    Integrates the absolute difference of the two empirical quantile
    functions over the merged step partition, so unequal sample sizes
    are handled exactly.
    """
    xs = np.sort(np.asarray(xs, dtype=np.float64).ravel())
    ys = np.sort(np.asarray(ys, dtype=np.float64).ravel())
    n, m = xs.size, ys.size
    if n == 0 or m == 0:
        raise ShapeMismatch("empirical W1 requires nonempty samples")
    if n == m:
        return float(np.mean(np.abs(xs - ys)))
    edges = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    edges = np.concatenate([[0.0], edges])
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    qx = xs[np.minimum((mids * n).astype(np.int64), n - 1)]
    qy = ys[np.minimum((mids * m).astype(np.int64), m - 1)]
    return float(np.sum(widths * np.abs(qx - qy)))
