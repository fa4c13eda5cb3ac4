"""Family-level conditional expectation operators on enumerable nets.

For a node ``i`` with family ``F = {i} ∪ Pa(i)``, the operator maps a
function on the full joint space to a function on the family space by
integrating out every other coordinate with the net's own conditionals:
earlier non-parent coordinates follow their conditional law given the
parent configuration, later coordinates follow their CPTs.  The
resulting kernel is exactly the conditional law of the remaining
coordinates given the family, which yields the tower identity
``E_{Q_F}[I[gamma]] = E_Q[gamma]``.

The same kernel builds two derived objects used by the certification
suite: the lifted joint measure that combines an arbitrary family
marginal with the net's kernels, and the family-level aggregated cost
obtained by averaging a joint cost over two independent kernel draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bayesnet import DiscreteBayesNet, enumerate_joint
from ..errors import DomainError
from ..graph import topological_order
from .pmf import FinitePmf

__all__ = [
    "FamilyLayout",
    "parent_row_codes",
    "ConditionalKernel",
    "family_layout",
    "conditional_kernel",
    "conditional_expectation_operator",
    "kernel_ratio_route",
    "family_marginal",
    "lifted_measure",
    "aggregated_cost",
]


@dataclass(frozen=True)
class FamilyLayout:
    """Index bookkeeping between the full grid and one family's grid."""

    variables: tuple
    cardinalities: tuple
    support: np.ndarray
    full_to_family: np.ndarray

    @property
    def size(self) -> int:
        return self.support.shape[0]


@dataclass(frozen=True)
class ConditionalKernel:
    """Row-stochastic kernel from family configurations to the joint.

    ``matrix[a, x]`` is the probability of full configuration ``x``
    given family configuration ``a``; each column has a single nonzero
    row (the one its own family restriction selects).
    """

    node: int
    matrix: np.ndarray
    layout: FamilyLayout
    joint: FinitePmf


def _full_grid(net: DiscreteBayesNet) -> np.ndarray:
    pmf = enumerate_joint(net)
    return pmf.support


def family_layout(net: DiscreteBayesNet, i: int) -> FamilyLayout:
    """Grid and index maps for the family of node ``i``."""
    fam = tuple(sorted({i, *net.dag.parents(i)}))
    cards = tuple(net.cardinalities[v] for v in fam)
    grid = _full_grid(net)
    support = np.indices(cards).reshape(len(cards), -1).T.astype(np.int64)
    codes = grid[:, list(fam)]
    full_to_family = np.ravel_multi_index(codes.T, cards).astype(np.int64)
    return FamilyLayout(
        variables=fam,
        cardinalities=cards,
        support=support,
        full_to_family=full_to_family,
    )


def parent_row_codes(net: DiscreteBayesNet, j: int, grid: np.ndarray) -> np.ndarray:
    rows = np.zeros(grid.shape[0], dtype=np.int64)
    for v in net.dag.parents(j):
        rows = rows * net.cardinalities[v] + grid[:, v]
    return rows


def conditional_kernel(net: DiscreteBayesNet, i: int) -> ConditionalKernel:
    """The kernel integrating out all non-family coordinates.

    Built in the structured product form: earlier non-parent nodes get
    their joint conditional law given the parent configuration, later
    nodes get their CPT factors.  All parent configurations must have
    positive probability under the net (guaranteed for strictly
    positive CPTs).
    """
    joint = enumerate_joint(net)
    grid = joint.support
    layout = family_layout(net, i)
    order = topological_order(net.dag)
    pos = {v: k for k, v in enumerate(order)}
    parents = net.dag.parents(i)
    later = [j for j in order if pos[j] > pos[i] and j != i]

    weights = np.ones(grid.shape[0])
    for j in later:
        rows = parent_row_codes(net, j, grid)
        weights *= net.cpts[j][rows, grid[:, j]]

    # Conditional law of the earlier non-parent block given the parents.
    early = [v for v in order if pos[v] < pos[i] and v not in parents]
    if early:
        pa = list(parents)
        epa = sorted(early + pa)
        epa_cards = tuple(net.cardinalities[v] for v in epa)
        epa_idx = np.ravel_multi_index(grid[:, epa].T, epa_cards)
        epa_marg = np.zeros(int(np.prod(epa_cards)))
        np.add.at(epa_marg, epa_idx, joint.probs)
        if pa:
            pa_cards = tuple(net.cardinalities[v] for v in pa)
            pa_idx = np.ravel_multi_index(grid[:, pa].T, pa_cards)
            pa_marg = np.zeros(int(np.prod(pa_cards)))
            np.add.at(pa_marg, pa_idx, joint.probs)
            if np.any(pa_marg[np.unique(pa_idx)] <= 0.0):
                raise DomainError(
                    "a parent configuration has zero probability; the "
                    "conditional kernel is undefined there"
                )
            weights *= epa_marg[epa_idx] / pa_marg[pa_idx]
        else:
            weights *= epa_marg[epa_idx]

    matrix = np.zeros((layout.size, grid.shape[0]))
    matrix[layout.full_to_family, np.arange(grid.shape[0])] = weights
    return ConditionalKernel(node=i, matrix=matrix, layout=layout, joint=joint)


def conditional_expectation_operator(
    net: DiscreteBayesNet, i: int, gamma: np.ndarray
) -> np.ndarray:
    """Apply the family kernel to a function on the full grid.

    ``gamma`` is indexed like the enumerated joint support; the result
    is indexed like the family grid of :func:`family_layout`.
    """
    kernel = conditional_kernel(net, i)
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (kernel.matrix.shape[1],):
        raise ValueError(
            f"gamma has shape {gamma.shape}, expected ({kernel.matrix.shape[1]},)"
        )
    return kernel.matrix @ gamma


def kernel_ratio_route(net: DiscreteBayesNet, i: int) -> np.ndarray:
    """The same kernel via the joint-to-marginal probability ratio.

    ``K[a, x] = Q(x) / Q_F(a)`` for configurations whose family
    restriction is ``a`` — an independent construction used to
    cross-check the structured product form (rows with zero family
    marginal are left at zero).
    """
    joint = enumerate_joint(net)
    layout = family_layout(net, i)
    fam_marg = family_marginal(net, i)
    matrix = np.zeros((layout.size, joint.size))
    idx = layout.full_to_family
    ok = fam_marg[idx] > 0.0
    cols = np.arange(joint.size)
    matrix[idx[ok], cols[ok]] = joint.probs[ok] / fam_marg[idx[ok]]
    return matrix


def family_marginal(net: DiscreteBayesNet, i: int) -> np.ndarray:
    """Marginal of the net's joint on the family grid (full grid order)."""
    joint = enumerate_joint(net)
    layout = family_layout(net, i)
    out = np.zeros(layout.size)
    np.add.at(out, layout.full_to_family, joint.probs)
    return out


def lifted_measure(
    net: DiscreteBayesNet, i: int, p_fam: np.ndarray
) -> FinitePmf:
    """Joint measure combining a family marginal with the net's kernel.

    The family block follows ``p_fam``; every other coordinate follows
    the net's conditional kernel given the family.  When ``p_fam``
    equals the net's own family marginal this reconstructs the joint.
    """
    kernel = conditional_kernel(net, i)
    p_fam = np.asarray(p_fam, dtype=np.float64)
    if p_fam.shape != (kernel.layout.size,):
        raise ValueError(
            f"family marginal has shape {p_fam.shape}, expected "
            f"({kernel.layout.size},)"
        )
    probs = p_fam @ kernel.matrix
    return FinitePmf(
        support=kernel.joint.support,
        probs=probs,
        variables=kernel.joint.variables,
    )


def aggregated_cost(
    net: DiscreteBayesNet, i: int, base_cost: np.ndarray
) -> np.ndarray:
    """Family-level cost: the joint cost averaged over two independent
    kernel draws, one at each argument."""
    kernel = conditional_kernel(net, i)
    base_cost = np.asarray(base_cost, dtype=np.float64)
    size = kernel.matrix.shape[1]
    if base_cost.shape != (size, size):
        raise ValueError(
            f"base cost has shape {base_cost.shape}, expected ({size}, {size})"
        )
    return kernel.matrix @ base_cost @ kernel.matrix.T
