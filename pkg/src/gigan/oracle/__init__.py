"""Exact finite-support divergence oracle.

Everything in this subpackage operates on explicitly enumerated
distributions: probability vectors over integer code grids, dense cost
matrices, linear programs solved to optimality.  The point is to have a
slow-but-trustworthy reference against which the sampled, neural-network
side of the package can be checked.

Modules
-------
``pmf``
    Finite probability mass functions over integer support grids and
    finite metrics with validated axioms.
``transport``
    Kantorovich optimal transport via linear programming, with dual
    potentials, and the closed-form one-dimensional empirical distance.
``divergences``
    f-divergences, restricted integral probability metrics, the
    infimally convolved combination of the two, its dual formulation,
    and proximal-style regularized transport.
``operators``
    Conditional-expectation operators tied to a Bayesian network's
    family structure: kernels, lifted measures, aggregated costs.
``certify``
    Randomized certification sweeps tying all of the above together:
    sandwich bounds, primal/dual gaps, data-processing inequalities,
    localization lower bounds, and subadditivity over model classes.
"""

from .pmf import FinitePmf, FiniteMetric
from .transport import TransportResult, kantorovich, w1, empirical_w1_1d
from .divergences import (
    AllBounded,
    Lipschitz,
    SupBounded,
    AdditiveFamilies,
    DivergenceSpec,
    FGammaResult,
    DualResult,
    f_divergence,
    ipm,
    f_gamma_divergence,
    f_gamma_dual,
    proximal_ot,
    dual_pot_check,
    MAX_SUPPORT,
    MAX_DUAL_POT_SUPPORT,
)
from .operators import (
    FamilyLayout,
    ConditionalKernel,
    family_layout,
    conditional_kernel,
    conditional_expectation_operator,
    kernel_ratio_route,
    family_marginal,
    lifted_measure,
    aggregated_cost,
)
from .certify import (
    DataProcessingReport,
    InfimalReport,
    LowerBoundReport,
    certify_data_processing,
    certify_infimal_subadditivity,
    lower_bound_report,
    kl_chain_identity_residual,
    sandwich_sweep,
    duality_sweep,
    data_processing_sweep,
    lower_bound_sweep,
    infimal_sweep,
    pot_sweep,
)

__all__ = [
    "FinitePmf",
    "FiniteMetric",
    "TransportResult",
    "kantorovich",
    "w1",
    "empirical_w1_1d",
    "AllBounded",
    "Lipschitz",
    "SupBounded",
    "AdditiveFamilies",
    "DivergenceSpec",
    "FGammaResult",
    "DualResult",
    "f_divergence",
    "ipm",
    "f_gamma_divergence",
    "f_gamma_dual",
    "proximal_ot",
    "dual_pot_check",
    "MAX_SUPPORT",
    "MAX_DUAL_POT_SUPPORT",
    "FamilyLayout",
    "ConditionalKernel",
    "family_layout",
    "conditional_kernel",
    "conditional_expectation_operator",
    "kernel_ratio_route",
    "family_marginal",
    "lifted_measure",
    "aggregated_cost",
    "DataProcessingReport",
    "InfimalReport",
    "LowerBoundReport",
    "certify_data_processing",
    "certify_infimal_subadditivity",
    "lower_bound_report",
    "kl_chain_identity_residual",
    "sandwich_sweep",
    "duality_sweep",
    "data_processing_sweep",
    "lower_bound_sweep",
    "infimal_sweep",
    "pot_sweep",
]
