"""Numerical certificates for the structural divergence inequalities.

Each certificate computes both sides of an inequality with independent
exact or certified solvers and reports the observed slack.  Reported
values are biased so that a failing certificate can only come from a
genuine violation or an unconverged solver, never from comparing a
loose bound on the favorable side:

* inequality right-hand sides that are minima are reported from primal
  candidates (exact-at-candidate upper bounds), and
* left-hand sides that are suprema are reported from feasible
  witnesses (certified lower bounds), additionally seeded with the
  other side's optimizer so the chain of pointwise inequalities that
  proves the theorem also holds numerically, term by term.

The sweep functions generate seeded random instances and return one
row of quantities per instance; they back the certification CLI and
the acceptance suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _kernels as kernels
from ..bayesnet import DiscreteBayesNet, enumerate_joint
from ..errors import NotApplicable
from ..graph import Dag
from ..objectives import FKind
from ..rng import STREAM_INSTANCES, philox
from .divergences import (
    AllBounded,
    DivergenceSpec,
    Lipschitz,
    SupBounded,
    _F_CODE,
    _infimal_solve,
    dual_pot_check,
    f_div_arrays,
    f_divergence,
    f_gamma_divergence,
    f_gamma_dual,
    ipm,
    proximal_ot,
)
from .operators import (
    conditional_kernel,
    family_layout,
    family_marginal,
    lifted_measure,
    parent_row_codes,
)
from .pmf import FiniteMetric, FinitePmf
from .transport import kantorovich

__all__ = [
    "DataProcessingReport",
    "InfimalReport",
    "LowerBoundReport",
    "chain_dag",
    "random_positive_net",
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


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------

def chain_dag(n: int) -> Dag:
    """Directed path 0 -> 1 -> ... -> n-1."""
    return Dag(
        node_count=n,
        edges=frozenset((i, i + 1) for i in range(n - 1)),
        node_names=tuple(f"X{i + 1}" for i in range(n)),
    )


def random_positive_net(
    dag: Dag,
    cardinalities,
    rng: np.random.Generator,
    concentration: float = 1.0,
) -> DiscreteBayesNet:
    """Net with strictly positive Dirichlet CPT rows drawn from ``rng``."""
    cards = tuple(int(c) for c in cardinalities)
    cpts = []
    for i in range(dag.node_count):
        rows = 1
        for v in dag.parents(i):
            rows *= cards[v]
        cpts.append(rng.dirichlet(np.full(cards[i], concentration), size=rows))
    return DiscreteBayesNet(dag=dag, cardinalities=cards, cpts=tuple(cpts))


def _grid_marginal(probs, grid, cards, keep):
    keep = list(keep)
    kc = tuple(cards[v] for v in keep)
    idx = np.ravel_multi_index(grid[:, keep].T, kc)
    out = np.zeros(int(np.prod(kc)))
    np.add.at(out, idx, probs)
    return out


# ---------------------------------------------------------------------------
# Data-processing certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataProcessingReport:
    """Both sides of the family-projection inequality and their slack."""

    node: int
    lhs: float
    rhs: float
    slack: float
    gamma_kind: str
    f: FKind


def certify_data_processing(
    q_net: DiscreteBayesNet,
    i: int,
    p_fam: np.ndarray,
    spec: DivergenceSpec,
    *,
    seed: int = 0,
) -> DataProcessingReport:
    """Certify that projecting the witness class onto the family of node
    ``i`` cannot decrease the divergence.

    LHS: divergence between the family marginal of the net and
    ``p_fam`` over the *projected* class (witnesses of the form
    ``K gamma`` with ``gamma`` in the full-space class).  RHS: the
    full-space divergence between the net's joint and the lifted
    measure that combines ``p_fam`` with the net's kernels.
    """
    kernel = conditional_kernel(q_net, i)
    qfull = kernel.joint
    qfam = family_marginal(q_net, i)
    p_fam = np.asarray(p_fam, dtype=np.float64)
    tilde = lifted_measure(q_net, i, p_fam)

    if isinstance(spec.gamma, AllBounded):
        lhs = f_div_arrays(qfam, p_fam, spec.f)
        rhs = f_div_arrays(qfull.probs, tilde.probs, spec.f)
        return DataProcessingReport(
            node=i, lhs=lhs, rhs=rhs, slack=lhs - rhs,
            gamma_kind="all_bounded", f=spec.f,
        )
    if not isinstance(spec.gamma, Lipschitz):
        raise NotApplicable(
            f"data-processing certificate supports all-bounded and "
            f"Lipschitz classes, not {spec.gamma!r}"
        )

    metric = spec.metric or FiniteMetric.l1_codes(qfull.support)
    full_spec = DivergenceSpec(spec.f, spec.gamma, metric)
    rhs_res = f_gamma_divergence(qfull, tilde, full_spec, seed=seed)
    dual_res = f_gamma_dual(qfull, tilde, full_spec, seed=seed)

    f_code = _F_CODE[spec.f]
    lip = spec.gamma.scale
    lhs = -math.inf
    for gamma0 in (np.zeros(qfull.size), dual_res.gamma):
        _, value, _ = kernels.lip_dual_ascent(
            qfull.probs, kernel.matrix, p_fam, metric.distances, lip, f_code, gamma0
        )
        lhs = max(lhs, float(value))
    rhs = rhs_res.value
    return DataProcessingReport(
        node=i, lhs=lhs, rhs=rhs, slack=lhs - rhs,
        gamma_kind=f"lipschitz({lip:g})", f=spec.f,
    )


# ---------------------------------------------------------------------------
# Infimal subadditivity certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InfimalReport:
    """Infima of both sides of the family-decomposition inequality."""

    model_class: str
    inf_global: float
    inf_local_avg: float
    global_at_q: float
    local_at_q: float
    verdict: Optional[bool]


class _Factorization:
    """Softmax-parameterized class of joint pmfs built from row factors.

    Each factor is a row-stochastic table; the joint probability of a
    grid point is the product of its selected entries.  Covers full
    pmfs (one factor with one row), product measures (one single-row
    factor per node), and graph-factorized measures (one CPT-shaped
    factor per node).
    """

    def __init__(self, shapes, rows, cats):
        self.shapes = shapes
        self.rows = rows
        self.cats = cats

    def probs(self, zs):
        thetas = []
        p = None
        for z, row, cat in zip(zs, self.rows, self.cats):
            zc = z - z.max(axis=1, keepdims=True)
            theta = np.exp(zc)
            theta /= theta.sum(axis=1, keepdims=True)
            thetas.append(theta)
            factor = theta[row, cat]
            p = factor if p is None else p * factor
        return p, thetas

    def grad_z(self, thetas, p, gp):
        out = []
        for theta, row, cat in zip(thetas, self.rows, self.cats):
            dtheta = np.zeros_like(theta)
            entry = theta[row, cat]
            contrib = np.where(entry > 0.0, gp * p / np.maximum(entry, 1e-300), 0.0)
            np.add.at(dtheta, (row, cat), contrib)
            inner = np.sum(dtheta * theta, axis=1, keepdims=True)
            out.append(theta * (dtheta - inner))
        return out


def _make_factorization(model_class, q_net, grid):
    size = grid.shape[0]
    cards = q_net.cardinalities
    if model_class == "AllPmfs":
        rows = [np.zeros(size, dtype=np.int64)]
        cats = [np.arange(size, dtype=np.int64)]
        shapes = [(1, size)]
        joint = enumerate_joint(q_net)
        z_q = [np.log(np.maximum(joint.probs, 1e-30)).reshape(1, -1)]
        return _Factorization(shapes, rows, cats), z_q
    if model_class == "ProductPmfs":
        rows, cats, shapes, z_q = [], [], [], []
        joint = enumerate_joint(q_net)
        for v in range(q_net.dag.node_count):
            rows.append(np.zeros(size, dtype=np.int64))
            cats.append(grid[:, v].astype(np.int64))
            shapes.append((1, cards[v]))
            marg = _grid_marginal(joint.probs, grid, cards, [v])
            z_q.append(np.log(np.maximum(marg, 1e-30)).reshape(1, -1))
        return _Factorization(shapes, rows, cats), z_q
    if model_class == "GraphFactorized":
        rows, cats, shapes, z_q = [], [], [], []
        for v in range(q_net.dag.node_count):
            rows.append(parent_row_codes(q_net, v, grid))
            cats.append(grid[:, v].astype(np.int64))
            shapes.append(q_net.cpts[v].shape)
            z_q.append(np.log(np.maximum(q_net.cpts[v], 1e-30)))
        return _Factorization(shapes, rows, cats), z_q
    raise NotApplicable(f"unknown model class {model_class!r}")


def _div_pgrad(r, p, f: FKind, weight: float):
    """d/dp of weight * D_f(r || p) for strictly positive p."""
    if f is FKind.KL:
        return -weight * r / p
    return weight * 0.5 * np.log(2.0 * p / (r + p))


def _objective_pair(qv, support, spec: DivergenceSpec, seed: int):
    """(value, grad-in-p) callable for one divergence problem."""
    if isinstance(spec.gamma, AllBounded):
        def evaluate(p):
            return f_div_arrays(qv, p, spec.f), _div_pgrad(qv, p, spec.f, 1.0)

        return evaluate
    if isinstance(spec.gamma, Lipschitz):
        cost = spec.gamma.scale * FiniteMetric.l1_codes(support).distances
    elif isinstance(spec.gamma, SupBounded):
        cost = 2.0 * spec.gamma.bound * (1.0 - np.eye(len(qv)))
    else:
        raise NotApplicable(f"unsupported class {spec.gamma!r}")
    f_code = _F_CODE[spec.f]

    def evaluate(p):
        sol = _infimal_solve(
            qv, p, cost, f_code, 1.0, seed=seed,
            restarts=2, max_iter=2000, cert_tol=1e-6,
            dual_rounds=2, dual_iters=500, polish_steps=12, fw_iters=40,
        )
        return sol.value, _div_pgrad(sol.r, p, spec.f, 1.0)

    return evaluate


def certify_infimal_subadditivity(
    q_net: DiscreteBayesNet,
    spec: DivergenceSpec,
    model_class: str,
    *,
    seed: int = 0,
    starts: int = 3,
    iters: int = 100,
) -> InfimalReport:
    """Minimize both sides of the family-decomposition inequality over a
    class of reference measures and compare the infima.

    The global side minimizes the joint divergence from the net's
    distribution; the local side minimizes the average of the
    family-marginal divergences (one family per node, each observed
    through the metric restricted to its own block).  Starts always
    include the net's own distribution, whose objective value is an
    upper bound on both infima.  For the full and graph-factorized
    classes the verdict asserts global <= local + tolerance; for
    product measures the quantities are reported without a verdict.
    """
    joint = enumerate_joint(q_net)
    grid = joint.support
    qv = joint.probs
    cards = q_net.cardinalities
    n = q_net.dag.node_count

    global_eval = _objective_pair(qv, grid, spec, seed)

    fams = []
    for i in range(n):
        layout = family_layout(q_net, i)
        keep = list(layout.variables)
        qfam = _grid_marginal(qv, grid, cards, keep)
        fams.append(
            (
                layout.full_to_family,
                _objective_pair(qfam, layout.support, spec, seed),
                layout.size,
            )
        )

    def local_eval(p):
        total = 0.0
        grad = np.zeros_like(p)
        for idx, evaluate, fam_size in fams:
            pfam = np.zeros(fam_size)
            np.add.at(pfam, idx, p)
            value, gfam = evaluate(pfam)
            total += value
            grad += gfam[idx]
        return total / n, grad / n

    factorization, z_q = _make_factorization(model_class, q_net, grid)
    global_at_q, _ = global_eval(qv)
    local_at_q, _ = local_eval(qv)

    rng = philox(seed, STREAM_INSTANCES)

    def minimize(evaluate):
        best = math.inf
        for s in range(starts):
            zs = [z.copy() for z in z_q]
            if s > 0:
                zs = [z + rng.normal(0.0, 0.7, size=z.shape) for z in zs]
            eta = 0.5
            for t in range(iters):
                p, thetas = factorization.probs(zs)
                value, gp = evaluate(p)
                best = min(best, value)
                if best <= 1e-12:
                    return max(best, 0.0)
                gzs = factorization.grad_z(thetas, p, gp)
                step = eta / math.sqrt(1.0 + t / 10.0)
                zs = [np.clip(z - step * g, -30.0, 30.0) for z, g in zip(zs, gzs)]
            p, _ = factorization.probs(zs)
            value, _ = evaluate(p)
            best = min(best, value)
        return best

    inf_global = min(minimize(global_eval), global_at_q)
    inf_local = min(minimize(local_eval), local_at_q)
    verdict = None
    if model_class in ("AllPmfs", "GraphFactorized"):
        verdict = bool(inf_global <= inf_local + 1e-4)
    return InfimalReport(
        model_class=model_class,
        inf_global=inf_global,
        inf_local_avg=inf_local,
        global_at_q=global_at_q,
        local_at_q=local_at_q,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# Family-decomposition lower bound for factorized pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundReport:
    """Average of family-level divergences vs the joint divergence."""

    local_values: tuple
    local_avg: float
    global_value: float
    slack: float


def lower_bound_report(
    q_net: DiscreteBayesNet,
    p_net: DiscreteBayesNet,
    f: FKind,
    lip: float = 1.0,
    *,
    seed: int = 0,
) -> LowerBoundReport:
    """For two nets on one graph: the average family-marginal divergence
    (restricted metric, same Lipschitz scale) is at most the joint
    divergence.  Both sides are primal upper bounds, so the reported
    slack understates the true slack only by solver gaps."""
    qj = enumerate_joint(q_net)
    pj = enumerate_joint(p_net)
    spec = DivergenceSpec(f, Lipschitz(lip), FiniteMetric.l1_codes(qj.support))
    global_value = f_gamma_divergence(qj, pj, spec, seed=seed).value

    cards = q_net.cardinalities
    locals_ = []
    for i in range(q_net.dag.node_count):
        layout = family_layout(q_net, i)
        keep = list(layout.variables)
        qfam = _grid_marginal(qj.probs, qj.support, cards, keep)
        pfam = _grid_marginal(pj.probs, pj.support, cards, keep)
        fam_metric = FiniteMetric.l1_codes(layout.support)
        qp = FinitePmf(support=layout.support, probs=qfam, variables=layout.variables)
        pp = FinitePmf(support=layout.support, probs=pfam, variables=layout.variables)
        fam_spec = DivergenceSpec(f, Lipschitz(lip), fam_metric)
        locals_.append(f_gamma_divergence(qp, pp, fam_spec, seed=seed).value)
    local_avg = float(np.mean(locals_))
    return LowerBoundReport(
        local_values=tuple(locals_),
        local_avg=local_avg,
        global_value=global_value,
        slack=global_value - local_avg,
    )


def kl_chain_identity_residual(
    q_net: DiscreteBayesNet, p_net: DiscreteBayesNet
) -> float:
    """On a 3-chain with both nets factorized over it, the joint KL
    equals KL of the (1,2) block plus KL of the (2,3) block minus KL of
    the middle marginal.  Returns the absolute residual."""
    qj = enumerate_joint(q_net)
    pj = enumerate_joint(p_net)
    cards = q_net.cardinalities
    grid = qj.support

    def block(keep):
        qb = _grid_marginal(qj.probs, grid, cards, keep)
        pb = _grid_marginal(pj.probs, grid, cards, keep)
        return f_div_arrays(qb, pb, FKind.KL)

    whole = f_div_arrays(qj.probs, pj.probs, FKind.KL)
    return abs(whole - (block([0, 1]) + block([1, 2]) - block([1])))


# ---------------------------------------------------------------------------
# Seeded certification sweeps
# ---------------------------------------------------------------------------

def _line_support(size: int) -> FinitePmf:
    probs = np.full(size, 1.0 / size)
    return FinitePmf.from_probs(probs, (size,))


def _line_pair(rng, size):
    q = rng.dirichlet(np.ones(size))
    p = rng.dirichlet(np.ones(size))
    base = _line_support(size)
    qp = FinitePmf(support=base.support, probs=q, variables=base.variables)
    pp = FinitePmf(support=base.support, probs=p, variables=base.variables)
    return qp, pp


def sandwich_sweep(trials: int, seed: int):
    """Interpolation bound: the infimal-convolution value never exceeds
    either of its endpoints (f-divergence and IPM)."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    for t in range(trials):
        size = 2 if t % 2 == 0 else 3
        f = FKind.KL if t % 4 < 2 else FKind.JS
        qp, pp = _line_pair(rng, size)
        metric = FiniteMetric.l1_codes(qp.support)
        if t % 5 == 4:
            gamma = SupBounded((0.5, 1.0, 2.0)[t % 3])
            spec = DivergenceSpec(f, gamma)
            kind = f"sup_bounded({gamma.bound:g})"
        else:
            gamma = Lipschitz((0.5, 1.0, 2.0)[t % 3])
            spec = DivergenceSpec(f, gamma, metric)
            kind = f"lipschitz({gamma.scale:g})"
        value = f_gamma_divergence(qp, pp, spec, seed=seed + t).value
        fd = f_divergence(qp, pp, f)
        w = ipm(qp, pp, spec)
        bound = min(fd, w)
        ok = value <= bound + 1e-6 and value >= -1e-12
        failures += not ok
        rows.append(
            {
                "trial": t,
                "size": size,
                "f": f.value,
                "gamma": kind,
                "value": value,
                "f_div": fd,
                "ipm": w,
                "ok": ok,
            }
        )
    return rows, failures


def duality_sweep(trials: int, seed: int):
    """Strong duality and the optimality system linking both optimizers."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    for t in range(trials):
        size = 2 if t % 2 == 0 else 3
        f = FKind.KL if t % 4 < 2 else FKind.JS
        lip = (0.5, 1.0, 2.0)[t % 3]
        qp, pp = _line_pair(rng, size)
        metric = FiniteMetric.l1_codes(qp.support)
        spec = DivergenceSpec(f, Lipschitz(lip), metric)
        primal = f_gamma_divergence(qp, pp, spec, seed=seed + t)
        dual = f_gamma_dual(qp, pp, spec, seed=seed + t)
        gap = abs(primal.value - dual.value)
        residual = float(np.sum(np.abs(primal.optimizer.probs - dual.induced)))
        ok = gap < 1e-3 and residual < 1e-3
        failures += not ok
        rows.append(
            {
                "trial": t,
                "size": size,
                "f": f.value,
                "lip": lip,
                "primal": primal.value,
                "dual": dual.value,
                "gap": gap,
                "residual": residual,
                "ok": ok,
            }
        )
    return rows, failures


def data_processing_sweep(trials: int, seed: int):
    """Family-projection inequality on random positive chains."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    dag = chain_dag(3)
    for t in range(trials):
        cards = tuple(int(rng.integers(2, 4)) for _ in range(3))
        q_net = random_positive_net(dag, cards, rng)
        i = int(rng.integers(0, 3))
        fam_size = family_layout(q_net, i).size
        p_fam = rng.dirichlet(np.ones(fam_size))
        f = FKind.KL if t % 2 == 0 else FKind.JS
        gamma = AllBounded() if t % 4 < 2 else Lipschitz(1.0)
        spec = DivergenceSpec(f, gamma)
        report = certify_data_processing(q_net, i, p_fam, spec, seed=seed + t)
        ok = report.slack >= -1e-4
        failures += not ok
        rows.append(
            {
                "trial": t,
                "cards": "x".join(str(c) for c in cards),
                "node": i,
                "f": f.value,
                "gamma": report.gamma_kind,
                "lhs": report.lhs,
                "rhs": report.rhs,
                "slack": report.slack,
                "ok": ok,
            }
        )
    return rows, failures


def lower_bound_sweep(trials: int, seed: int):
    """Average local divergence vs joint divergence for factorized pairs."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    dag = chain_dag(3)
    for t in range(trials):
        cards = tuple(2 if rng.random() < 0.7 else 3 for _ in range(3))
        q_net = random_positive_net(dag, cards, rng)
        p_net = random_positive_net(dag, cards, rng)
        f = FKind.KL if t % 2 == 0 else FKind.JS
        report = lower_bound_report(q_net, p_net, f, 1.0, seed=seed + t)
        ok = report.local_avg <= report.global_value + 1e-4
        failures += not ok
        rows.append(
            {
                "trial": t,
                "cards": "x".join(str(c) for c in cards),
                "f": f.value,
                "local_avg": report.local_avg,
                "global": report.global_value,
                "slack": report.slack,
                "ok": ok,
            }
        )
    return rows, failures


def infimal_sweep(trials: int, seed: int):
    """Infimal decomposition certificates over binary chains."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    dag = chain_dag(3)
    for t in range(trials):
        q_net = random_positive_net(dag, (2, 2, 2), rng)
        f = FKind.KL if t % 2 == 0 else FKind.JS
        rep_all = certify_infimal_subadditivity(
            q_net, DivergenceSpec(f, AllBounded()), "AllPmfs",
            seed=seed + t, starts=2, iters=60,
        )
        rep_graph = certify_infimal_subadditivity(
            q_net, DivergenceSpec(FKind.KL, Lipschitz(1.0)), "GraphFactorized",
            seed=seed + t, starts=2, iters=40,
        )
        rep_prod = certify_infimal_subadditivity(
            q_net, DivergenceSpec(f, AllBounded()), "ProductPmfs",
            seed=seed + t, starts=2, iters=60,
        )
        for rep in (rep_all, rep_graph, rep_prod):
            at_q_ok = rep.model_class == "ProductPmfs" or (
                rep.global_at_q <= 1e-6 and rep.local_at_q <= 1e-6
            )
            eq_ok = rep.model_class == "ProductPmfs" or (
                abs(rep.inf_global - rep.inf_local_avg) <= 1e-3
            )
            ok = bool(at_q_ok and eq_ok and rep.verdict is not False)
            failures += not ok
            rows.append(
                {
                    "trial": t,
                    "model_class": rep.model_class,
                    "f": f.value,
                    "inf_global": rep.inf_global,
                    "inf_local_avg": rep.inf_local_avg,
                    "global_at_q": rep.global_at_q,
                    "local_at_q": rep.local_at_q,
                    "verdict": rep.verdict,
                    "ok": ok,
                }
            )
    return rows, failures


def pot_sweep(trials: int, seed: int):
    """Proximal transport bounds and the potential-space duality gap."""
    rng = philox(seed, STREAM_INSTANCES)
    rows = []
    failures = 0
    for t in range(trials):
        size = int(rng.integers(2, 9))
        qp, pp = _line_pair(rng, size)
        scale = float(rng.uniform(0.5, 2.0))
        cost = scale * FiniteMetric.l1_codes(qp.support).distances
        eps = (0.1, 1.0, 10.0)[t % 3]
        value = proximal_ot(qp, pp, cost, eps, seed=seed + t)
        tc = kantorovich(qp.probs, pp.probs, cost).value
        kl = f_div_arrays(qp.probs, pp.probs, FKind.KL)
        upper = min(tc, eps * kl)
        gap = dual_pot_check(qp, pp, cost, eps, seed=seed + t)
        ok = (
            value <= upper + 1e-9
            and value >= -1e-12
            and -1e-4 <= gap < 1e-3
        )
        failures += not ok
        rows.append(
            {
                "trial": t,
                "size": size,
                "eps": eps,
                "value": value,
                "transport_bound": tc,
                "scaled_kl_bound": eps * kl,
                "dual_gap": gap,
                "ok": ok,
            }
        )
    return rows, failures
