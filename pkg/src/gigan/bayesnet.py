"""Target distributions that factorize over a DAG.

Three model families: discrete networks with conditional probability
tables, linear-Gaussian networks, and the ball-trajectory time series.
All are sampled ancestrally (node by node in topological order), and the
discrete ones expose exact joints for the divergence oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InvalidAssignment, StateSpaceTooLarge
from .graph import Dag, topological_order
from .oracle.pmf import FinitePmf
from .rng import STREAM_CPTS, STREAM_SAMPLING, philox

__all__ = [
    "DiscreteBayesNet",
    "LinearGaussianNet",
    "BallModel",
    "SampleBatch",
    "Encoding",
    "ancestral_sample",
    "ball_sample",
    "joint_logprob",
    "enumerate_joint",
    "marginalize",
    "dummy_encode",
    "dummy_decode",
    "random_cpts",
    "load_net",
    "save_net",
]

_ROW_SUM_TOL = 1e-12
_ENUMERATION_LIMIT = 10**6


@dataclass(frozen=True)
class SampleBatch:
    """A rectangular batch of samples: rows are draws, columns variables.

    Categorical values are stored as integer codes in real-valued cells;
    ``column_schema`` names the variable id of each column.
    """

    data: np.ndarray
    column_schema: tuple

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("data must be 2-D (rows = samples)")
        schema = tuple(int(v) for v in self.column_schema)
        if len(schema) != data.shape[1]:
            raise ValueError("one schema entry per column required")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "column_schema", schema)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def codes(self) -> np.ndarray:
        """Integer view of a categorical batch."""
        return np.rint(self.data).astype(np.int64)


@dataclass(frozen=True)
class Encoding:
    """Dummy-encoding layout: one contiguous block of columns per variable."""

    blocks: tuple  # per variable: (start, stop) half-open column range
    total_dim: int

    def block_slice(self, v: int) -> slice:
        start, stop = self.blocks[v]
        return slice(start, stop)

    def family_columns(self, family) -> np.ndarray:
        """Encoded columns of a family: the union of its variable blocks."""
        cols = []
        for v in family:
            start, stop = self.blocks[v]
            cols.extend(range(start, stop))
        return np.asarray(cols, dtype=np.int64)


@dataclass(frozen=True)
class DiscreteBayesNet:
    """A discrete Bayesian network with one CPT per node.

    ``cpts[i]`` has one row per parent configuration (lexicographic over
    parent states in ascending parent-index order, first parent most
    significant) and ``cardinalities[i]`` columns; each row is a
    probability vector.  Root nodes have exactly one row.
    """

    dag: Dag
    cardinalities: tuple
    cpts: tuple

    def __post_init__(self):
        cards = tuple(int(k) for k in self.cardinalities)
        if len(cards) != self.dag.node_count or any(k < 1 for k in cards):
            raise ValueError("one positive cardinality per node required")
        tables = []
        for i in range(self.dag.node_count):
            table = np.asarray(self.cpts[i], dtype=np.float64)
            rows = int(np.prod([cards[p] for p in self.dag.parents(i)], dtype=np.int64))
            if table.shape != (rows, cards[i]):
                raise ValueError(
                    f"node {i}: CPT shape {table.shape} != ({rows},{cards[i]})"
                )
            if np.any(table < 0):
                raise ValueError(f"node {i}: negative CPT entry")
            if np.max(np.abs(table.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
                raise ValueError(f"node {i}: CPT rows must sum to 1")
            table.setflags(write=False)
            tables.append(table)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "cpts", tuple(tables))

    def parent_row_index(self, i: int, assignment) -> int:
        """Row of node ``i``'s CPT selected by the parent values."""
        idx = 0
        for p in self.dag.parents(i):
            idx = idx * self.cardinalities[p] + int(assignment[p])
        return idx


@dataclass(frozen=True)
class LinearGaussianNet:
    """A linear structural equation model over a DAG.

    Non-root nodes satisfy ``X_i = sum_j phi[j,i] X_j + eps_i`` with
    ``eps_i ~ N(0, noise_std[i]^2)``; each root ``i`` is drawn from
    ``N(root_mean[i], root_std[i]^2)``.
    """

    dag: Dag
    coeffs: dict  # (parent, child) -> float
    noise_std: tuple
    root_mean: dict
    root_std: dict

    def __post_init__(self):
        coeffs = {(int(a), int(b)): float(v) for (a, b), v in self.coeffs.items()}
        if set(coeffs) != set(self.dag.edges):
            raise ValueError("coeffs must be defined exactly on the edge set")
        stds = tuple(float(s) for s in self.noise_std)
        if len(stds) != self.dag.node_count:
            raise ValueError("one noise_std per node required")
        roots = {i for i in range(self.dag.node_count) if not self.dag.parents(i)}
        rmean = {int(i): float(m) for i, m in self.root_mean.items()}
        rstd = {int(i): float(s) for i, s in self.root_std.items()}
        if set(rmean) != roots or set(rstd) != roots:
            raise ValueError("root_mean/root_std must cover exactly the roots")
        if any(s <= 0 for i, s in enumerate(stds) if i not in roots):
            raise ValueError("noise_std must be positive")
        if any(s < 0 for s in rstd.values()):
            raise ValueError("root_std must be nonnegative")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_std", stds)
        object.__setattr__(self, "root_mean", rmean)
        object.__setattr__(self, "root_std", rstd)

    def sem_moments(self):
        """Closed-form mean vector and covariance of the joint law.

        With ``A[i,j] = phi[j,i]``, the model reads ``X = A X + eps`` so
        ``mean = (I-A)^-1 mu_eps`` and ``cov = (I-A)^-1 S (I-A)^-T``.
        """
        n = self.dag.node_count
        a = np.zeros((n, n))
        for (j, i), phi in self.coeffs.items():
            a[i, j] = phi
        mu_eps = np.zeros(n)
        var_eps = np.zeros(n)
        for i in range(n):
            if self.dag.parents(i):
                var_eps[i] = self.noise_std[i] ** 2
            else:
                mu_eps[i] = self.root_mean[i]
                var_eps[i] = self.root_std[i] ** 2
        inv = np.linalg.inv(np.eye(n) - a)
        return inv @ mu_eps, inv @ np.diag(var_eps) @ inv.T


@dataclass(frozen=True)
class BallModel:
    """Vertical throw observed at ``m+1`` uniform time points on [0, 1].

    ``y_t = v0 * t - g * t^2 / 2`` with ``v0 ~ N(mu_v, sigma_v^2)``.
    """

    mu_v: float = 4.0
    sigma_v: float = 3.0
    g: float = 9.8
    m_plus_1: int = 15

    def __post_init__(self):
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be nonnegative")
        if self.g <= 0:
            raise ValueError("g must be positive")
        if self.m_plus_1 < 3:
            raise ValueError("need at least three time points")

    @property
    def times(self) -> np.ndarray:
        m = self.m_plus_1 - 1
        return np.arange(self.m_plus_1) / m

    def dag(self) -> Dag:
        """Second-order Markov structure of the sampled trajectory.

        Each ``y_{t_j}`` has parents ``y_{t_{j-1}}`` and ``y_{t_{j-2}}``,
        truncated at the start (``y_{t_1}`` has the single parent
        ``y_{t_0}``).
        """
        edges = set()
        for j in range(1, self.m_plus_1):
            edges.add((j - 1, j))
            if j >= 2:
                edges.add((j - 2, j))
        names = tuple(f"y{j}" for j in range(self.m_plus_1))
        return Dag(self.m_plus_1, frozenset(edges), names)


def ancestral_sample(net, count: int, seed: int) -> SampleBatch:
    """Draw ``count`` joint samples node-by-node in topological order.

    Each node is drawn from its conditional given the already-sampled
    parent values.  Deterministic given ``seed``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = philox(seed, STREAM_SAMPLING)
    order = topological_order(net.dag)
    n = net.dag.node_count
    if isinstance(net, DiscreteBayesNet):
        out = np.zeros((count, n), dtype=np.int64)
        for i in order:
            parents = net.dag.parents(i)
            rows = np.zeros(count, dtype=np.int64)
            for p in parents:
                rows = rows * net.cardinalities[p] + out[:, p]
            table = net.cpts[i]
            cdf = np.cumsum(table, axis=1)
            u = rng.random(count)
            out[:, i] = (u[:, None] > cdf[rows]).sum(axis=1)
        return SampleBatch(out.astype(np.float64), tuple(range(n)))
    if isinstance(net, LinearGaussianNet):
        out = np.zeros((count, n))
        for i in order:
            parents = net.dag.parents(i)
            if parents:
                loc = np.zeros(count)
                for p in parents:
                    loc += net.coeffs[(p, i)] * out[:, p]
                out[:, i] = loc + rng.normal(0.0, net.noise_std[i], count)
            else:
                out[:, i] = rng.normal(net.root_mean[i], net.root_std[i], count)
        return SampleBatch(out, tuple(range(n)))
    raise TypeError(f"cannot sample a {type(net).__name__}")


def ball_sample(model: BallModel, count: int, seed: int) -> SampleBatch:
    """Sample trajectories ``(y_{t_0}, ..., y_{t_m})`` of the ball model."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = philox(seed, STREAM_SAMPLING)
    v0 = rng.normal(model.mu_v, model.sigma_v, count) if model.sigma_v > 0 else (
        np.full(count, model.mu_v)
    )
    t = model.times
    y = v0[:, None] * t[None, :] - 0.5 * model.g * t[None, :] ** 2
    return SampleBatch(y, tuple(range(model.m_plus_1)))


def joint_logprob(net: DiscreteBayesNet, assignment) -> float:
    """Log joint mass of one assignment in nats.

    Returns ``-inf`` (a sentinel, never an overflow) when the assignment
    hits a zero CPT entry.
    """
    a = np.asarray(assignment, dtype=np.int64)
    if a.shape != (net.dag.node_count,):
        raise InvalidAssignment(f"assignment length {a.shape} != node count")
    if np.any(a < 0) or np.any(a >= np.asarray(net.cardinalities)):
        raise InvalidAssignment(f"codes out of range in {a.tolist()}")
    total = 0.0
    for i in range(net.dag.node_count):
        p = net.cpts[i][net.parent_row_index(i, a), a[i]]
        if p == 0.0:
            return -math.inf
        total += math.log(p)
    return total


def _joint_probs_on_grid(net: DiscreteBayesNet, grid: np.ndarray) -> np.ndarray:
    probs = np.ones(grid.shape[0])
    for i in range(net.dag.node_count):
        rows = np.zeros(grid.shape[0], dtype=np.int64)
        for p in net.dag.parents(i):
            rows = rows * net.cardinalities[p] + grid[:, p]
        probs *= net.cpts[i][rows, grid[:, i]]
    return probs


def enumerate_joint(net: DiscreteBayesNet) -> FinitePmf:
    """Exact joint pmf over all assignments in lexicographic order."""
    size = int(np.prod(net.cardinalities, dtype=np.int64))
    if size > _ENUMERATION_LIMIT:
        raise StateSpaceTooLarge(f"{size} joint states exceed the limit")
    grid = np.array(
        list(product(*[range(k) for k in net.cardinalities])), dtype=np.int64
    )
    return FinitePmf(grid, _joint_probs_on_grid(net, grid), tuple(range(net.dag.node_count)))


def marginalize(pmf: FinitePmf, keep) -> FinitePmf:
    """Exact marginal of a finite pmf over the kept variable ids."""
    return pmf.marginal(keep)


def dummy_encode(batch: SampleBatch, cardinalities):
    """One-hot encode a categorical batch, blocks in node order.

    Returns the encoded batch together with the block layout; the
    encoded family of ``F`` is the union of the blocks of its members.
    """
    cards = tuple(int(k) for k in cardinalities)
    codes = batch.codes()
    if codes.shape[1] != len(cards):
        raise ValueError("one cardinality per column required")
    starts = np.concatenate([[0], np.cumsum(cards)])
    total = int(starts[-1])
    out = np.zeros((batch.count, total))
    for v, k in enumerate(cards):
        out[np.arange(batch.count), starts[v] + codes[:, v]] = 1.0
    blocks = tuple((int(starts[v]), int(starts[v + 1])) for v in range(len(cards)))
    encoding = Encoding(blocks=blocks, total_dim=total)
    return SampleBatch(out, tuple(range(total))), encoding


def dummy_decode(encoded: SampleBatch, encoding: Encoding) -> SampleBatch:
    """Invert a dummy encoding by per-block argmax."""
    n = len(encoding.blocks)
    out = np.zeros((encoded.count, n), dtype=np.int64)
    for v in range(n):
        out[:, v] = np.argmax(encoded.data[:, encoding.block_slice(v)], axis=1)
    return SampleBatch(out.astype(np.float64), tuple(range(n)))


def random_cpts(dag: Dag, cardinalities, concentration: float, seed: int) -> DiscreteBayesNet:
    """Discrete net with CPT rows drawn from symmetric Dirichlet laws."""
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    rng = philox(seed, STREAM_CPTS)
    cards = tuple(int(k) for k in cardinalities)
    cpts = []
    for i in range(dag.node_count):
        rows = int(np.prod([cards[p] for p in dag.parents(i)], dtype=np.int64))
        table = rng.dirichlet([concentration] * cards[i], size=rows)
        cpts.append(table)
    return DiscreteBayesNet(dag, cards, tuple(cpts))


def save_net(net, path) -> None:
    """Write a network to the JSON network-file format."""
    nodes = []
    names = net.dag.node_names
    if isinstance(net, DiscreteBayesNet):
        for i in range(net.dag.node_count):
            nodes.append(
                {
                    "name": names[i],
                    "type": "categorical",
                    "cardinality": net.cardinalities[i],
                    "parents": [names[p] for p in net.dag.parents(i)],
                    "cpt": [list(map(float, row)) for row in net.cpts[i]],
                }
            )
    elif isinstance(net, LinearGaussianNet):
        for i in range(net.dag.node_count):
            parents = net.dag.parents(i)
            node = {
                "name": names[i],
                "type": "gaussian",
                "parents": [names[p] for p in parents],
            }
            if parents:
                node["coeffs"] = {names[p]: net.coeffs[(p, i)] for p in parents}
                node["noise_std"] = net.noise_std[i]
            else:
                node["root_mean"] = net.root_mean[i]
                node["root_std"] = net.root_std[i]
            nodes.append(node)
    else:
        raise TypeError(f"cannot serialize a {type(net).__name__}")
    with open(path, "w") as fh:
        json.dump({"nodes": nodes}, fh, indent=1)
        fh.write("\n")


def load_net(path):
    """Read a network from the JSON network-file format."""
    with open(path) as fh:
        doc = json.load(fh)
    nodes = doc["nodes"]
    names = [node["name"] for node in nodes]
    index = {name: i for i, name in enumerate(names)}
    edges = set()
    for i, node in enumerate(nodes):
        for parent in node.get("parents", []):
            edges.add((index[parent], i))
    dag = Dag(len(nodes), frozenset(edges), tuple(names))
    kinds = {node["type"] for node in nodes}
    if kinds == {"categorical"}:
        cards = tuple(int(node["cardinality"]) for node in nodes)
        cpts = []
        for i, node in enumerate(nodes):
            declared = [index[p] for p in node.get("parents", [])]
            table = np.asarray(node["cpt"], dtype=np.float64)
            sorted_parents = dag.parents(i)
            if tuple(declared) != sorted_parents:
                table = _reorder_cpt(table, declared, sorted_parents, cards)
            cpts.append(table)
        return DiscreteBayesNet(dag, cards, tuple(cpts))
    if kinds == {"gaussian"}:
        coeffs, noise, rmean, rstd = {}, [1.0] * len(nodes), {}, {}
        for i, node in enumerate(nodes):
            if node.get("parents"):
                for pname, value in node["coeffs"].items():
                    coeffs[(index[pname], i)] = float(value)
                noise[i] = float(node["noise_std"])
            else:
                rmean[i] = float(node.get("root_mean", 0.0))
                rstd[i] = float(node.get("root_std", 1.0))
        return LinearGaussianNet(dag, coeffs, tuple(noise), rmean, rstd)
    raise ValueError("network files must be all-categorical or all-gaussian")


def _reorder_cpt(table, declared, target, cards):
    """Permute CPT rows from the declared parent order to ascending order."""
    shape = [cards[p] for p in declared]
    perm = [declared.index(p) for p in target]
    cube = table.reshape(*shape, table.shape[1])
    cube = np.transpose(cube, (*perm, len(shape)))
    return cube.reshape(-1, table.shape[1])
