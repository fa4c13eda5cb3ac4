"""Directed acyclic graphs and discriminator family structures.

A DAG is the structural side information: nodes are variables, an edge
j -> i makes j a parent of i.  Families are the index sets that localized
discriminators act on; the canonical choice is a node together with its
parents, with uniform weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .errors import CycleDetected, InsufficientNodes
from .rng import STREAM_FAMILIES, philox

__all__ = [
    "Dag",
    "FamilySpec",
    "topological_order",
    "child_parent_families",
    "ancestor_families",
    "misaligned_families",
    "hasse_dag",
]


@dataclass(frozen=True)
class Dag:
    """A directed acyclic graph over nodes ``0 .. node_count-1``.

    Parameters
    ----------
    node_count : int
        Number of nodes (positive).
    edges : frozenset of (int, int)
        Ordered pairs ``(parent, child)``.
    node_names : tuple of str, optional
        Human-readable node names; defaults to ``x0, x1, ...``.
    """

    node_count: int
    edges: frozenset = field(default_factory=frozenset)
    node_names: tuple = None

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        for a, b in edges:
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise ValueError(f"edge ({a},{b}) out of range")
            if a == b:
                raise ValueError(f"self-loop at node {a}")
        if self.node_names is None:
            names = tuple(f"x{i}" for i in range(self.node_count))
        else:
            names = tuple(str(s) for s in self.node_names)
            if len(names) != self.node_count:
                raise ValueError("node_names length must equal node_count")
        object.__setattr__(self, "node_names", names)
        # Reject cyclic edge sets at construction.
        object.__setattr__(self, "_topo", tuple(_kahn_order(self)))

    def parents(self, i: int) -> tuple:
        """Parent indices of node ``i``, ascending."""
        return tuple(sorted(a for a, b in self.edges if b == i))

    def children(self, i: int) -> tuple:
        """Child indices of node ``i``, ascending."""
        return tuple(sorted(b for a, b in self.edges if a == i))


@dataclass(frozen=True)
class FamilySpec:
    """Discriminator families ``F_1 .. F_n`` with mixture weights.

    Each family is a sorted, duplicate-free tuple of node indices; there
    is exactly one family per node.  Default construction gives uniform
    weights summing to one.
    """

    families: tuple
    weights: tuple

    def __post_init__(self):
        fams = tuple(tuple(sorted(set(int(v) for v in fam))) for fam in self.families)
        object.__setattr__(self, "families", fams)
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(fams) != len(w):
            raise ValueError("one weight per family required")
        if any(x < 0 for x in w):
            raise ValueError("weights must be nonnegative")
        for fam in fams:
            if not fam:
                raise ValueError("families must be nonempty")

    @staticmethod
    def uniform(families) -> "FamilySpec":
        """Families with equal weights ``1/n``."""
        n = len(families)
        return FamilySpec(tuple(families), tuple([1.0 / n] * n))


def _kahn_order(dag: Dag):
    """Kahn's algorithm with ascending-index tie break."""
    n = dag.node_count
    indeg = [0] * n
    children = [[] for _ in range(n)]
    for a, b in sorted(dag.edges):
        indeg[b] += 1
        children[a].append(b)
    import heapq

    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for b in children[i]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, b)
    if len(order) != n:
        raise CycleDetected("edge set admits no topological order")
    return order


def topological_order(dag: Dag) -> list:
    """Return a topological order of the nodes.

    Every parent precedes each of its children; ties are broken by
    ascending node index, so the result is deterministic.
    """
    return list(dag._topo)


def child_parent_families(dag: Dag) -> FamilySpec:
    """Families ``F_i = {i} ∪ Pa(i)`` with uniform weights."""
    fams = [tuple(sorted({i, *dag.parents(i)})) for i in range(dag.node_count)]
    return FamilySpec.uniform(fams)


def ancestor_families(dag: Dag, depth: int) -> FamilySpec:
    """Families of ancestors within graph distance ``depth``.

    ``F_i = {i} ∪ An_{<=depth}(i)``, computed by breadth-first search
    over reversed edges.  Depth 1 recovers the child-parent families;
    depth 0 gives singletons.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    parents = [dag.parents(i) for i in range(dag.node_count)]
    fams = []
    for i in range(dag.node_count):
        seen = {i}
        frontier = [i]
        for _ in range(depth):
            nxt = []
            for v in frontier:
                for p in parents[v]:
                    if p not in seen:
                        seen.add(p)
                        nxt.append(p)
            if not nxt:
                break
            frontier = nxt
        fams.append(tuple(sorted(seen)))
    return FamilySpec.uniform(fams)


def misaligned_families(dag: Dag, seed: int) -> FamilySpec:
    """Size-matched families that exclude the true parents.

    For each node ``i`` with parent set ``Pa(i)``, draws ``|Pa(i)|``
    substitute nodes uniformly without replacement from
    ``V \\ ({i} ∪ Pa(i))`` and returns ``F_i = {i} ∪ S_i``.
    Deterministic given ``seed``.
    """
    rng = philox(seed, STREAM_FAMILIES)
    n = dag.node_count
    fams = []
    for i in range(n):
        pa = set(dag.parents(i))
        pool = [v for v in range(n) if v != i and v not in pa]
        if len(pool) < len(pa):
            raise InsufficientNodes(
                f"node {i}: complement has {len(pool)} nodes, need {len(pa)}"
            )
        picked = rng.choice(len(pool), size=len(pa), replace=False) if pa else []
        fams.append(tuple(sorted({i, *(pool[int(k)] for k in picked)})))
    return FamilySpec.uniform(fams)


def hasse_dag(k: int) -> Dag:
    """Cover graph of the subset lattice of a ``k``-element set.

    Nodes are the ``2**k`` subsets of ``{1..k}`` ordered by (size,
    lexicographic); an edge runs ``A -> B`` when ``A ⊂ B`` and
    ``|B| = |A| + 1``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    subsets = []
    for size in range(k + 1):
        subsets.extend(combinations(range(1, k + 1), size))
    index = {s: i for i, s in enumerate(subsets)}
    edges = set()
    for s, i in index.items():
        for extra in range(1, k + 1):
            if extra not in s:
                t = tuple(sorted((*s, extra)))
                edges.add((i, index[t]))
    names = tuple("{" + ",".join(map(str, s)) + "}" for s in subsets)
    return Dag(node_count=len(subsets), edges=frozenset(edges), node_names=names)
