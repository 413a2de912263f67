"""Implicit rooted forests: node costs, hypernodes, and exact traversal.

A forest is given by an oracle: a set of root nodes, a successor function,
and a per-node cost.  Estimators and analysis code only ever see this
interface, so the same machinery runs on explicit in-memory trees and on
combinatorial decision trees that are never materialized.

Node references are opaque to this module.  They must be hashable and
totally ordered within one oracle, and two references must compare equal
exactly when they denote the same tree node (two nodes reached by
different paths are different nodes, whatever else they have in common).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable, Hashable, Iterator, Sequence

from .errors import CapExceeded

NodeRef = Hashable

DEFAULT_NODE_CAP = 10_000_000
DEFAULT_HYPERCHILD_CAP = 1_000_000


@dataclass(frozen=True)
class Hypernode:
    """A set of distinct same-level nodes, stored in canonical sorted order.

    Canonical ordering makes structural equality coincide with set
    equality, so hypernodes can be dict keys and compared across
    independently produced traversals.
    """

    nodes: tuple

    def __post_init__(self):
        ordered = tuple(sorted(self.nodes))
        if len(set(ordered)) != len(ordered):
            raise ValueError(f"hypernode contains duplicate nodes: {self.nodes!r}")
        object.__setattr__(self, "nodes", ordered)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator:
        return iter(self.nodes)

    def __contains__(self, node) -> bool:
        return node in self.nodes

    def __repr__(self) -> str:
        return f"Hypernode({list(self.nodes)!r})"


class TreeOracle:
    """Read-only description of a finite rooted forest.

    Subclasses implement ``successors``, ``cost`` and ``depth``.  All three
    must be deterministic pure functions of the node reference; estimator
    workers share one oracle instance across threads and processes.
    """

    @property
    def root_hypernode(self) -> Hypernode:
        raise NotImplementedError

    def successors(self, node) -> Sequence:
        """Children of ``node`` in a fixed oracle-defined order."""
        raise NotImplementedError

    def cost(self, node) -> float:
        raise NotImplementedError

    def depth(self, node) -> int:
        raise NotImplementedError

    # Optional fast path; ``subtree_cost_function`` falls back to traversal.
    subtree_cost: Callable | None = None


def hypernode_cost(h: Hypernode, t: TreeOracle) -> float:
    """Total cost of the member nodes (not their subtrees)."""
    return sum(t.cost(v) for v in h)


def hypernode_successors(h: Hypernode, t: TreeOracle) -> tuple:
    """Successor union of a hypernode, member order then child order.

    In a well-formed forest the per-member successor sets are disjoint;
    the dedup only guards against oracles that accidentally share children.
    """
    out = {}
    for v in h:
        for w in t.successors(v):
            out[w] = None
    return tuple(out)


def exact_forest_cost(
    t: TreeOracle,
    root: Hypernode | None = None,
    max_nodes: int = DEFAULT_NODE_CAP,
) -> float:
    """Sum of node costs over the whole forest below ``root``.

    Deterministic depth-first traversal with an explicit stack, so deep
    decision trees cannot blow the interpreter recursion limit.  Raises
    CapExceeded after ``max_nodes`` visits.
    """
    if root is None:
        root = t.root_hypernode
    total = 0.0
    seen = 0
    stack = list(reversed(root.nodes))
    while stack:
        node = stack.pop()
        seen += 1
        if seen > max_nodes:
            raise CapExceeded(f"forest traversal exceeded {max_nodes} nodes")
        total += t.cost(node)
        stack.extend(reversed(t.successors(node)))
    return total


def subtree_cost_function(t: TreeOracle) -> Callable:
    """Exact cost of the full subtree under each node, memoized.

    Uses the oracle's own ``subtree_cost`` when it provides one (decision
    trees back it by dynamic programming); otherwise computes costs by an
    iterative post-order pass and caches them per node.
    """
    if t.subtree_cost is not None:
        return t.subtree_cost
    memo: dict = {}

    def cost_of(node):
        if node in memo:
            return memo[node]
        stack = [(node, False)]
        while stack:
            cur, expanded = stack.pop()
            if cur in memo:
                continue
            children = t.successors(cur)
            if expanded or not children:
                memo[cur] = t.cost(cur) + sum(memo[c] for c in children)
            else:
                stack.append((cur, True))
                stack.extend((c, False) for c in children if c not in memo)
        return memo[node]

    return cost_of


def hyperchildren(
    h: Hypernode,
    t: TreeOracle,
    budget: int,
    max_hyperchildren: int = DEFAULT_HYPERCHILD_CAP,
) -> list[Hypernode]:
    """All candidate next hypernodes of ``h`` under ``budget``.

    These are every size-min(budget, |S|) subset of the successor union,
    in deterministic order.  Exponential; analysis-only.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    succ = hypernode_successors(h, t)
    if not succ:
        return []
    take = min(budget, len(succ))
    n_choices = comb(len(succ), take)
    if n_choices > max_hyperchildren:
        raise CapExceeded(
            f"{n_choices} hyperchildren of a {len(succ)}-successor hypernode "
            f"exceed the cap of {max_hyperchildren}"
        )
    return [Hypernode(sub) for sub in itertools.combinations(succ, take)]


class ExplicitTree(TreeOracle):
    """Forest held fully in memory as a child map, for fixtures and tests."""

    def __init__(
        self,
        children: dict,
        roots: Sequence,
        costs: dict | None = None,
        default_cost: float = 1.0,
    ):
        self._children = {k: tuple(v) for k, v in children.items()}
        self._roots = tuple(roots)
        self._costs = dict(costs) if costs else {}
        self._default_cost = float(default_cost)
        self._depths = {}
        frontier = list(self._roots)
        d = 0
        while frontier:
            nxt = []
            for node in frontier:
                if node in self._depths:
                    raise ValueError(f"node {node!r} has two parents or is a root twice")
                self._depths[node] = d
                nxt.extend(self._children.get(node, ()))
            frontier = nxt
            d += 1

    @property
    def root_hypernode(self) -> Hypernode:
        return Hypernode(self._roots)

    def successors(self, node) -> tuple:
        return self._children.get(node, ())

    def cost(self, node) -> float:
        return self._costs.get(node, self._default_cost)

    def depth(self, node) -> int:
        return self._depths[node]

    def all_nodes(self) -> tuple:
        return tuple(self._depths)


# 14-node worked-example tree used throughout the tests: unit costs, five
# leaves (h, k, l, m, n), height 4.
_EXAMPLE_CHILDREN = {
    "a": ("b", "c"),
    "b": ("d",),
    "c": ("e", "f"),
    "d": ("g",),
    "e": ("h", "i"),
    "f": ("j",),
    "g": ("k", "l"),
    "i": ("m",),
    "j": ("n",),
}

# Leaf-count labels for the same tree: each node's weight is the number of
# leaves in its subtree (itself if it is a leaf).
EXAMPLE_IMPORTANCE_LABELS = {
    "a": 5, "b": 2, "c": 3, "d": 2, "e": 2, "f": 1, "g": 2,
    "h": 1, "i": 1, "j": 1, "k": 1, "l": 1, "m": 1, "n": 1,
}


def fixture_example_tree() -> ExplicitTree:
    """The 14-node unit-cost example tree."""
    return ExplicitTree(_EXAMPLE_CHILDREN, roots=("a",))


def fixture_example_importance() -> Callable:
    """Leaf-count importance on the example tree, as a weight function."""
    labels = dict(EXAMPLE_IMPORTANCE_LABELS)

    def weight(node):
        return labels[node]

    return weight
