"""Exact analysis of estimator distributions on small instances.

Everything here enumerates exponential spaces and is meant as a test
oracle: the full outcome distribution of a walk (every hypernode
sequence, its probability, and the estimate it would produce), the
recursive closed forms for variance and squared coefficient of
variation, and the alpha diagnostic that measures how far a weight
function is from the exact subtree-cost function.

Computations run in exact rational arithmetic by default (every float
input is treated as the rational it denotes), so identities hold with
zero tolerance; pass exact=False to trade that for speed on larger
instance sets.  All enumerations count against explicit caps and raise
CapExceeded rather than truncating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Sequence

from .errors import CapExceeded
from .estimators import HypernodeDistribution, ImportanceInduced
from .sampling import NonpositiveWeight, WeightFunction
from .tree import Hypernode, TreeOracle

DEFAULT_SEQUENCE_CAP = 1_000_000
DEFAULT_STATE_CAP = 1_000_000

BOUNDS_CSV_HEADER = (
    "instance", "budget", "importance",
    "variance", "cv2", "alpha_variance", "alpha_max", "level_product_bound",
)


def _subtree_cost_fn(t: TreeOracle, conv: Callable) -> Callable:
    """Subtree costs in the requested numeric domain, memoized per node."""
    fast = t.subtree_cost
    memo: dict = {}
    if fast is not None:
        def cost_of(node):
            v = memo.get(node)
            if v is None:
                v = conv(fast(node))
                memo[node] = v
            return v
        return cost_of

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
                memo[cur] = conv(t.cost(cur)) + sum(memo[c] for c in children)
            else:
                stack.append((cur, True))
                stack.extend((c, False) for c in children if c not in memo)
        return memo[node]

    return cost_of


def _successor_union(t: TreeOracle, nodes: Sequence) -> tuple:
    out = {}
    for v in nodes:
        for w in t.successors(v):
            out[w] = None
    return tuple(out)


@dataclass(frozen=True)
class Outcome:
    """One complete hypernode sequence with its probability and estimate."""

    probability: object
    estimate: object
    alpha: object | None = None
    sequence: tuple | None = None


@dataclass(frozen=True)
class OutcomeDistribution:
    """Every outcome of a walk, with exact moments of the estimate."""

    outcomes: tuple[Outcome, ...]
    mean: object
    variance: object
    cv2: object | None
    total_probability: object

    def __len__(self) -> int:
        return len(self.outcomes)


def count_sequences(
    t: TreeOracle,
    budget: int,
    root: Hypernode | None = None,
    max_sequences: int = DEFAULT_SEQUENCE_CAP,
) -> int:
    """Number of complete hypernode sequences a walk could produce.

    Cheap feasibility probe for the enumerators below; aborts with
    CapExceeded as soon as the count passes the cap.
    """
    if root is None:
        root = t.root_hypernode
    count = 0

    def rec(nodes):
        nonlocal count
        succ = _successor_union(t, nodes)
        if not succ:
            count += 1
            if count > max_sequences:
                raise CapExceeded(f"more than {max_sequences} hypernode sequences")
            return
        take = min(budget, len(succ))
        for sub in itertools.combinations(succ, take):
            rec(sub)

    rec(root.nodes)
    return count


def enumerate_distribution(
    t: TreeOracle,
    budget: int,
    dist: HypernodeDistribution,
    root: Hypernode | None = None,
    max_sequences: int = DEFAULT_SEQUENCE_CAP,
    exact: bool = True,
    weight: WeightFunction | None = None,
    keep_sequences: bool = False,
) -> OutcomeDistribution:
    """Depth-first enumeration of every walk outcome under ``dist``.

    Each outcome records the exact probability of its hypernode sequence
    and the exact estimate the walk arithmetic assigns to it.  When a
    weight function is supplied, the sequence's alpha value (the product
    of per-level weight-versus-cost distortions) is recorded too.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if root is None:
        root = t.root_hypernode
    conv = Fraction if exact else float
    size0 = len(root)
    subcost = _subtree_cost_fn(t, conv) if weight is not None else None
    wvalue = (lambda x: conv(float(weight(x)))) if weight is not None else None
    outcomes = []
    count = 0

    def rec(nodes, prob, d_product, total, alpha_acc, seq):
        nonlocal count
        succ = _successor_union(t, nodes)
        if not succ:
            count += 1
            if count > max_sequences:
                raise CapExceeded(f"more than {max_sequences} hypernode sequences")
            outcomes.append(Outcome(prob, size0 * total, alpha_acc, seq))
            return
        take = min(budget, len(succ))
        binom = comb(len(succ) - 1, take - 1)
        size = len(nodes)
        if weight is not None:
            w_of = {x: wvalue(x) for x in succ}
            c_of = {x: subcost(x) for x in succ}
            for x, w in w_of.items():
                if not w > 0:
                    raise NonpositiveWeight(x, w)
            r_all = sum(w_of.values())
            c_all = sum(c_of.values())
            if c_all == 0:
                raise ValueError(f"successor forest of {nodes!r} has zero total cost; alpha undefined")
        for wnodes, p in dist.support(succ, budget):
            p = conv(p)
            d_k = conv(len(wnodes)) / (size * binom * p)
            d2 = d_product * d_k
            lvl = sum(conv(t.cost(x)) for x in wnodes) / len(wnodes)
            alpha2 = alpha_acc
            if weight is not None:
                r_sel = sum(w_of[x] for x in wnodes)
                c_sel = sum(c_of[x] for x in wnodes)
                alpha2 = alpha_acc * (r_all / r_sel) * (c_sel / c_all)
            rec(
                wnodes,
                prob * p,
                d2,
                total + lvl * d2,
                alpha2,
                seq + (Hypernode(wnodes),) if seq is not None else None,
            )

    one = conv(1)
    lvl0 = sum(conv(t.cost(v)) for v in root.nodes) / size0
    rec(root.nodes, one, one, lvl0, one, (root,) if keep_sequences else None)

    if exact:
        total_p = sum(o.probability for o in outcomes)
        mean = sum(o.probability * o.estimate for o in outcomes)
        variance = sum(o.probability * (o.estimate - mean) ** 2 for o in outcomes)
    else:
        total_p = math.fsum(o.probability for o in outcomes)
        mean = math.fsum(o.probability * o.estimate for o in outcomes)
        variance = math.fsum(o.probability * (o.estimate - mean) ** 2 for o in outcomes)
    cv2 = variance / (mean * mean) if mean != 0 else None
    return OutcomeDistribution(tuple(outcomes), mean, variance, cv2, total_p)


def alpha(sequence: Sequence[Hypernode], t: TreeOracle, weight: WeightFunction, exact: bool = True):
    """Distortion product of one hypernode sequence.

    The per-level factor compares the weight the sequence step got to the
    share of subtree cost it holds; the empty product is 1, and an exact
    subtree-cost weight gives 1 at every step.
    """
    conv = Fraction if exact else float
    subcost = _subtree_cost_fn(t, conv)
    value = conv(1)
    for prev, cur in zip(sequence, sequence[1:]):
        succ = _successor_union(t, prev.nodes)
        w_all = conv(0)
        c_all = conv(0)
        for x in succ:
            w = conv(float(weight(x)))
            if not w > 0:
                raise NonpositiveWeight(x, w)
            w_all += w
            c_all += subcost(x)
        if c_all == 0:
            raise ValueError(f"successor forest of {prev!r} has zero total cost; alpha undefined")
        w_sel = sum(conv(float(weight(x))) for x in cur)
        c_sel = sum(subcost(x) for x in cur)
        value = value * (w_all / w_sel) * (c_sel / c_all)
    return value


@dataclass(frozen=True)
class AlphaStats:
    """Moments and maxima of alpha under the weighted-draw distribution."""

    mean: object
    variance: object
    max_value: object
    level_max_product: object
    sequences: int


def alpha_stats(
    t: TreeOracle,
    budget: int,
    weight: WeightFunction,
    root: Hypernode | None = None,
    max_sequences: int = DEFAULT_SEQUENCE_CAP,
    max_states: int = DEFAULT_STATE_CAP,
    exact: bool = True,
) -> AlphaStats:
    """Full enumeration of alpha over the weighted walk.

    Reports the exact expectation (1 when everything is correct), the
    variance and the maximum over all sequences, plus the looser bound
    built from per-level maxima of single-step factors over every
    reachable hypernode.
    """
    if root is None:
        root = t.root_hypernode
    conv = Fraction if exact else float
    od = enumerate_distribution(
        t, budget, ImportanceInduced(weight),
        root=root, max_sequences=max_sequences, exact=exact, weight=weight,
    )
    if exact:
        mean = sum(o.probability * o.alpha for o in od.outcomes)
        var = sum(o.probability * (o.alpha - mean) ** 2 for o in od.outcomes)
    else:
        mean = math.fsum(o.probability * o.alpha for o in od.outcomes)
        var = math.fsum(o.probability * (o.alpha - mean) ** 2 for o in od.outcomes)
    max_alpha = max(o.alpha for o in od.outcomes)

    subcost = _subtree_cost_fn(t, conv)
    wvalue = lambda x: conv(float(weight(x)))
    product = conv(1)
    level = {root.nodes}
    visited = 1
    while level:
        nxt = set()
        level_max = None
        for nodes in level:
            succ = _successor_union(t, nodes)
            if not succ:
                continue
            take = min(budget, len(succ))
            w_of = {x: wvalue(x) for x in succ}
            c_of = {x: subcost(x) for x in succ}
            r_all = sum(w_of.values())
            c_all = sum(c_of.values())
            for sub in itertools.combinations(succ, take):
                factor = (r_all / sum(w_of[x] for x in sub)) * (sum(c_of[x] for x in sub) / c_all)
                if level_max is None or factor > level_max:
                    level_max = factor
                key = tuple(sorted(sub))
                if key not in nxt:
                    nxt.add(key)
                    visited += 1
                    if visited > max_states:
                        raise CapExceeded(f"more than {max_states} reachable hypernodes")
        if level_max is not None:
            product *= level_max
        level = nxt
    return AlphaStats(mean, var, max_alpha, product, len(od.outcomes))


def recursive_variance(
    t: TreeOracle,
    budget: int,
    weight: WeightFunction,
    root: Hypernode | None = None,
    max_states: int = DEFAULT_STATE_CAP,
    exact: bool = True,
):
    """Variance of the weighted estimate by the hyperchild recursion.

    Evaluates, per hypernode v with successor set S and candidates w,

        Var(v) = sum_w  (r(S)/r(w)) * (Var(w) + Cost(T_w)^2) / C(|S|-1, |w|-1)
                 - Cost(T_S)^2

    with variance 0 at terminal hypernodes.  Memoized per hypernode; this
    is the closed-form twin of the enumeration variance and the pair is
    asserted equal in the test suite.
    """
    if root is None:
        root = t.root_hypernode
    conv = Fraction if exact else float
    subcost = _subtree_cost_fn(t, conv)
    wvalue = lambda x: conv(float(weight(x)))
    memo: dict = {}
    visited = 0

    def var_of(nodes):
        nonlocal visited
        known = memo.get(nodes)
        if known is not None:
            return known
        visited += 1
        if visited > max_states:
            raise CapExceeded(f"more than {max_states} hypernode states")
        succ = _successor_union(t, nodes)
        if not succ:
            memo[nodes] = conv(0)
            return memo[nodes]
        take = min(budget, len(succ))
        binom = comb(len(succ) - 1, take - 1)
        w_of = {x: wvalue(x) for x in succ}
        c_of = {x: subcost(x) for x in succ}
        for x, w in w_of.items():
            if not w > 0:
                raise NonpositiveWeight(x, w)
        r_all = sum(w_of.values())
        c_all = sum(c_of.values())
        acc = conv(0)
        for sub in itertools.combinations(succ, take):
            wnodes = tuple(sorted(sub))
            r_sel = sum(w_of[x] for x in sub)
            c_sel = sum(c_of[x] for x in sub)
            acc += (r_all / r_sel) * (var_of(wnodes) + c_sel * c_sel) / binom
        memo[nodes] = acc - c_all * c_all
        return memo[nodes]

    return var_of(root.nodes)


def recursive_cv2(
    t: TreeOracle,
    budget: int,
    weight: WeightFunction,
    root: Hypernode | None = None,
    max_states: int = DEFAULT_STATE_CAP,
    exact: bool = True,
):
    """Squared coefficient of variation by its own hyperchild recursion.

    Same shape as ``recursive_variance`` but normalized by subtree costs
    level by level; must agree with variance / cost^2 exactly.  Raises on
    a zero-cost forest, where the ratio is undefined.
    """
    if root is None:
        root = t.root_hypernode
    conv = Fraction if exact else float
    subcost = _subtree_cost_fn(t, conv)
    wvalue = lambda x: conv(float(weight(x)))
    memo: dict = {}
    visited = 0

    def cv2_of(nodes):
        nonlocal visited
        known = memo.get(nodes)
        if known is not None:
            return known
        visited += 1
        if visited > max_states:
            raise CapExceeded(f"more than {max_states} hypernode states")
        cost_v = sum(subcost(x) for x in nodes)
        if cost_v == 0:
            raise ValueError(f"forest at {nodes!r} has zero total cost; CV undefined")
        succ = _successor_union(t, nodes)
        if not succ:
            memo[nodes] = conv(0)
            return memo[nodes]
        take = min(budget, len(succ))
        binom = comb(len(succ) - 1, take - 1)
        w_of = {x: wvalue(x) for x in succ}
        c_of = {x: subcost(x) for x in succ}
        r_all = sum(w_of.values())
        c_all = sum(c_of.values())
        acc = conv(0)
        for sub in itertools.combinations(succ, take):
            wnodes = tuple(sorted(sub))
            r_sel = sum(w_of[x] for x in sub)
            c_sel = sum(c_of[x] for x in sub)
            ratio = c_sel / cost_v
            acc += (r_all / r_sel) * ratio * ratio * (cv2_of(wnodes) + 1) / binom
        ratio_s = c_all / cost_v
        memo[nodes] = acc - ratio_s * ratio_s
        return memo[nodes]

    return cv2_of(root.nodes)


def cost_split_identity(t: TreeOracle, h: Hypernode, budget: int):
    """Both sides of the hyperchild cost-splitting identity, exactly.

    The cost of the successor forest of ``h`` must equal the sum over
    candidate hypernodes w of Cost(T_w) / C(|S|-1, |w|-1); every candidate
    contains each successor equally often, so the weights cancel.  Returns
    (lhs, rhs) as exact rationals for the caller to compare.
    """
    subcost = _subtree_cost_fn(t, Fraction)
    succ = _successor_union(t, h.nodes)
    lhs = sum((subcost(x) for x in succ), Fraction(0))
    if not succ:
        return lhs, Fraction(0)
    take = min(budget, len(succ))
    binom = comb(len(succ) - 1, take - 1)
    rhs = Fraction(0)
    for sub in itertools.combinations(succ, take):
        rhs += sum(subcost(x) for x in sub) / Fraction(binom)
    return lhs, rhs


def bounds_csv_row(instance: str, budget: int, importance: str, variance, cv2, stats: AlphaStats) -> list[str]:
    """One exportable row of the bound diagnostics for an instance."""
    return [
        instance,
        str(budget),
        importance,
        repr(float(variance)),
        repr(float(cv2)),
        repr(float(stats.variance)),
        repr(float(stats.max_value)),
        repr(float(stats.level_max_product)),
    ]
