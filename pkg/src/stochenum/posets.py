"""Partial orders and their linear-extension decision trees.

A poset on elements 0..n-1 is stored as bitmask rows of its transitively
closed strict order.  Its decision tree branches on the choice of a
maximal element to delete next; every root-to-leaf path is one linear
extension (listed greatest first), so counting leaves counts extensions.
The tree is exposed through the generic forest oracle so the estimators
can walk it, and an independent dynamic program over deleted-sets gives
exact counts to check the estimators against.
"""

from __future__ import annotations

import math
import random
from typing import Callable, Iterable

from .errors import CapExceeded, EstimateOverflow
from .sampling import RandomSource, derive_seed
from .tree import Hypernode, TreeOracle

MAX_DP_ELEMENTS = 24  # the deleted-set table is exponential in n

IMPORTANCE_KINDS = ("uniform", "f1", "f2", "f3", "ideal")


class PosetFormatError(ValueError):
    """A poset file could not be parsed; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class Poset:
    """Transitively closed strict partial order on range(n).

    ``gt[i]`` is the bitmask of elements j with v_i > v_j.  The relation
    must be irreflexive and transitively closed; use ``from_relations``
    to build one from arbitrary generating pairs.
    """

    __slots__ = ("n", "gt", "above")

    def __init__(self, n: int, gt: Iterable[int]):
        self.n = n
        self.gt = tuple(gt)
        if n < 1:
            raise ValueError("poset needs at least one element")
        if len(self.gt) != n:
            raise ValueError(f"expected {n} relation rows, got {len(self.gt)}")
        mask_all = (1 << n) - 1
        for i, row in enumerate(self.gt):
            if row & ~mask_all:
                raise ValueError(f"row {i} references elements outside range({n})")
            if row >> i & 1:
                raise ValueError(f"relation is not irreflexive at element {i}")
        for i in range(n):
            closed = self.gt[i]
            row = self.gt[i]
            for k in range(n):
                if row >> k & 1:
                    closed |= self.gt[k]
            if closed != row:
                raise ValueError(f"relation is not transitively closed at element {i}")
        above = [0] * n
        for i in range(n):
            row = self.gt[i]
            for j in range(n):
                if row >> j & 1:
                    if self.gt[j] >> i & 1:
                        raise ValueError(f"antisymmetry violated between {i} and {j}")
                    above[j] |= 1 << i
        self.above = tuple(above)

    @classmethod
    def from_relations(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Poset":
        """Build from generating pairs (i, j) meaning v_i > v_j, with closure.

        Raises ValueError when the closure produces a cycle.
        """
        gt = [0] * n
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"pair ({i}, {j}) outside range({n})")
            gt[i] |= 1 << j
        for k in range(n):
            for i in range(n):
                if gt[i] >> k & 1:
                    gt[i] |= gt[k]
        for i in range(n):
            if gt[i] >> i & 1:
                raise ValueError(f"relation cycle through element {i}")
        return cls(n, gt)

    def greater(self, i: int, j: int) -> bool:
        return bool(self.gt[i] >> j & 1)

    def relation_pairs(self) -> list[tuple[int, int]]:
        """All closed pairs (i, j) with v_i > v_j, sorted."""
        return [(i, j) for i in range(self.n) for j in range(self.n) if self.gt[i] >> j & 1]

    def cover_pairs(self) -> list[tuple[int, int]]:
        """Transitive reduction: pairs with nothing strictly between."""
        out = []
        for i, j in self.relation_pairs():
            if not (self.gt[i] & self.above[j]):
                out.append((i, j))
        return out

    def descendant_counts(self) -> tuple[int, ...]:
        """Per element: number of elements below it, itself included."""
        return tuple(1 + row.bit_count() for row in self.gt)

    def __eq__(self, other) -> bool:
        return isinstance(other, Poset) and self.n == other.n and self.gt == other.gt

    def __hash__(self):
        return hash((self.n, self.gt))

    def __repr__(self) -> str:
        return f"Poset(n={self.n}, pairs={self.cover_pairs()!r})"


def random_poset(n: int, p: float, seed: int) -> Poset:
    """Independent pair relations with probability p, then closure.

    For i < j the candidate relation is v_i > v_j, so every generated
    relation points from lower to higher index and no cycle can arise.
    """
    if n < 1:
        raise ValueError("poset needs at least one element")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {p}")
    src = RandomSource(seed)
    gt = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if src.random() < p:
                gt[i] |= 1 << j
    for k in range(n):
        for i in range(n):
            if gt[i] >> k & 1:
                gt[i] |= gt[k]
    return Poset(n, gt)


def count_linear_extensions(poset: Poset) -> int:
    """Exact extension count by dynamic programming over deleted-sets.

    A deletable set is always upward closed, so the state space is the
    up-sets of the order; each state counts the deletion orders of what
    remains.  Exact integer arithmetic throughout.
    """
    n = poset.n
    if n > MAX_DP_ELEMENTS:
        raise CapExceeded(f"deleted-set table needs 2^{n} entries; cap is n <= {MAX_DP_ELEMENTS}")
    full = (1 << n) - 1
    above = poset.above
    memo = {full: 1}

    def ways(deleted: int) -> int:
        known = memo.get(deleted)
        if known is not None:
            return known
        total = 0
        remaining = full & ~deleted
        m = remaining
        while m:
            e = (m & -m).bit_length() - 1
            m &= m - 1
            if above[e] & remaining == 0:
                total += ways(deleted | (1 << e))
        memo[deleted] = total
        return total

    return ways(0)


class LEDecisionTree(TreeOracle):
    """Decision tree of one poset, as a forest oracle.

    A node is a (prefix, deleted-mask) pair: the prefix lists the elements
    deleted so far in order, the mask is the same set as bits.  The prefix
    makes equality path-exact (two different deletion orders of the same
    set are different tree nodes); the mask makes per-node work O(1).
    Cost is 1 on depth-n leaves and 0 elsewhere, so forest cost equals the
    extension count.

    The memo tables only grow and their entries are pure functions of the
    key, so concurrent readers at worst recompute an entry; worker
    processes each fork their own copy.
    """

    def __init__(self, poset: Poset):
        self.poset = poset
        self.n = poset.n
        self._full = (1 << poset.n) - 1
        self._above = poset.above
        self._desc = poset.descendant_counts()
        self._max_memo: dict[int, tuple[int, ...]] = {}
        self._count_memo: dict[int, int] = {self._full: 1}

    @property
    def root_hypernode(self) -> Hypernode:
        return Hypernode((((), 0),))

    def maximal_after(self, deleted: int) -> tuple[int, ...]:
        """Maximal elements of the remaining poset, ascending."""
        out = self._max_memo.get(deleted)
        if out is None:
            remaining = self._full & ~deleted
            above = self._above
            out = tuple(
                e for e in range(self.n)
                if remaining >> e & 1 and above[e] & remaining == 0
            )
            self._max_memo[deleted] = out
        return out

    def successors(self, node) -> list:
        prefix, deleted = node
        return [(prefix + (e,), deleted | (1 << e)) for e in self.maximal_after(deleted)]

    def cost(self, node) -> float:
        return 1.0 if len(node[0]) == self.n else 0.0

    def depth(self, node) -> int:
        return len(node[0])

    def subtree_cost(self, node) -> int:
        return self.completions(node[1])

    def completions(self, deleted: int) -> int:
        """Number of ways to finish deleting; the node's exact subtree cost."""
        known = self._count_memo.get(deleted)
        if known is not None:
            return known
        total = 0
        for e in self.maximal_after(deleted):
            total += self.completions(deleted | (1 << e))
        self._count_memo[deleted] = total
        return total

    def features(self, node) -> tuple[int, int, int]:
        """(siblings including self, poset descendants including self, height).

        Undefined at the root, which never appears in a successor set.
        """
        prefix, deleted = node
        if not prefix:
            raise ValueError("the root node has no choice-point features")
        elem = prefix[-1]
        parent_deleted = deleted & ~(1 << elem)
        sib = len(self.maximal_after(parent_deleted))
        return sib, self._desc[elem], self.n - len(prefix)

    def fast_run_block(self, budget: int, weight, seed: int, start: int, stop: int) -> list[float]:
        """Weighted-walk estimates for run indices [start, stop).

        Draw-for-draw and float-for-float identical to the generic walk
        under the induced distribution (the equivalence is pinned by a
        test), but tracks hypernode members as deleted-set masks only.
        One walk never merges two members, so the path identity that node
        references carry is not needed inside a single run.
        """
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        n = self.n
        maximal_after = self.maximal_after
        value_at = weight.value_at
        counted = hasattr(weight, "evaluations")
        # Whole expansions keyed by deleted-set mask: the mask fixes the
        # depth (its popcount), so children and weights are mask-pure.
        expansion: dict[int, tuple] = {}
        base_seed = seed
        out = []
        for run in range(start, stop):
            rand = random.Random(derive_seed(base_seed, run)).random
            members = (0,)
            size = 1
            depth = 0
            d_product = 1.0
            total = 0.0
            while True:
                succ = []
                weights = []
                r_all = 0.0
                for mask in members:
                    entry = expansion.get(mask)
                    if entry is None:
                        kids = maximal_after(mask)
                        sib = len(kids)
                        child_depth = mask.bit_count() + 1
                        cms = []
                        ws = []
                        g0 = weight.guard_hits if counted else 0
                        for e in kids:
                            cm = mask | (1 << e)
                            cms.append(cm)
                            ws.append(value_at(cm, e, sib, child_depth))
                        entry = (cms, ws, (weight.guard_hits - g0) if counted else 0)
                        expansion[mask] = entry
                    elif counted:
                        weight.evaluations += len(entry[1])
                        weight.guard_hits += entry[2]
                    succ.extend(entry[0])
                    weights.extend(entry[1])
                    for w in entry[1]:
                        r_all += w
                count = len(succ)
                if not count:
                    break
                m = budget if budget < count else count
                u = rand() * r_all
                acc = 0.0
                first = count - 1
                for i in range(count):
                    acc += weights[i]
                    if u < acc:
                        first = i
                        break
                r_sel = weights[first]
                if m == 1:
                    chosen = (first,)
                else:
                    rest = count - 1
                    idx = list(range(rest))
                    for i in range(m - 1):
                        j = i + int(rand() * (rest - i))
                        idx[i], idx[j] = idx[j], idx[i]
                    chosen = [first]
                    for i in range(m - 1):
                        k = idx[i]
                        orig = k if k < first else k + 1
                        chosen.append(orig)
                        r_sel += weights[orig]
                d_k = (m / size) * (r_all / r_sel)
                d_product *= d_k
                if not math.isfinite(d_product):
                    # Rare; replay through the generic walk, which carries a
                    # log-space shadow of the product for the error report.
                    from .estimators import ImportanceInduced, sep_estimate
                    from .sampling import RandomChoice

                    sep_estimate(
                        self, budget, ImportanceInduced(weight),
                        RandomChoice(RandomSource(derive_seed(base_seed, run))),
                        record=False,
                    )
                    raise EstimateOverflow(math.inf)
                depth += 1
                if depth == n:
                    total += d_product
                members = [succ[i] for i in chosen]
                size = m
            out.append(total)
        return out


class _TreeWeight:
    """Shared plumbing for the decision-tree weight functions.

    Values depend only on (deleted set, chosen element), which repeat
    heavily across runs, so they are memoized per tree under a packed
    integer key (the element-count cap keeps elements below 32).

    ``value_at`` is the estimator fast path: it takes the choice-point
    context (sibling count, depth) the caller already has, instead of
    deriving it from a node reference.
    """

    def __init__(self, tree: LEDecisionTree):
        self.tree = tree
        self._memo: dict = {}

    def _compute(self, mask, elem, sib, depth) -> float:
        raise NotImplementedError

    def __call__(self, node) -> float:
        prefix, mask = node
        elem = prefix[-1]
        key = mask << 5 | elem
        value = self._memo.get(key)
        if value is None:
            sib = len(self.tree.maximal_after(mask & ~(1 << elem)))
            value = self._compute(mask, elem, sib, len(prefix))
            self._memo[key] = value
        return value

    def value_at(self, mask, elem, sib, depth) -> float:
        key = mask << 5 | elem
        value = self._memo.get(key)
        if value is None:
            value = self._compute(mask, elem, sib, depth)
            self._memo[key] = value
        return value


class _UniformWeight:
    def __call__(self, node) -> float:
        return 1.0

    def value_at(self, mask, elem, sib, depth) -> float:
        return 1.0


class _SiblingCubed(_TreeWeight):
    """Weight sib(x)^3: favors nodes from wide choice points."""

    def _compute(self, mask, elem, sib, depth) -> float:
        return float(sib * sib * sib)


class _SiblingCubedDescendants(_TreeWeight):
    """Weight sib(x)^3 * desc(x): wide choice points, heavy elements."""

    def _compute(self, mask, elem, sib, depth) -> float:
        return float(sib * sib * sib * self.tree._desc[elem])


class _SiblingCubedHeightRatio(_TreeWeight):
    """Weight sib(x)^3 * (height+desc)/(height-desc), denominator guarded.

    height - desc can reach 0 or -1 (an element dominating everything that
    remains); the denominator is clamped to 1 there, degrading the ratio
    factor to height + desc.  Every evaluation is counted, memoized or
    not, so the reported guard-hit fraction covers all estimator lookups.
    """

    def __init__(self, tree: LEDecisionTree):
        super().__init__(tree)
        self.evaluations = 0
        self.guard_hits = 0
        self._guarded: dict = {}

    def _compute(self, mask, elem, sib, depth) -> float:
        desc = self.tree._desc[elem]
        height = self.tree.n - depth
        denom = height - desc
        guarded = denom < 1
        if guarded:
            denom = 1
        self._guarded[mask << 5 | elem] = guarded
        return sib * sib * sib * (height + desc) / denom

    def __call__(self, node) -> float:
        value = super().__call__(node)
        self.evaluations += 1
        if self._guarded[node[1] << 5 | node[0][-1]]:
            self.guard_hits += 1
        return value

    def value_at(self, mask, elem, sib, depth) -> float:
        value = super().value_at(mask, elem, sib, depth)
        self.evaluations += 1
        if self._guarded[mask << 5 | elem]:
            self.guard_hits += 1
        return value


class _IdealWeight:
    """Exact subtree cost as the weight; induces the zero-variance draw."""

    def __init__(self, tree: LEDecisionTree):
        if tree.n > MAX_DP_ELEMENTS:
            raise CapExceeded(
                f"exact-cost weights need the deleted-set table; cap is n <= {MAX_DP_ELEMENTS}"
            )
        self.tree = tree

    def __call__(self, node) -> float:
        return float(self.tree.completions(node[1]))

    def value_at(self, mask, elem, sib, depth) -> float:
        return float(self.tree.completions(mask))


def importance_function(tree: LEDecisionTree, kind: str) -> Callable:
    """Weight function for a decision tree, by name.

    Kinds: uniform, f1 (sib^3), f2 (sib^3 * desc), f3 (sib^3 with the
    guarded height ratio), ideal (exact subtree cost).  Bare digits are
    accepted as aliases for f1..f3.
    """
    key = str(kind).lower()
    if key in ("1", "2", "3"):
        key = "f" + key
    if key == "uniform":
        return _UniformWeight()
    if key == "f1":
        return _SiblingCubed(tree)
    if key == "f2":
        return _SiblingCubedDescendants(tree)
    if key == "f3":
        return _SiblingCubedHeightRatio(tree)
    if key == "ideal":
        return _IdealWeight(tree)
    raise ValueError(f"unknown importance kind {kind!r}; expected one of {IMPORTANCE_KINDS}")


def fixture_poset() -> Poset:
    """Five-element fixture with two maximal elements and 7 extensions."""
    return Poset.from_relations(5, [(0, 2), (1, 2), (1, 3), (2, 4)])


def load_poset(path) -> Poset:
    """Read the text format: comment lines '#', then n, then 'i j' pairs.

    The generating pairs are transitively closed on load; cycles are
    rejected.
    """
    pairs = []
    n = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if n is None:
                if len(fields) != 1:
                    raise PosetFormatError(line_no, f"expected the element count, got {raw.strip()!r}")
                try:
                    n = int(fields[0])
                except ValueError:
                    raise PosetFormatError(line_no, f"element count {fields[0]!r} is not an integer") from None
                if n < 1:
                    raise PosetFormatError(line_no, f"element count must be positive, got {n}")
                continue
            if len(fields) != 2:
                raise PosetFormatError(line_no, f"expected 'i j', got {raw.strip()!r}")
            try:
                i, j = int(fields[0]), int(fields[1])
            except ValueError:
                raise PosetFormatError(line_no, f"non-integer pair {raw.strip()!r}") from None
            if not (0 <= i < n and 0 <= j < n):
                raise PosetFormatError(line_no, f"pair ({i}, {j}) outside range({n})")
            pairs.append((line_no, i, j))
    if n is None:
        raise PosetFormatError(0, "file contains no element count")
    try:
        return Poset.from_relations(n, [(i, j) for _, i, j in pairs])
    except ValueError as exc:
        raise PosetFormatError(pairs[-1][0] if pairs else 0, str(exc)) from exc


def save_poset(poset: Poset, path) -> None:
    """Write the transitive reduction in the text format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{poset.n}\n")
        for i, j in poset.cover_pairs():
            fh.write(f"{i} {j}\n")
