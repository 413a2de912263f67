"""Tree-cost estimators: single path, budgeted multi-path, and importance-weighted.

All three share one walk.  Starting from the root hypernode, each level
draws the next hypernode among the candidates, multiplies a per-level
correction factor D_k into a running product D (an estimate of the node
count of the current level), and accumulates average-node-cost times D.
The walk returns |root| times the accumulated total, an unbiased
estimator of the forest cost for any valid candidate distribution.

The budget-1 case degenerates to the classic single-path estimator; the
importance-weighted variant is the same walk under the distribution the
two-phase weighted draw induces.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import NamedTuple, Sequence

from .errors import EstimateOverflow
from .sampling import (
    ChoiceSource,
    NonpositiveWeight,
    RandomChoice,
    RandomSource,
    WeightFunction,
    _draw_two_phase,
    derive_seed,
)
from .tree import Hypernode, TreeOracle, subtree_cost_function


class Draw(NamedTuple):
    """One distribution draw: selected nodes plus the walk's level factor.

    ``d_multiplier`` is 1 / (C(|S|-1, m-1) * P(w)) in whatever simplified
    form the distribution can compute it exactly (|S|/m for the uniform
    case, r(S)/r(w) for the weighted case).
    """

    nodes: tuple
    probability: float
    d_multiplier: float


class HypernodeDistribution:
    """How the next hypernode is chosen among the candidates.

    ``draw`` samples; ``probability`` reports the exact selection
    probability of one candidate as a rational; ``support`` enumerates
    every candidate with its probability (exponential, analysis only).
    """

    def draw(self, succ: tuple, budget: int, choice: ChoiceSource) -> Draw:
        raise NotImplementedError

    def probability(self, succ: tuple, nodes: Sequence, budget: int) -> Fraction:
        raise NotImplementedError

    def support(self, succ: tuple, budget: int):
        take = min(budget, len(succ))
        for sub in itertools.combinations(succ, take):
            yield tuple(sorted(sub)), self.probability(succ, sub, budget)


class UniformHyperchild(HypernodeDistribution):
    """Every size-min(budget, |S|) subset of the successors equally likely."""

    def draw(self, succ, budget, choice):
        n = len(succ)
        m = min(budget, n)
        picked = choice.pick_subset(n, m, labels=succ)
        nodes = tuple(succ[i] for i in picked)
        return Draw(nodes, 1.0 / comb(n, m), n / m)

    def probability(self, succ, nodes, budget):
        n = len(succ)
        return Fraction(1, comb(n, min(budget, n)))

    def support(self, succ, budget):
        take = min(budget, len(succ))
        p = Fraction(1, comb(len(succ), take))
        for sub in itertools.combinations(succ, take):
            yield tuple(sorted(sub)), p


class ImportanceInduced(HypernodeDistribution):
    """Two-phase weighted draw: P(w) proportional to the weight sum r(w).

    One node is picked with probability r(x)/r(S), the rest uniformly
    without replacement, giving P(w) = (r(w)/r(S)) / C(|S|-1, |w|-1).
    The exact-probability path canonicalizes weight values through
    float(); for integer and float weights (everything this package
    ships) the sampled and analyzed functions are therefore identical.
    """

    def __init__(self, weight: WeightFunction):
        self.weight = weight

    def _weights(self, succ) -> list[float]:
        weight = self.weight
        out = []
        for x in succ:
            w = float(weight(x))
            if not w > 0:
                raise NonpositiveWeight(x, w)
            out.append(w)
        return out

    def draw(self, succ, budget, choice):
        weight = self.weight
        weights = [weight(x) for x in succ]
        r_all = 0
        for i, w in enumerate(weights):
            if not w > 0:
                raise NonpositiveWeight(succ[i], w)
            r_all += w
        m = min(budget, len(succ))
        sel = _draw_two_phase(succ, weights, m, choice)
        r_sel = 0
        for i in sel:
            r_sel += weights[i]
        nodes = tuple(succ[i] for i in sel)
        prob = (r_sel / r_all) / comb(len(succ) - 1, m - 1)
        return Draw(nodes, prob, r_all / r_sel)

    def probability(self, succ, nodes, budget):
        weights = {x: Fraction(w) for x, w in zip(succ, self._weights(succ))}
        m = min(budget, len(succ))
        r_all = sum(weights.values())
        r_sel = sum(weights[x] for x in nodes)
        return r_sel / r_all / comb(len(succ) - 1, m - 1)

    def support(self, succ, budget):
        weights = [Fraction(w) for w in self._weights(succ)]
        take = min(budget, len(succ))
        denom = sum(weights) * comb(len(succ) - 1, take - 1)
        for idxs in itertools.combinations(range(len(succ)), take):
            nodes = tuple(sorted(succ[i] for i in idxs))
            yield nodes, sum(weights[i] for i in idxs) / denom


class ExplicitDistribution(HypernodeDistribution):
    """Distribution given as a table, for tests and worked examples.

    ``table`` maps a successor tuple (exactly as produced by the walk) to
    a sequence of (nodes, probability) pairs covering all candidates.
    """

    def __init__(self, table: dict):
        self._table = {
            tuple(succ): [(tuple(sorted(nodes)), Fraction(p)) for nodes, p in options]
            for succ, options in table.items()
        }
        for succ, options in self._table.items():
            for nodes, p in options:
                if not p > 0:
                    raise ValueError(f"candidate {nodes!r} under {succ!r} has probability {p}")

    def _options(self, succ):
        try:
            return self._table[tuple(succ)]
        except KeyError:
            raise KeyError(f"no distribution entry for successor set {succ!r}") from None

    def draw(self, succ, budget, choice):
        options = self._options(succ)
        idx = choice.pick_weighted(
            [float(p) for _, p in options], labels=[nodes for nodes, _ in options]
        )
        nodes, p = options[idx]
        dmul = float(1 / (comb(len(succ) - 1, len(nodes) - 1) * p))
        return Draw(nodes, float(p), dmul)

    def probability(self, succ, nodes, budget):
        key = tuple(sorted(nodes))
        for cand, p in self._options(succ):
            if cand == key:
                return p
        raise KeyError(f"no probability for candidate {key!r}")

    def support(self, succ, budget):
        yield from self._options(succ)


def ideal_cost_distribution(t: TreeOracle) -> ImportanceInduced:
    """Weighted draw with exact subtree costs as weights (zero variance)."""
    return ImportanceInduced(subtree_cost_function(t))


@dataclass(frozen=True)
class Trajectory:
    """One estimator run: the visited hypernodes and per-level accounting.

    ``estimate`` is |root| times the accumulated cost total.  The sequence
    fields are None when the run was made without recording (the hot path
    for large sweeps skips them).
    """

    root_size: int
    estimate: float
    stop_level: int
    log_d: float
    hypernodes: tuple | None = None
    d_factors: tuple | None = None
    d_products: tuple | None = None
    level_costs: tuple | None = None
    probabilities: tuple | None = None


def _walk(
    t: TreeOracle,
    root: Hypernode,
    budget: int,
    dist: HypernodeDistribution,
    choice: ChoiceSource,
    record: bool,
) -> Trajectory:
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    cost = t.cost
    successors = t.successors
    nodes = root.nodes
    size0 = len(nodes)
    csum = 0.0
    for v in nodes:
        csum += cost(v)
    total = csum / size0
    d_product = 1.0
    log_d = 0.0
    hypernodes = [root] if record else None
    d_factors = [] if record else None
    d_products = [] if record else None
    level_costs = [csum / size0] if record else None
    probabilities = [] if record else None
    level = 0
    while True:
        # Plain concatenation: node references are path-exact, so members
        # of one hypernode can never share a child.
        succ = []
        for v in nodes:
            succ.extend(successors(v))
        if not succ:
            break
        draw = dist.draw(succ, budget, choice)
        if not draw.probability > 0:
            raise ValueError(f"distribution returned probability {draw.probability!r}")
        wnodes = draw.nodes
        m = len(wnodes)
        d_k = (m / len(nodes)) * draw.d_multiplier
        d_product *= d_k
        log_d += math.log(d_k)
        if not math.isfinite(d_product):
            raise EstimateOverflow(log_d)
        csum = 0.0
        for w in wnodes:
            csum += cost(w)
        total += (csum / m) * d_product
        level += 1
        if record:
            hypernodes.append(Hypernode(wnodes))
            d_factors.append(d_k)
            d_products.append(d_product)
            level_costs.append(csum / m)
            probabilities.append(draw.probability)
        nodes = wnodes
    return Trajectory(
        root_size=size0,
        estimate=size0 * total,
        stop_level=level,
        log_d=log_d,
        hypernodes=tuple(hypernodes) if record else None,
        d_factors=tuple(d_factors) if record else None,
        d_products=tuple(d_products) if record else None,
        level_costs=tuple(level_costs) if record else None,
        probabilities=tuple(probabilities) if record else None,
    )


def sep_estimate(
    t: TreeOracle,
    budget: int,
    dist: HypernodeDistribution,
    choice: ChoiceSource,
    root: Hypernode | None = None,
    record: bool = True,
) -> Trajectory:
    """Budgeted estimator under an arbitrary hypernode distribution."""
    if root is None:
        root = t.root_hypernode
    return _walk(t, root, budget, dist, choice, record)


def sei_estimate(
    t: TreeOracle,
    budget: int,
    weight: WeightFunction,
    choice: ChoiceSource,
    root: Hypernode | None = None,
    record: bool = True,
) -> Trajectory:
    """Budgeted estimator with the distribution induced by a weight function.

    Identical to ``sep_estimate`` with ``ImportanceInduced(weight)``; the
    level factor simplifies to (|w|/|x|) * r(S)/r(w).
    """
    return sep_estimate(t, budget, ImportanceInduced(weight), choice, root, record)


def knuth_estimate(
    t: TreeOracle,
    choice: ChoiceSource,
    root: Hypernode | None = None,
    dist: HypernodeDistribution | None = None,
    record: bool = True,
) -> Trajectory:
    """Single-path estimator: walk root to leaf, multiply child counts.

    Equals the budgeted walk with budget 1.  The root must be a single
    node.
    """
    if root is None:
        root = t.root_hypernode
    if len(root) != 1:
        raise ValueError(f"single-path estimation needs a singleton root, got {len(root)} nodes")
    if dist is None:
        dist = UniformHyperchild()
    return _walk(t, root, 1, dist, choice, record)


@dataclass(frozen=True)
class RunSummary:
    """Aggregate of repeated independent runs.

    ``variance`` is the unbiased sample variance and is None for a single
    run.  Relative variance (identically CV squared) is variance over the
    squared mean and is None when the mean is zero.
    """

    runs: int
    mean: float
    variance: float | None
    stderr: float | None

    @property
    def rel_variance(self) -> float | None:
        if self.variance is None or self.mean == 0.0:
            return None
        return self.variance / (self.mean * self.mean)

    @property
    def cv2(self) -> float | None:
        return self.rel_variance

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean": self.mean,
            "variance": self.variance,
            "stderr": self.stderr,
            "rel_variance": self.rel_variance,
        }


def summarize(estimates: Sequence[float]) -> RunSummary:
    """Order-insensitive summary; exact-summation keeps it deterministic."""
    n = len(estimates)
    if n == 0:
        raise ValueError("no estimates to summarize")
    mean = math.fsum(estimates) / n
    if n < 2:
        return RunSummary(runs=n, mean=mean, variance=None, stderr=None)
    var = math.fsum((x - mean) ** 2 for x in estimates) / (n - 1)
    return RunSummary(runs=n, mean=mean, variance=var, stderr=math.sqrt(var / n))


def _run_block(t, root, budget, dist, seed, start, stop) -> list[float]:
    fast = getattr(t, "fast_run_block", None)
    if (
        fast is not None
        and type(dist) is ImportanceInduced
        and hasattr(dist.weight, "value_at")
        and root == t.root_hypernode
    ):
        try:
            return fast(budget, dist.weight, seed, start, stop)
        except Exception as exc:
            raise RuntimeError(f"estimator block [{start}, {stop}) (seed {seed}) failed: {exc}") from exc
    out = []
    for i in range(start, stop):
        choice = RandomChoice(RandomSource(derive_seed(seed, i)))
        try:
            out.append(_walk(t, root, budget, dist, choice, record=False).estimate)
        except Exception as exc:
            raise RuntimeError(f"estimator run {i} (seed {seed}) failed: {exc}") from exc
    return out


def run_many(
    t: TreeOracle,
    budget: int,
    dist: HypernodeDistribution,
    runs: int,
    seed: int,
    root: Hypernode | None = None,
    threads: int = 1,
) -> RunSummary:
    """R independent runs on substreams derived from (seed, run index).

    The estimate list depends only on the seed, never on the worker
    count, so summaries are reproducible under any parallelism.
    """
    if runs < 1:
        raise ValueError(f"need at least one run, got {runs}")
    if root is None:
        root = t.root_hypernode
    if threads <= 1 or runs < 4:
        estimates = _run_block(t, root, budget, dist, seed, 0, runs)
    else:
        chunk = max(64, (runs + threads * 4 - 1) // (threads * 4))
        bounds = [(s, min(s + chunk, runs)) for s in range(0, runs, chunk)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            blocks = list(
                pool.map(_run_block_star, [(t, root, budget, dist, seed, a, b) for a, b in bounds])
            )
        estimates = [x for block in blocks for x in block]
    return summarize(estimates)


def _run_block_star(args) -> list[float]:
    return _run_block(*args)
