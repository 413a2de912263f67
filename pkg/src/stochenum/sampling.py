"""Randomness contract and the selection primitives used by estimators.

Two kinds of choice source expose one interface: a seeded pseudo-random
source for production runs, and a scripted source that replays a fixed
list of (phase, label) selections so known trajectories can be driven
through the estimators verbatim.

The PRNG is the stdlib Mersenne Twister (MT19937, 19937-bit state).
Per-run substreams are derived by hashing (seed, run index) through
SHA-256, which is stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib
import random
from fractions import Fraction
from math import comb
from typing import Callable, Sequence

from .tree import Hypernode

# A weight function maps node references to strictly positive numbers
# (int, float or Fraction all work; analysis code treats the returned
# value as an exact rational).
WeightFunction = Callable


class ScriptError(RuntimeError):
    """A scripted choice source was driven off its script."""


class NonpositiveWeight(ValueError):
    """An importance evaluation returned a weight <= 0."""

    def __init__(self, node, value):
        super().__init__(f"importance weight {value!r} at node {node!r} is not positive")
        self.node = node
        self.value = value


def derive_seed(*parts) -> int:
    """Collapse a (seed, index, ...) path into one 128-bit stream seed."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:16], "big")


class RandomSource:
    """Seedable uniform stream: reals in [0,1) and integers in [0,k)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = random.Random(self.seed)
        # Bound method, not a wrapper: random() is the innermost hot call.
        self.random = self._rng.random

    def randrange(self, k: int) -> int:
        return self._rng.randrange(k)

    def substream(self, index) -> "RandomSource":
        """Independent stream for run ``index``; single-owner, not shared."""
        return RandomSource(derive_seed(self.seed, index))


class ChoiceSource:
    """Interface shared by random and scripted selection."""

    def pick_weighted(self, weights: Sequence, labels: Sequence | None = None) -> int:
        """Index i with probability weights[i] / sum(weights)."""
        raise NotImplementedError

    def pick_subset(self, n: int, k: int, labels: Sequence | None = None) -> tuple:
        """k distinct indices from range(n), each k-subset equally likely."""
        raise NotImplementedError


class RandomChoice(ChoiceSource):
    def __init__(self, source: RandomSource | int):
        self.source = source if isinstance(source, RandomSource) else RandomSource(source)

    def pick_weighted(self, weights, labels=None) -> int:
        total = 0.0
        for w in weights:
            total += w
        u = self.source.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1

    def pick_subset(self, n, k, labels=None) -> tuple:
        # Partial Fisher-Yates: first k slots of a shuffle are a uniform
        # k-permutation, hence a uniform k-subset.  Index draws go through
        # random() directly; the 2^-53 scaling bias is far below anything
        # the statistical checks can see and it is several times faster
        # than randrange on this hot path.
        idx = list(range(n))
        rand = self.source.random
        for i in range(k):
            j = i + int(rand() * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        return tuple(idx[:k])


class ScriptedChoice(ChoiceSource):
    """Replays pre-recorded selections, identified by node label.

    Entries are ("weighted", label) for a single weighted pick and
    ("subset", (label, ...)) for a uniform subset draw.  The script must
    be consumed exactly; running past the end raises ScriptError.
    """

    def __init__(self, entries: Sequence[tuple]):
        self._entries = list(entries)
        self._pos = 0

    def _next(self, phase: str):
        if self._pos >= len(self._entries):
            raise ScriptError(f"script exhausted; needed a {phase!r} entry")
        entry = self._entries[self._pos]
        self._pos += 1
        if entry[0] != phase:
            raise ScriptError(f"script entry {entry!r} does not match phase {phase!r}")
        return entry[1]

    def pick_weighted(self, weights, labels=None) -> int:
        label = self._next("weighted")
        i = self._resolve(label, labels, len(weights))
        if weights[i] <= 0:
            raise NonpositiveWeight(label, weights[i])
        return i

    def pick_subset(self, n, k, labels=None) -> tuple:
        if k == 0:
            return ()
        chosen = self._next("subset")
        if len(chosen) != k:
            raise ScriptError(f"scripted subset {chosen!r} has size {len(chosen)}, expected {k}")
        return tuple(self._resolve(label, labels, n) for label in chosen)

    def exhausted(self) -> bool:
        return self._pos == len(self._entries)

    @staticmethod
    def _resolve(label, labels, n) -> int:
        if labels is None:
            if isinstance(label, int) and 0 <= label < n:
                return label
            raise ScriptError(f"cannot resolve scripted label {label!r} without candidate labels")
        try:
            return list(labels).index(label)
        except ValueError:
            raise ScriptError(f"scripted label {label!r} not among candidates {list(labels)!r}") from None


def weighted_pick(weights: Sequence, choice: ChoiceSource, labels: Sequence | None = None) -> int:
    """Pick an index proportionally to ``weights``.

    All weights must be strictly positive and the sequence nonempty.
    Linear cumulative scan; candidate sets here are small per step.
    """
    if len(weights) == 0:
        raise ValueError("cannot pick from an empty weight sequence")
    for i, w in enumerate(weights):
        if not w > 0:
            node = labels[i] if labels is not None else i
            raise NonpositiveWeight(node, w)
    return choice.pick_weighted(weights, labels)


def uniform_subset(pool: Sequence, k: int, choice: ChoiceSource) -> tuple:
    """Uniformly random k-subset of ``pool`` (selection order, not sorted)."""
    if k < 0 or k > len(pool):
        raise ValueError(f"cannot draw {k} elements from a pool of {len(pool)}")
    picked = choice.pick_subset(len(pool), k, labels=pool)
    return tuple(pool[i] for i in picked)


def _draw_two_phase(succ: Sequence, weights: Sequence[float], take: int, choice: ChoiceSource) -> tuple:
    """One weighted pick, then take-1 more uniformly from the rest.

    Returns the selected indices into ``succ`` in draw order.  Weight
    validation is the caller's job; the scripted source still rejects a
    scripted pick that lands on a nonpositive weight.
    """
    first = choice.pick_weighted(weights, labels=succ)
    if take == 1:
        return (first,)
    rest_pool = list(succ)
    del rest_pool[first]
    picked = choice.pick_subset(len(rest_pool), take - 1, labels=rest_pool)
    return (first,) + tuple(j if j < first else j + 1 for j in picked)


def select_hypernode_by_importance(
    succ: Sequence,
    budget: int,
    weight: WeightFunction,
    choice: ChoiceSource,
) -> tuple[Hypernode, Fraction]:
    """Draw the next hypernode with probability proportional to its weight.

    The two-phase procedure (one weighted pick, the rest uniform) selects
    each candidate subset w with exact probability

        P(w) = (r(w) / r(S)) / C(|S| - 1, |w| - 1)

    which is returned alongside the hypernode as an exact rational in
    terms of the evaluated weights.
    """
    if not succ:
        raise ValueError("successor set is empty; no hypernode to select")
    succ = tuple(succ)
    raw = [weight(x) for x in succ]
    for node, w in zip(succ, raw):
        if not w > 0:
            raise NonpositiveWeight(node, w)
    take = min(budget, len(succ))
    sel = _draw_two_phase(succ, [float(w) for w in raw], take, choice)
    r_all = sum(Fraction(w) for w in raw)
    r_sel = sum(Fraction(raw[i]) for i in sel)
    prob = r_sel / r_all / comb(len(succ) - 1, take - 1)
    return Hypernode(tuple(succ[i] for i in sel)), prob
