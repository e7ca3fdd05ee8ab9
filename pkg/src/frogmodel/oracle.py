"""Exact first-passage laws for finite configurations by exhaustive enumeration.

Every active particle splits into 2d equally likely moves per step, so each
leaf of the outcome tree at depth h carries weight (2d)^-(moves on its path).
Weights are kept as integers over the common denominator (2d)^B, where B bounds
the number of moves on any path, and converted to exact fractions at the end.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from ._io import write_csv
from .engine import ResourceLimitError
from .lattice import as_site, check_dimension, unit_steps

DEFAULT_BUDGET = 10**7


class OracleBudgetError(ResourceLimitError):
    def __init__(self, leaves: int, budget: int):
        super().__init__(f"refused: outcome tree has up to {leaves} leaves, budget is {budget}")
        self.leaves = leaves
        self.budget = budget


@dataclass(frozen=True)
class FiniteConfig:
    """Finitely many particles: `occupancy` maps sites to counts, all other sites are empty."""

    dimension: int
    occupancy: Mapping[tuple[int, ...], int]
    source: tuple[int, ...] = None

    def __post_init__(self):
        d = check_dimension(self.dimension)
        occ = {}
        for site, count in dict(self.occupancy).items():
            count = int(count)
            if count < 0:
                raise ValueError("occupancy counts must be nonnegative")
            if count:
                occ[as_site(site, d)] = count
        object.__setattr__(self, "occupancy", dict(sorted(occ.items())))
        src = (0,) * d if self.source is None else as_site(self.source, d)
        object.__setattr__(self, "source", src)

    @classmethod
    def interval(cls, lo: int, hi: int, count: int = 1, source=(0,)):
        """d = 1, `count` particles on every site of [lo, hi]."""
        return cls(1, {(x,): count for x in range(lo, hi + 1)}, source)

    def eta(self, site) -> int:
        return self.occupancy.get(site, 0)

    def to_spec(self, master_seed: int = 0):
        from .randomness import InitialConfigSpec

        return InitialConfigSpec.finite(self.dimension, self.occupancy, master_seed=master_seed)


def move_bound(config: FiniteConfig, horizon: int) -> int:
    """Upper bound on the total number of particle moves along any path of the tree.

    Particles moving at step t were woken by time t - 1, hence sit within L1
    distance t - 1 of the source.
    """
    if config.eta(config.source) == 0:
        return 0
    src = config.source
    total = 0
    for t in range(1, horizon + 1):
        total += sum(c for s, c in config.occupancy.items()
                     if sum(abs(a - b) for a, b in zip(s, src)) <= t - 1)
    return total


def leaf_bound(config: FiniteConfig, horizon: int) -> int:
    return (2 * config.dimension) ** move_bound(config, horizon)


@dataclass
class ExactLaw:
    """Exact joint information from the enumeration.

    `passage[y][t]` is P[T(source, y) = t] for t <= horizon and `visited_size[k]`
    is P[|xi_horizon| = k]. All values are Fractions.
    """

    config: FiniteConfig
    horizon: int
    passage: dict = field(default_factory=dict)
    visited_size: dict = field(default_factory=dict)
    total: Fraction = Fraction(0)
    leaves: int = 0

    def prob_within(self, y, n: int | None = None) -> Fraction:
        """P[T(source, y) <= n] (n defaults to the horizon)."""
        n = self.horizon if n is None else n
        law = self.passage.get(as_site(y, self.config.dimension), {})
        return sum((p for t, p in law.items() if t <= n), Fraction(0))

    def distribution(self, n: int | None = None) -> dict:
        n = self.horizon if n is None else n
        return {y: self.prob_within(y, n) for y in sorted(self.passage)}

    def visited_size_at(self, n: int) -> dict:
        """Law of |xi_n| for n <= horizon (needs the per-leaf size at n; recomputed lazily)."""
        if n == self.horizon:
            return dict(self.visited_size)
        return enumerate_outcomes(self.config, n).visited_size


def enumerate_outcomes(config: FiniteConfig, horizon: int, budget: int = DEFAULT_BUDGET) -> ExactLaw:
    horizon = int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    bound = move_bound(config, horizon)
    leaves = (2 * config.dimension) ** bound
    if leaves > budget:
        raise OracleBudgetError(leaves, budget)
    steps = [tuple(int(c) for c in s) for s in unit_steps(config.dimension)]
    two_d = len(steps)
    passage: dict = {}
    sizes: Counter = Counter()
    total = 0
    n_leaves = 0

    def leaf(visited, moves):
        nonlocal total, n_leaves
        w = two_d ** (bound - moves)
        total += w
        n_leaves += 1
        sizes[len(visited)] += w
        for y, t in visited.items():
            passage.setdefault(y, Counter())[t] += w

    def step(t, positions, visited, moves):
        if t == horizon or not positions:
            leaf(visited, moves)
            return
        m = len(positions)
        # odometer over the (2d)^m joint moves, first particle varying slowest
        choice = [0] * m
        while True:
            new_pos = [tuple(a + b for a, b in zip(p, steps[c])) for p, c in zip(positions, choice)]
            new_visited = visited
            woken = []
            for q in sorted(set(new_pos)):
                if q not in visited:
                    if new_visited is visited:
                        new_visited = dict(visited)
                    new_visited[q] = t + 1
                    woken.extend([q] * config.eta(q))
            step(t + 1, new_pos + woken, new_visited, moves + m)
            i = m - 1
            while i >= 0 and choice[i] == two_d - 1:
                choice[i] = 0
                i -= 1
            if i < 0:
                break
            choice[i] += 1

    src = config.source
    if config.eta(src) == 0:
        leaf({}, 0)
    else:
        step(0, [src] * config.eta(src), {src: 0}, 0)

    denom = two_d ** bound
    law = ExactLaw(config, horizon, leaves=n_leaves)
    law.total = Fraction(total, denom)
    law.passage = {y: {t: Fraction(w, denom) for t, w in sorted(c.items())} for y, c in sorted(passage.items())}
    law.visited_size = {k: Fraction(w, denom) for k, w in sorted(sizes.items())}
    return law


def exact_passage_distribution(config: FiniteConfig, horizon: int,
                               budget: int = DEFAULT_BUDGET) -> dict[tuple[int, ...], Fraction]:
    """Exact P[T(source, y) <= horizon] for every y reachable with positive probability."""
    return enumerate_outcomes(config, horizon, budget).distribution()


def write_distribution_csv(path, dist: Mapping[tuple[int, ...], Fraction]):
    d = len(next(iter(dist))) if dist else 1
    header = [f"x{i + 1}" for i in range(d)] + ["numerator", "denominator", "probability"]
    rows = [list(y) + [p.numerator, p.denominator, float(p)] for y, p in sorted(dist.items())]
    return write_csv(path, header, rows)
