"""
Exact probability computation on Markov chains and MDPs

Qualitative questions (probability exactly 0) are answered on the graph with
networkx; the remaining values come from policy iteration over exact
rational linear systems. An optional interval-iteration method certifies a
bracket [lower, upper] instead, with outward dyadic rounding so the bracket
stays sound.

Key Components:
    - UntilObjective / SolveMode / Interval: inputs and results
    - solve_until: values for every state plus the optimal adversary policy
    - mdp_until / mc_until / mdp_next / mdp_invariance / mc_invariance
    - mc_bounded_until: step-bounded until on chains
    - maximal_end_components: end-component decomposition
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from errors import NonConvergence
from product import MarkovChain, Mdp
from utils import ceil_dyadic, floor_dyadic

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100_000


class Optimize(str, Enum):
    MIN = "min"
    MAX = "max"

    @property
    def dual(self) -> "Optimize":
        return Optimize.MAX if self is Optimize.MIN else Optimize.MIN


@dataclass(frozen=True)
class SolveMode:
    """
    Attributes:
        optimize (Optimize): Adversary objective over choices.
        tolerance (Optional[Fraction]): None for exact solving, otherwise the
            width bound of the certified interval.
    """
    optimize: Optimize = Optimize.MIN
    tolerance: Optional[Fraction] = None

    @property
    def exact(self) -> bool:
        return self.tolerance is None

    def with_optimize(self, optimize: Optimize) -> "SolveMode":
        return SolveMode(optimize, self.tolerance)


@dataclass(frozen=True)
class UntilObjective:
    safe: FrozenSet[int]
    target: FrozenSet[int]


@dataclass(frozen=True)
class Interval:
    lower: Fraction
    upper: Fraction

    @classmethod
    def point(cls, value) -> "Interval":
        value = Fraction(value)
        return cls(value, value)

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> Fraction:
        """Exact value; midpoint for a proper interval."""
        return (self.lower + self.upper) / 2

    def complement(self) -> "Interval":
        return Interval(1 - self.upper, 1 - self.lower)

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class UntilSolution:
    values: Tuple[Interval, ...]
    policy: Tuple[int, ...]


# --- GRAPH PRECOMPUTATION ---

def _graph(mdp: Mdp, sources: Iterable[int]) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(mdp.size))
    for source in sources:
        for _, dist in mdp.choices[source]:
            graph.add_edges_from((source, target) for target in dist.support)
    return graph


def prob0_max(mdp: Mdp, obj: UntilObjective) -> FrozenSet[int]:
    """States where no resolution reaches the target through safe states."""
    maybe = [i for i in range(mdp.size) if i in obj.safe and i not in obj.target]
    graph = _graph(mdp, maybe)
    graph.add_edges_from((target, "goal") for target in obj.target)
    reach: Set[int] = set(obj.target)
    if obj.target:
        reach |= nx.ancestors(graph, "goal") - {"goal"}
    return frozenset(i for i in range(mdp.size) if i not in reach)


def _forced_reach(mdp: Mdp, obj: UntilObjective) -> Dict[int, int]:
    """Attractor ranks of states that reach the target with positive probability under every choice."""
    rank = {target: 0 for target in obj.target}
    level = 0
    changed = True
    while changed:
        changed = False
        level += 1
        added = []
        for i in range(mdp.size):
            if i in rank or i not in obj.safe:
                continue
            if all(any(t in rank for t in dist.support) for _, dist in mdp.choices[i]):
                added.append(i)
        for i in added:
            rank[i] = level
            changed = True
    return rank


def prob0_min(mdp: Mdp, obj: UntilObjective) -> FrozenSet[int]:
    """States where some resolution avoids the target almost surely."""
    rank = _forced_reach(mdp, obj)
    return frozenset(i for i in range(mdp.size) if i not in rank)


def _distance_policy(mdp: Mdp, obj: UntilObjective, maybe: Sequence[int]) -> Dict[int, int]:
    """For each maybe state, the first choice that moves closer to the target."""
    distance = {target: 0 for target in obj.target}
    policy: Dict[int, int] = {}
    remaining = set(maybe)
    level = 0
    while remaining:
        level += 1
        found = {}
        for i in sorted(remaining):
            for index, (_, dist) in enumerate(mdp.choices[i]):
                if any(distance.get(t, math.inf) < level for t in dist.support):
                    found[i] = index
                    break
        if not found:
            break
        for i, index in found.items():
            policy[i] = index
            distance[i] = level
            remaining.discard(i)
    return policy


# --- EXACT LINEAR ALGEBRA ---

def solve_linear(rows: Dict[int, Dict[int, Fraction]], rhs: Dict[int, Fraction]) -> Dict[int, Fraction]:
    """
    Solve a square sparse system exactly by Gaussian elimination.

    ``rows[i][j]`` is the coefficient of x_j in equation i; the unknowns are
    the keys of ``rows``.
    """
    rows = {i: dict(row) for i, row in rows.items()}
    rhs = dict(rhs)
    order = sorted(rows)
    for pivot in order:
        row = rows[pivot]
        coefficient = row.get(pivot, Fraction(0))
        if coefficient == 0:
            raise ArithmeticError(f"singular system at unknown {pivot}")
        for j in row:
            row[j] /= coefficient
        rhs[pivot] /= coefficient
        for other in order:
            if other == pivot:
                continue
            factor = rows[other].get(pivot)
            if not factor:
                continue
            target_row = rows[other]
            for j, value in row.items():
                updated = target_row.get(j, Fraction(0)) - factor * value
                if updated:
                    target_row[j] = updated
                else:
                    target_row.pop(j, None)
            rhs[other] -= factor * rhs[pivot]
    return {i: rhs[i] for i in order}


def _evaluate_policy(mdp: Mdp, obj: UntilObjective, zero: FrozenSet[int],
                     maybe: Sequence[int], policy: Dict[int, int]) -> Dict[int, Fraction]:
    rows: Dict[int, Dict[int, Fraction]] = {}
    rhs: Dict[int, Fraction] = {}
    unknowns = set(maybe)
    for i in maybe:
        _, dist = mdp.choices[i][policy[i]]
        row = {i: Fraction(1)}
        constant = Fraction(0)
        for target, p in dist.items():
            if target in obj.target:
                constant += p
            elif target in unknowns:
                row[target] = row.get(target, Fraction(0)) - p
        rows[i] = row
        rhs[i] = constant
    return solve_linear(rows, rhs)


def _choice_value(mdp: Mdp, obj: UntilObjective, values: Dict[int, Fraction], i: int, index: int) -> Fraction:
    _, dist = mdp.choices[i][index]
    total = Fraction(0)
    for target, p in dist.items():
        if target in obj.target:
            total += p
        else:
            total += p * values.get(target, Fraction(0))
    return total


def _better(optimize: Optimize, candidate: Fraction, current: Fraction) -> bool:
    return candidate > current if optimize is Optimize.MAX else candidate < current


def _solve_exact(mdp: Mdp, obj: UntilObjective, optimize: Optimize) -> UntilSolution:
    zero = prob0_max(mdp, obj) if optimize is Optimize.MAX else prob0_min(mdp, obj)
    maybe = [i for i in range(mdp.size) if i not in zero and i not in obj.target]
    if optimize is Optimize.MAX:
        policy = _distance_policy(mdp, obj, maybe)
    else:
        policy = {i: 0 for i in maybe}

    iterations = 0
    while True:
        iterations += 1
        values = _evaluate_policy(mdp, obj, zero, maybe, policy)
        changed = False
        for i in maybe:
            current = _choice_value(mdp, obj, values, i, policy[i])
            best_index, best_value = policy[i], current
            for index in range(len(mdp.choices[i])):
                candidate = _choice_value(mdp, obj, values, i, index)
                if _better(optimize, candidate, best_value):
                    best_index, best_value = index, candidate
            if best_index != policy[i]:
                policy[i] = best_index
                changed = True
        if not changed:
            break
    logger.debug(f"Policy iteration ({optimize.value}) converged after {iterations} rounds on {mdp.size} states")

    result = []
    full_policy = []
    for i in range(mdp.size):
        if i in obj.target:
            result.append(Interval.point(1))
        elif i in zero:
            result.append(Interval.point(0))
        else:
            result.append(Interval.point(values[i]))
        full_policy.append(policy.get(i, _zero_policy_choice(mdp, obj, zero, i, optimize)))
    return UntilSolution(tuple(result), tuple(full_policy))


def _zero_policy_choice(mdp: Mdp, obj: UntilObjective, zero: FrozenSet[int], i: int, optimize: Optimize) -> int:
    """A choice keeping a zero-value state at zero (first one, for min)."""
    if optimize is Optimize.MIN and i in zero and i in obj.safe:
        for index, (_, dist) in enumerate(mdp.choices[i]):
            if all(t in zero for t in dist.support):
                return index
    return 0


# --- END COMPONENTS ---

def maximal_end_components(mdp: Mdp, within: Optional[Iterable[int]] = None) -> List[Tuple[FrozenSet[int], Dict[int, Tuple[int, ...]]]]:
    """
    Maximal end components inside ``within`` (all states by default).

    Returns (states, allowed choice indices per state) for every component,
    ordered by smallest member.
    """
    candidate = set(range(mdp.size)) if within is None else set(within)
    allowed = {i: list(range(len(mdp.choices[i]))) for i in candidate}
    stack = [candidate]
    result = []
    while stack:
        block = stack.pop()
        changed = True
        while changed:
            changed = False
            for i in sorted(block):
                allowed[i] = [index for index in allowed[i]
                              if all(t in block for t in mdp.choices[i][index][1].support)]
                if not allowed[i]:
                    block.discard(i)
                    changed = True
        if not block:
            continue
        graph = nx.DiGraph()
        graph.add_nodes_from(block)
        for i in block:
            for index in allowed[i]:
                graph.add_edges_from((i, t) for t in mdp.choices[i][index][1].support)
        components = [set(component) for component in nx.strongly_connected_components(graph)]
        if len(components) == 1:
            members = frozenset(block)
            result.append((members, {i: tuple(allowed[i]) for i in sorted(members)}))
        else:
            stack.extend(components)
    result.sort(key=lambda item: min(item[0]))
    return result


# --- ITERATIVE MODE ---

def _collapse(mdp: Mdp, maybe: Sequence[int]):
    """Quotient maybe states by their end components; returns class map and exiting choices."""
    representative = {i: i for i in maybe}
    for members, _ in maximal_end_components(mdp, maybe):
        head = min(members)
        for i in members:
            representative[i] = head
    exits: Dict[int, List[Tuple[Tuple[int, Fraction], ...]]] = {}
    for i in maybe:
        head = representative[i]
        exits.setdefault(head, [])
        for _, dist in mdp.choices[i]:
            if all(representative.get(t) == head for t in dist.support):
                continue
            exits[head].append(tuple((representative.get(t, t), p) for t, p in dist.items()))
    return representative, exits


def _solve_iterative(mdp: Mdp, obj: UntilObjective, optimize: Optimize, tolerance: Fraction) -> UntilSolution:
    zero = prob0_max(mdp, obj) if optimize is Optimize.MAX else prob0_min(mdp, obj)
    maybe = [i for i in range(mdp.size) if i not in zero and i not in obj.target]
    bits = max(8, math.ceil(math.log2(1 / tolerance)) + 8) if tolerance > 0 else 64
    if optimize is Optimize.MAX:
        representative, exits = _collapse(mdp, maybe)
    else:
        representative = {i: i for i in maybe}
        exits = {i: [tuple(dist.items()) for _, dist in mdp.choices[i]] for i in maybe}
    heads = sorted(exits)

    def fixed(t: int) -> Optional[Fraction]:
        if t in obj.target:
            return Fraction(1)
        if t in zero:
            return Fraction(0)
        return None

    lower = {head: Fraction(0) for head in heads}
    upper = {head: Fraction(1) for head in heads}
    pick = max if optimize is Optimize.MAX else min
    for iteration in range(MAX_ITERATIONS):
        if all(upper[h] - lower[h] <= tolerance for h in heads):
            break
        new_lower, new_upper = {}, {}
        for head in heads:
            options_low, options_high = [], []
            for weights in exits[head] or [()]:
                low = high = Fraction(0)
                for t, p in weights:
                    known = fixed(t)
                    low += p * (known if known is not None else lower[t])
                    high += p * (known if known is not None else upper[t])
                options_low.append(low)
                options_high.append(high)
            new_lower[head] = floor_dyadic(pick(options_low), bits)
            new_upper[head] = ceil_dyadic(pick(options_high), bits)
        new_lower = {h: max(lower[h], new_lower[h]) for h in heads}
        new_upper = {h: min(upper[h], new_upper[h]) for h in heads}
        if new_lower == lower and new_upper == upper:
            raise NonConvergence(f"interval iteration stalled above width {tolerance}; lower the tolerance")
        lower, upper = new_lower, new_upper
    else:
        raise NonConvergence(f"interval iteration did not reach width {tolerance} in {MAX_ITERATIONS} rounds")

    values = []
    for i in range(mdp.size):
        known = fixed(i)
        if known is not None:
            values.append(Interval.point(known))
        else:
            head = representative[i]
            values.append(Interval(lower[head], upper[head]))
    return UntilSolution(tuple(values), tuple(0 for _ in range(mdp.size)))


# --- PUBLIC OPERATIONS ---

def solve_until(mdp: Mdp, obj: UntilObjective, mode: SolveMode) -> UntilSolution:
    """Optimal Pr(safe U target) for every state under ``mode``."""
    if mode.exact:
        return _solve_exact(mdp, obj, mode.optimize)
    return _solve_iterative(mdp, obj, mode.optimize, mode.tolerance)


def mdp_until(mdp: Mdp, obj: UntilObjective, start: Optional[int] = None,
              mode: SolveMode = SolveMode()) -> Interval:
    start = mdp.initial if start is None else start
    return solve_until(mdp, obj, mode).values[start]


def mc_until(chain: MarkovChain, obj: UntilObjective, start: Optional[int] = None) -> Fraction:
    start = chain.initial if start is None else start
    return _solve_exact(chain.as_mdp(), obj, Optimize.MAX).values[start].lower


def mdp_next(mdp: Mdp, target: FrozenSet[int], start: Optional[int] = None,
             mode: SolveMode = SolveMode()) -> Interval:
    """One-step optimum of the probability to move into ``target``."""
    start = mdp.initial if start is None else start
    values = [sum((p for t, p in dist.items() if t in target), Fraction(0)) for _, dist in mdp.choices[start]]
    best = max(values) if mode.optimize is Optimize.MAX else min(values)
    return Interval.point(best)


def mdp_invariance(mdp: Mdp, safe: FrozenSet[int], start: Optional[int] = None,
                   mode: SolveMode = SolveMode()) -> Interval:
    """Pr(G safe) as 1 − Pr(F ¬safe) under the dual objective."""
    everything = frozenset(range(mdp.size))
    bad = everything - safe
    reach = mdp_until(mdp, UntilObjective(everything, bad), start, mode.with_optimize(mode.optimize.dual))
    return reach.complement()


def mc_invariance(chain: MarkovChain, safe: FrozenSet[int], start: Optional[int] = None) -> Fraction:
    everything = frozenset(range(chain.size))
    return 1 - mc_until(chain, UntilObjective(everything, everything - safe), start)


def mc_bounded_until(chain: MarkovChain, obj: UntilObjective, steps: int,
                     start: Optional[int] = None) -> Fraction:
    """Pr(safe U≤steps target); steps = 0 only inspects ``start``."""
    start = chain.initial if start is None else start
    values = [Fraction(1) if i in obj.target else Fraction(0) for i in range(chain.size)]
    for _ in range(steps):
        values = [Fraction(1) if i in obj.target
                  else (sum((p * values[t] for t, p in chain.rows[i].items()), Fraction(0)) if i in obj.safe
                        else Fraction(0))
                  for i in range(chain.size)]
    return values[start]


def format_policy(mdp: Mdp, policy: Sequence[int], names: Sequence[str]) -> str:
    """Adversary choice per state in the transition text format."""
    lines = []
    for i, index in enumerate(policy):
        label, _ = mdp.choices[i][index]
        lines.append(f"{names[i]} {','.join(label) if label else '-'}")
    return "\n".join(lines) + "\n"
