"""
Omega-regular path objectives

Path formulas over (pseudo-)atoms are translated to a Büchi automaton by
formula expansion over explicit letters, determinized to a Rabin automaton,
and combined with an MDP; optimal probabilities then come from end-component
analysis of the product and a reachability solve.

Key Components:
    - negation_normal_form: path formulas with negation on atoms only
    - Nba / ltl_to_nba: generalized Büchi by expansion, degeneralized
    - Dra / nba_to_dra: direct for deterministic automata, Safra trees otherwise
    - lasso_holds: direct evaluation on ultimately periodic words
    - mdp_omega / mdp_ltl: optimal acceptance probability on an MDP
    - to_hoa: Hanoi Omega-Automata text
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import chain as concat, combinations
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from cgs import Distribution
from config import DEFAULT_MAX_PRODUCT_STATES
from errors import FormulaError, StateBudgetExceeded
from logic import And, Atom, Coalition, Formula, Next, Not, Or, Top, Until, atoms, to_text
from probsolve import Interval, Optimize, SolveMode, UntilObjective, maximal_end_components, mdp_until
from product import Mdp

logger = logging.getLogger(__name__)

Letter = FrozenSet[str]


# --- NEGATION NORMAL FORM ---

@dataclass(frozen=True)
class Ltl:
    pass


@dataclass(frozen=True)
class LTrue(Ltl):
    pass


@dataclass(frozen=True)
class LFalse(Ltl):
    pass


@dataclass(frozen=True)
class Lit(Ltl):
    name: str
    positive: bool = True


@dataclass(frozen=True)
class Conj(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Disj(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Nxt(Ltl):
    arg: Ltl


@dataclass(frozen=True)
class Unt(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Rel(Ltl):
    left: Ltl
    right: Ltl


def negation_normal_form(f: Formula, negate: bool = False) -> Ltl:
    """Push negations to the atoms; ¬(φ U ψ) becomes ¬φ R ¬ψ."""
    if isinstance(f, Top):
        return LFalse() if negate else LTrue()
    if isinstance(f, Atom):
        return Lit(f.name, not negate)
    if isinstance(f, Not):
        return negation_normal_form(f.arg, not negate)
    if isinstance(f, (Or, And)):
        left = negation_normal_form(f.left, negate)
        right = negation_normal_form(f.right, negate)
        disjunction = isinstance(f, Or) != negate
        return Disj(left, right) if disjunction else Conj(left, right)
    if isinstance(f, Next):
        return Nxt(negation_normal_form(f.arg, negate))
    if isinstance(f, Until):
        left = negation_normal_form(f.left, negate)
        right = negation_normal_form(f.right, negate)
        return Rel(left, right) if negate else Unt(left, right)
    if isinstance(f, Coalition):
        raise FormulaError("coalition subformulas must be replaced by atoms before automaton translation", f.span)
    raise TypeError(f"unknown formula node {f!r}")


def _untils(f: Ltl) -> List[Unt]:
    found: List[Unt] = []

    def walk(node):
        if isinstance(node, (Conj, Disj, Unt, Rel)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Nxt):
            walk(node.arg)
        if isinstance(node, Unt) and node not in found:
            found.append(node)
    walk(f)
    return found


def all_letters(names: Sequence[str]) -> Tuple[Letter, ...]:
    ordered = sorted(names)
    return tuple(frozenset(group) for size in range(len(ordered) + 1) for group in combinations(ordered, size))


# --- EXPANSION ---

Alternative = Tuple[FrozenSet[Ltl], FrozenSet[Unt]]
_EMPTY: FrozenSet = frozenset()


def _combine(first: FrozenSet[Alternative], second: FrozenSet[Alternative]) -> FrozenSet[Alternative]:
    return frozenset((a[0] | b[0], a[1] | b[1]) for a in first for b in second)


class _Expander:
    """Covers of a formula set under one explicit letter, memoized."""

    def __init__(self):
        self.cache: Dict[Tuple[Ltl, Letter], FrozenSet[Alternative]] = {}

    def formula(self, f: Ltl, letter: Letter) -> FrozenSet[Alternative]:
        key = (f, letter)
        if key not in self.cache:
            self.cache[key] = self._expand(f, letter)
        return self.cache[key]

    def _expand(self, f: Ltl, letter: Letter) -> FrozenSet[Alternative]:
        if isinstance(f, LTrue):
            return frozenset({(_EMPTY, _EMPTY)})
        if isinstance(f, LFalse):
            return frozenset()
        if isinstance(f, Lit):
            return frozenset({(_EMPTY, _EMPTY)}) if (f.name in letter) == f.positive else frozenset()
        if isinstance(f, Conj):
            return _combine(self.formula(f.left, letter), self.formula(f.right, letter))
        if isinstance(f, Disj):
            return self.formula(f.left, letter) | self.formula(f.right, letter)
        if isinstance(f, Nxt):
            if isinstance(f.arg, LTrue):
                return frozenset({(_EMPTY, _EMPTY)})
            if isinstance(f.arg, LFalse):
                return frozenset()
            return frozenset({(frozenset({f.arg}), _EMPTY)})
        if isinstance(f, Unt):
            now = frozenset((succ, fulfilled | {f}) for succ, fulfilled in self.formula(f.right, letter))
            later = _combine(self.formula(f.left, letter), frozenset({(frozenset({f}), _EMPTY)}))
            return now | later
        if isinstance(f, Rel):
            stay = self.formula(f.left, letter) | frozenset({(frozenset({f}), _EMPTY)})
            return _combine(self.formula(f.right, letter), stay)
        raise TypeError(f"unknown node {f!r}")

    def obligations(self, pending: FrozenSet[Ltl], letter: Letter) -> FrozenSet[Alternative]:
        result = frozenset({(_EMPTY, _EMPTY)})
        for f in sorted(pending, key=repr):
            result = _combine(result, self.formula(f, letter))
            if not result:
                break
        return result


def _prune(options: Iterable[Tuple[FrozenSet[Ltl], FrozenSet[Unt]]]) -> List[Tuple[FrozenSet[Ltl], FrozenSet[Unt]]]:
    """Drop (obligations, marks) options dominated by fewer obligations and more marks."""
    unique = sorted(set(options), key=lambda item: (len(item[0]), -len(item[1]), repr(item)))
    kept: List[Tuple[FrozenSet[Ltl], FrozenSet[Unt]]] = []
    for candidate in unique:
        if any(other[0] <= candidate[0] and other[1] >= candidate[1] for other in kept):
            continue
        kept.append(candidate)
    return kept


# --- BÜCHI AUTOMATA ---

@dataclass(frozen=True)
class Nba:
    """
    Büchi automaton over explicit letters (sets of true atoms).

    A run reads one letter per step starting from ``initial``; it is accepting
    when it visits ``accepting`` infinitely often.
    """
    atoms: Tuple[str, ...]
    size: int
    initial: FrozenSet[int]
    accepting: FrozenSet[int]
    delta: Tuple[Dict[Letter, FrozenSet[int]], ...]

    @cached_property
    def letters(self) -> Tuple[Letter, ...]:
        return all_letters(self.atoms)

    def restrict(self, letter: Iterable[str]) -> Letter:
        return frozenset(letter) & frozenset(self.atoms)

    def successors(self, state: int, letter: Iterable[str]) -> FrozenSet[int]:
        return self.delta[state].get(self.restrict(letter), frozenset())

    @property
    def is_deterministic(self) -> bool:
        return len(self.initial) == 1 and all(len(targets) <= 1 for row in self.delta for targets in row.values())

    def accepts_lasso(self, prefix: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
        word = [self.restrict(letter) for letter in concat(prefix, loop)]
        start_of_loop = len(prefix)
        length = len(word)
        graph = nx.DiGraph()
        frontier = [(q, 0) for q in self.initial]
        seen = set(frontier)
        graph.add_nodes_from(frontier)
        while frontier:
            q, position = frontier.pop()
            following = position + 1 if position + 1 < length else start_of_loop
            for target in self.delta[q].get(word[position], ()):
                node = (target, following)
                graph.add_edge((q, position), node)
                if node not in seen:
                    seen.add(node)
                    frontier.append(node)
        # node (q, i) means q was reached just before reading letter i
        for component in nx.strongly_connected_components(graph):
            sample = next(iter(component))
            if len(component) == 1 and not graph.has_edge(sample, sample):
                continue
            if any(q in self.accepting for q, _ in component):
                return True
        return False


def ltl_to_nba(f: Formula, max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Nba:
    """Büchi automaton accepting exactly the words that satisfy ``f``."""
    root = negation_normal_form(f)
    names = tuple(sorted(atoms(f)))
    letters = all_letters(names)
    untils = sorted(_untils(root), key=repr)
    expander = _Expander()

    GbaState = Tuple[FrozenSet[Ltl], FrozenSet[Unt]]
    start: GbaState = (frozenset({root}) - {LTrue()}, _EMPTY)
    index: Dict[GbaState, int] = {start: 0}
    order: List[GbaState] = [start]
    edges: List[Dict[Letter, List[int]]] = []
    position = 0
    while position < len(order):
        pending, _ = order[position]
        row: Dict[Letter, List[int]] = {}
        for letter in letters:
            options = []
            for successor, fulfilled in expander.obligations(pending, letter):
                successor = successor - {LTrue()}
                marks = frozenset(u for u in untils if u not in successor or u in fulfilled)
                options.append((successor, marks))
            targets = []
            for option in _prune(options):
                if option not in index:
                    if len(order) >= max_states:
                        raise StateBudgetExceeded(max_states, "automaton states")
                    index[option] = len(order)
                    order.append(option)
                targets.append(index[option])
            if targets:
                row[letter] = targets
        edges.append(row)
        position += 1

    count = len(untils)
    if count == 0:
        delta = tuple({letter: frozenset(targets) for letter, targets in row.items()} for row in edges)
        nba = Nba(names, len(order), frozenset({0}), frozenset(range(len(order))), delta)
    else:
        nba = _degeneralize(names, order, edges, untils)
    logger.debug(f"Büchi automaton for {to_text(f)}: {nba.size} states")
    return nba


def _degeneralize(names, order, edges, untils) -> Nba:
    count = len(untils)
    start = (0, 0)
    index = {start: 0}
    states = [start]
    delta: List[Dict[Letter, FrozenSet[int]]] = []
    position = 0
    while position < len(states):
        gba_state, level = states[position]
        marks = order[gba_state][1]
        following = (level + 1) % count if untils[level] in marks else level
        row = {}
        for letter, targets in edges[gba_state].items():
            successors = set()
            for target in targets:
                node = (target, following)
                if node not in index:
                    index[node] = len(states)
                    states.append(node)
                successors.add(index[node])
            row[letter] = frozenset(successors)
        delta.append(row)
        position += 1
    accepting = frozenset(i for i, (gba_state, level) in enumerate(states)
                          if level == 0 and untils[0] in order[gba_state][1])
    return Nba(names, len(states), frozenset({0}), accepting, tuple(delta))


# --- RABIN AUTOMATA ---

@dataclass(frozen=True)
class Dra:
    """
    Complete deterministic Rabin automaton.

    A run is accepting when for some pair (avoid, visit) it visits ``avoid``
    finitely often and ``visit`` infinitely often.
    """
    atoms: Tuple[str, ...]
    size: int
    initial: int
    delta: Tuple[Dict[Letter, int], ...]
    pairs: Tuple[Tuple[FrozenSet[int], FrozenSet[int]], ...]

    def restrict(self, letter: Iterable[str]) -> Letter:
        return frozenset(letter) & frozenset(self.atoms)

    def step(self, state: int, letter: Iterable[str]) -> int:
        return self.delta[state][self.restrict(letter)]

    def accepts_states(self, recurring: FrozenSet[int]) -> bool:
        return any(recurring.isdisjoint(avoid) and not recurring.isdisjoint(visit) for avoid, visit in self.pairs)

    def accepts_lasso(self, prefix: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
        state = self.initial
        for letter in prefix:
            state = self.step(state, letter)
        seen: Dict[int, int] = {}
        rounds: List[List[int]] = []
        while state not in seen:
            seen[state] = len(rounds)
            visited = []
            for letter in loop:
                state = self.step(state, letter)
                visited.append(state)
            rounds.append(visited)
        recurring = frozenset(q for visited in rounds[seen[state]:] for q in visited)
        return self.accepts_states(recurring)


def _dba_to_dra(nba: Nba) -> Dra:
    letters = nba.letters
    sink = nba.size
    needs_sink = any(len(nba.delta[q].get(letter, ())) == 0 for q in range(nba.size) for letter in letters)
    size = nba.size + (1 if needs_sink else 0)
    delta = []
    for q in range(nba.size):
        row = {}
        for letter in letters:
            targets = nba.delta[q].get(letter, frozenset())
            row[letter] = next(iter(targets)) if targets else sink
        delta.append(row)
    if needs_sink:
        delta.append({letter: sink for letter in letters})
    return Dra(nba.atoms, size, next(iter(nba.initial)), tuple(delta), ((frozenset(), nba.accepting),))


class _SafraNode:
    __slots__ = ("name", "label", "marked", "children")

    def __init__(self, name: int, label: Set[int], marked: bool = False, children=None):
        self.name = name
        self.label = set(label)
        self.marked = marked
        self.children: List["_SafraNode"] = children or []

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def freeze(self):
        return (self.name, frozenset(self.label), self.marked, tuple(child.freeze() for child in self.children))

    @classmethod
    def thaw(cls, frozen) -> "_SafraNode":
        name, label, marked, children = frozen
        return cls(name, set(label), marked, [cls.thaw(child) for child in children])


def _remove_from_subtree(node: _SafraNode, states: Set[int]) -> None:
    node.label -= states
    for child in node.children:
        _remove_from_subtree(child, states)


def _drop_empty(node: _SafraNode) -> None:
    node.children = [child for child in node.children if child.label]
    for child in node.children:
        _drop_empty(child)


def _safra_step(frozen, letter: Letter, nba: Nba, limit: int):
    if frozen is None:
        return None
    root = _SafraNode.thaw(frozen)
    nodes = list(root.walk())
    used = {node.name for node in nodes}
    for node in nodes:
        node.marked = False
    for node in nodes:
        accepting = node.label & nba.accepting
        if accepting:
            name = next(candidate for candidate in range(1, limit + 1) if candidate not in used)
            used.add(name)
            node.children.append(_SafraNode(name, accepting))
    for node in root.walk():
        node.label = {target for q in node.label for target in nba.delta[q].get(letter, ())}
    for node in root.walk():
        seen: Set[int] = set()
        for child in node.children:
            _remove_from_subtree(child, seen)
            seen |= child.label
    if not root.label:
        return None
    _drop_empty(root)
    for node in root.walk():
        if node.children:
            union = set().union(*(child.label for child in node.children))
            if union == node.label:
                node.children = []
                node.marked = True
    return root.freeze()


def _safra(nba: Nba, max_states: int) -> Dra:
    limit = 2 * max(nba.size, 1)
    letters = nba.letters
    start = _SafraNode(1, set(nba.initial)).freeze() if nba.initial else None
    index = {start: 0}
    order = [start]
    delta: List[Dict[Letter, int]] = []
    position = 0
    while position < len(order):
        tree = order[position]
        row = {}
        for letter in letters:
            successor = _safra_step(tree, letter, nba, limit)
            if successor not in index:
                if len(order) >= max_states:
                    raise StateBudgetExceeded(max_states, "Rabin automaton states")
                index[successor] = len(order)
                order.append(successor)
            row[letter] = index[successor]
        delta.append(row)
        position += 1

    def names_of(tree) -> Dict[int, bool]:
        if tree is None:
            return {}
        found = {}
        stack = [tree]
        while stack:
            name, _, marked, children = stack.pop()
            found[name] = marked
            stack.extend(children)
        return found

    info = [names_of(tree) for tree in order]
    pairs = []
    for name in range(1, limit + 1):
        avoid = frozenset(i for i, names in enumerate(info) if name not in names)
        visit = frozenset(i for i, names in enumerate(info) if names.get(name))
        if visit:
            pairs.append((avoid, visit))
    return Dra(nba.atoms, len(order), 0, tuple(delta), tuple(pairs))


def nba_to_dra(nba: Nba, max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Dra:
    """Language-equivalent complete deterministic Rabin automaton."""
    if nba.is_deterministic:
        dra = _dba_to_dra(nba)
    else:
        dra = _safra(nba, max_states)
    logger.debug(f"Rabin automaton: {dra.size} states, {len(dra.pairs)} pairs")
    return dra


def ltl_to_dra(f: Formula, max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Dra:
    return nba_to_dra(ltl_to_nba(f, max_states), max_states)


# --- DIRECT SEMANTICS ---

def lasso_holds(f: Formula, prefix: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
    """Evaluate ``f`` at position 0 of prefix·loop^ω."""
    if not loop:
        raise ValueError("lasso loop must be non-empty")
    word = [frozenset(letter) for letter in concat(prefix, loop)]
    length = len(word)
    following = [i + 1 if i + 1 < length else len(prefix) for i in range(length)]
    memo: Dict[Formula, List[bool]] = {}

    def value(g: Formula) -> List[bool]:
        if g in memo:
            return memo[g]
        if isinstance(g, Top):
            result = [True] * length
        elif isinstance(g, Atom):
            result = [g.name in letter for letter in word]
        elif isinstance(g, Not):
            result = [not v for v in value(g.arg)]
        elif isinstance(g, Or):
            result = [a or b for a, b in zip(value(g.left), value(g.right))]
        elif isinstance(g, And):
            result = [a and b for a, b in zip(value(g.left), value(g.right))]
        elif isinstance(g, Next):
            inner = value(g.arg)
            result = [inner[following[i]] for i in range(length)]
        elif isinstance(g, Until):
            left, right = value(g.left), value(g.right)
            result = [False] * length
            changed = True
            while changed:
                changed = False
                for i in range(length):
                    updated = right[i] or (left[i] and result[following[i]])
                    if updated != result[i]:
                        result[i] = updated
                        changed = True
        else:
            raise FormulaError(f"not a path formula over atoms: {to_text(g)}", g.span)
        memo[g] = result
        return result

    return value(f)[0]


# --- MDP PRODUCT ---

def _product(mdp: Mdp, dra: Dra, letter_of: Callable[[int], Iterable[str]], start: int, max_states: int):
    letters = [dra.restrict(letter_of(i)) for i in range(mdp.size)]
    first = (start, dra.delta[dra.initial][letters[start]])
    index = {first: 0}
    order = [first]
    choices = []
    position = 0
    while position < len(order):
        state, q = order[position]
        options = []
        for label, dist in mdp.choices[state]:
            weights = []
            for target, p in dist.items():
                node = (target, dra.delta[q][letters[target]])
                if node not in index:
                    if len(order) >= max_states:
                        raise StateBudgetExceeded(max_states, "omega product states")
                    index[node] = len(order)
                    order.append(node)
                weights.append((index[node], p))
            options.append((label, Distribution(weights)))
        choices.append(tuple(options))
        position += 1
    return Mdp(tuple(order), tuple(choices), mdp.agents, 0)


def _rabin_accepting(product: Mdp, dra: Dra) -> FrozenSet[int]:
    winning: Set[int] = set()
    for avoid, visit in dra.pairs:
        allowed = [i for i, (_, q) in enumerate(product.states) if q not in avoid]
        for members, _ in maximal_end_components(product, allowed):
            if any(product.states[i][1] in visit for i in members):
                winning |= members
    return frozenset(winning)


def _streett_accepting(product: Mdp, dra: Dra) -> FrozenSet[int]:
    """States of end components where the Rabin condition fails for every pair."""
    good: Set[int] = set()
    stack = [members for members, _ in maximal_end_components(product)]
    while stack:
        block = stack.pop()
        automaton_states = {product.states[i][1] for i in block}
        violated = next(((avoid, visit) for avoid, visit in dra.pairs
                         if automaton_states.isdisjoint(avoid) and not automaton_states.isdisjoint(visit)), None)
        if violated is None:
            good |= block
            continue
        remaining = [i for i in block if product.states[i][1] not in violated[1]]
        stack.extend(members for members, _ in maximal_end_components(product, remaining))
    return frozenset(good)


def mdp_omega(mdp: Mdp, dra: Dra, letter_of: Callable[[int], Iterable[str]], start: Optional[int] = None,
              mode: SolveMode = SolveMode(), max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Interval:
    """
    Optimal probability that the letters along a path are accepted by ``dra``.

    Max mode reaches accepting end components; min mode is one minus the
    maximal probability of the complementary (Streett) condition.
    """
    start = mdp.initial if start is None else start
    product = _product(mdp, dra, letter_of, start, max_states)
    everything = frozenset(range(product.size))
    if mode.optimize is Optimize.MAX:
        target = _rabin_accepting(product, dra)
        return mdp_until(product, UntilObjective(everything, target), 0, mode)
    target = _streett_accepting(product, dra)
    return mdp_until(product, UntilObjective(everything, target), 0, mode.with_optimize(Optimize.MAX)).complement()


def mdp_ltl(mdp: Mdp, f: Formula, letter_of: Callable[[int], Iterable[str]], start: Optional[int] = None,
            mode: SolveMode = SolveMode(), max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Interval:
    return mdp_omega(mdp, ltl_to_dra(f, max_states), letter_of, start, mode, max_states)


# --- EXPORT ---

def _hoa_label(letter: Letter, names: Sequence[str]) -> str:
    if not names:
        return "t"
    return "&".join(str(i) if name in letter else f"!{i}" for i, name in enumerate(names))


def to_hoa(automaton: Union[Nba, Dra], name: str = "") -> str:
    """Hanoi Omega-Automata (v1) text with state-based acceptance."""
    names = list(automaton.atoms)
    lines = ["HOA: v1"]
    if name:
        lines.append(f'name: "{name}"')
    lines.append(f"States: {automaton.size}")
    ap = " ".join(f'"{atom}"' for atom in names)
    if isinstance(automaton, Nba):
        for q in sorted(automaton.initial):
            lines.append(f"Start: {q}")
        lines.append(f"AP: {len(names)}{' ' + ap if ap else ''}")
        lines.extend(["acc-name: Buchi", "Acceptance: 1 Inf(0)", "--BODY--"])
        for q in range(automaton.size):
            lines.append(f"State: {q}{' {0}' if q in automaton.accepting else ''}")
            for letter in automaton.letters:
                for target in sorted(automaton.delta[q].get(letter, ())):
                    lines.append(f"[{_hoa_label(letter, names)}] {target}")
    else:
        count = len(automaton.pairs)
        lines.append(f"Start: {automaton.initial}")
        lines.append(f"AP: {len(names)}{' ' + ap if ap else ''}")
        condition = "|".join(f"(Fin({2 * i})&Inf({2 * i + 1}))" for i in range(count)) or "f"
        lines.extend([f"acc-name: Rabin {count}", f"Acceptance: {2 * count} {condition}", "--BODY--"])
        for q in range(automaton.size):
            sets = [str(2 * i) for i, (avoid, _) in enumerate(automaton.pairs) if q in avoid]
            sets += [str(2 * i + 1) for i, (_, visit) in enumerate(automaton.pairs) if q in visit]
            marks = f" {{{' '.join(sorted(sets, key=int))}}}" if sets else ""
            lines.append(f"State: {q}{marks}")
            for letter in all_letters(names):
                lines.append(f"[{_hoa_label(letter, names)}] {automaton.delta[q][letter]}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"
