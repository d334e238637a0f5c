"""
Natural strategies

A natural strategy is an ordered list of (guard, action distribution) pairs.
In the memoryless setting ``r`` a guard is a Boolean condition checked on the
last state of the history; in the recall setting ``R`` a guard is a regular
expression over conditions that must match the whole history letter by
letter. The first pair whose guard matches and whose support is legal in the
current state decides the move.

Key Components:
    - GuardRegex (Letter, Concat, Choice, Star): guard expressions and their size
    - GuardNfa: epsilon-free automaton compiled from a guard
    - NatStrategy: validated strategy with its compiled memory machinery
    - parse_strategy / format_strategy: text format, one pair per line
    - enumerate_det / enumerate_skeletons: canonical bounded enumeration

Strategy text format::

    agent v                         # optional header lines
    setting r
    hasBallot_v & !scanned_v -> scanBallot
    T* . (coerced_v & !requested_v) -> {request_v: 1}
    T -> noop

Regex operators from loosest to tightest: ``+`` (choice), ``.`` (concat),
the Boolean ``|``, ``&`` and ``!`` (only over plain conditions) and postfix ``*``.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from itertools import combinations
from pathlib import Path
from typing import (Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set,
                    Tuple, Union)

from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput, VisitError

from cgs import Cgs, Distribution, History
from errors import (FormulaError, InvalidStrategy, NatpatlError, NoMatch, StrategySyntaxError,
                    VocabularyEmpty)
from logic import (And, Atom, Formula, Not, Or, Top, atoms, holds_on_labels, is_boolean,
                   parse_formula, to_text)
from utils import format_fraction, parse_fraction

logger = logging.getLogger(__name__)


class Setting(str, Enum):
    MEMORYLESS = "r"
    RECALL = "R"


# --- GUARD REGEXES ---

@dataclass(frozen=True)
class GuardRegex:
    pass


@dataclass(frozen=True)
class Letter(GuardRegex):
    cond: Formula


@dataclass(frozen=True)
class Concat(GuardRegex):
    left: GuardRegex
    right: GuardRegex


@dataclass(frozen=True)
class Choice(GuardRegex):
    left: GuardRegex
    right: GuardRegex


@dataclass(frozen=True)
class Star(GuardRegex):
    arg: GuardRegex


TRUE = Letter(Top())
UNIVERSAL = Star(TRUE)


def condition_size(cond: Formula) -> int:
    """Symbols of a Boolean condition: each atom, ⊤, ¬, ∨ and ∧ counts once."""
    if isinstance(cond, (Top, Atom)):
        return 1
    if isinstance(cond, Not):
        return 1 + condition_size(cond.arg)
    if isinstance(cond, (Or, And)):
        return 1 + condition_size(cond.left) + condition_size(cond.right)
    raise FormulaError(f"guard condition is not Boolean: {to_text(cond)}")


def regex_size(r: GuardRegex) -> int:
    """|r|: every symbol except parentheses."""
    if isinstance(r, Letter):
        return condition_size(r.cond)
    if isinstance(r, Star):
        return 1 + regex_size(r.arg)
    return 1 + regex_size(r.left) + regex_size(r.right)


def regex_letters(r: GuardRegex) -> List[Formula]:
    if isinstance(r, Letter):
        return [r.cond]
    if isinstance(r, Star):
        return regex_letters(r.arg)
    return regex_letters(r.left) + regex_letters(r.right)


def format_regex(r: GuardRegex) -> str:
    if isinstance(r, Letter):
        return to_text(r.cond)
    if isinstance(r, Star):
        inner = r.arg
        if isinstance(inner, Letter) and isinstance(inner.cond, (Top, Atom)):
            return f"{format_regex(inner)}*"
        if isinstance(inner, Letter) and isinstance(inner.cond, (Or, And)):
            return f"{format_regex(inner)}*"
        return f"({format_regex(inner)})*"
    if isinstance(r, Concat):
        left = format_regex(r.left)
        right = format_regex(r.right)
        if isinstance(r.left, Choice):
            left = f"({left})"
        if isinstance(r.right, (Choice, Concat)):
            right = f"({right})"
        return f"{left} . {right}"
    left = format_regex(r.left)
    right = format_regex(r.right)
    if isinstance(r.right, Choice):
        right = f"({right})"
    return f"{left} + {right}"


# --- GUARDED AUTOMATA ---

@dataclass(frozen=True)
class GuardNfa:
    """
    Epsilon-free automaton whose transitions are labeled by conditions.

    Reading a history means reading one label set per state; a transition is
    enabled when its condition holds on the label set. The empty word is never
    read (histories are non-empty), so ``initial`` is only the starting point
    of the first step.

    Attributes:
        size (int): Number of states, numbered 0..size-1.
        initial (FrozenSet[int]): Initial states.
        accepting (FrozenSet[int]): Accepting states.
        edges (Tuple[Tuple[Tuple[Formula, int], ...], ...]): Outgoing
            (condition, target) pairs per state.
    """
    size: int
    initial: FrozenSet[int]
    accepting: FrozenSet[int]
    edges: Tuple[Tuple[Tuple[Formula, int], ...], ...]

    def step(self, current: FrozenSet[int], labels: FrozenSet[str]) -> FrozenSet[int]:
        return frozenset(target for state in current for cond, target in self.edges[state]
                         if holds_on_labels(cond, labels))

    def start(self, labels: FrozenSet[str]) -> FrozenSet[int]:
        return self.step(self.initial, labels)

    def is_accepting(self, current: FrozenSet[int]) -> bool:
        return not self.accepting.isdisjoint(current)

    def accepts(self, word: Sequence[FrozenSet[str]]) -> bool:
        if not word:
            return False
        current = self.initial
        for labels in word:
            current = self.step(current, labels)
            if not current:
                return False
        return self.is_accepting(current)

    @cached_property
    def final_conditions(self) -> Tuple[Formula, ...]:
        """Conditions that can label the last letter of an accepted history."""
        found: List[Formula] = []
        for state in range(self.size):
            for cond, target in self.edges[state]:
                if target in self.accepting and cond not in found:
                    found.append(cond)
        return tuple(found)


def _glushkov(r: GuardRegex):
    letters: List[Formula] = []

    def walk(node):
        # returns (nullable, first, last, follow)
        if isinstance(node, Letter):
            letters.append(node.cond)
            position = len(letters)
            return False, {position}, {position}, {}
        if isinstance(node, Star):
            nullable, first, last, follow = walk(node.arg)
            follow = {k: set(v) for k, v in follow.items()}
            for position in last:
                follow.setdefault(position, set()).update(first)
            return True, first, last, follow
        left = walk(node.left)
        right = walk(node.right)
        follow = {k: set(v) for k, v in left[3].items()}
        for k, v in right[3].items():
            follow.setdefault(k, set()).update(v)
        if isinstance(node, Choice):
            return left[0] or right[0], left[1] | right[1], left[2] | right[2], follow
        for position in left[2]:
            follow.setdefault(position, set()).update(right[1])
        first = left[1] | right[1] if left[0] else set(left[1])
        last = left[2] | right[2] if right[0] else set(right[2])
        return left[0] and right[0], first, last, follow

    nullable, first, last, follow = walk(r)
    size = len(letters) + 1
    edges = [[] for _ in range(size)]
    for position in sorted(first):
        edges[0].append((letters[position - 1], position))
    for source in sorted(follow):
        for target in sorted(follow[source]):
            edges[source].append((letters[target - 1], target))
    accepting = set(last)
    if nullable:
        accepting.add(0)
    return size, accepting, edges


def _merge_bisimilar(size: int, accepting: Set[int], edges) -> GuardNfa:
    block = {state: int(state in accepting) for state in range(size)}
    while True:
        signatures = {}
        refined = {}
        for state in range(size):
            signature = (block[state], frozenset((cond, block[target]) for cond, target in edges[state]))
            refined[state] = signatures.setdefault(signature, len(signatures))
        if len(signatures) == len(set(block.values())):
            break
        block = refined
    # renumber so the initial state's block is 0 and numbering follows first occurrence
    order: Dict[int, int] = {}
    for state in range(size):
        order.setdefault(block[state], len(order))
    merged_edges: List[Set[Tuple[Formula, int]]] = [set() for _ in range(len(order))]
    for state in range(size):
        for cond, target in edges[state]:
            merged_edges[order[block[state]]].add((cond, order[block[target]]))
    return GuardNfa(
        size=len(order),
        initial=frozenset({order[block[0]]}),
        accepting=frozenset(order[block[state]] for state in accepting),
        edges=tuple(tuple(sorted(out, key=lambda edge: (edge[1], to_text(edge[0])))) for out in merged_edges),
    )


@lru_cache(maxsize=4096)
def compile_guard(r: GuardRegex) -> GuardNfa:
    """Glushkov construction followed by a merge of bisimilar states."""
    size, accepting, edges = _glushkov(r)
    return _merge_bisimilar(size, accepting, edges)


def consistent(h: History, r: GuardRegex, cgs: Cgs) -> bool:
    """Some word of L(r) has the length of ``h`` and holds pointwise along it."""
    return compile_guard(r).accepts([cgs.labels(state) for state in h.states])


# --- STRATEGIES ---

Memory = Tuple[FrozenSet[int], ...]


@dataclass(frozen=True)
class StrategyPair:
    guard: GuardRegex
    dist: Distribution

    @property
    def is_dirac(self) -> bool:
        return self.dist.is_dirac


@dataclass(frozen=True)
class NatStrategy:
    """
    Natural strategy of one agent.

    Attributes:
        agent (str): Agent the strategy belongs to.
        setting (Setting): ``r`` evaluates Letter guards on the last state,
            ``R`` matches guard regexes against the whole history.
        pairs (Tuple[StrategyPair, ...]): Ordered pairs; the last one is the
            fallback ``(⊤, a)`` or ``(⊤*, a)``.
    """
    agent: str
    setting: Setting
    pairs: Tuple[StrategyPair, ...]

    @property
    def is_deterministic(self) -> bool:
        return all(pair.is_dirac for pair in self.pairs)

    @cached_property
    def automata(self) -> Tuple[GuardNfa, ...]:
        if self.setting is Setting.MEMORYLESS:
            return ()
        return tuple(compile_guard(pair.guard) for pair in self.pairs)

    def initial_memory(self, labels: FrozenSet[str]) -> Memory:
        """Memory after reading the first state of a history."""
        return tuple(nfa.start(labels) for nfa in self.automata)

    def advance(self, memory: Memory, labels: FrozenSet[str]) -> Memory:
        return tuple(nfa.step(current, labels) for nfa, current in zip(self.automata, memory))

    def select(self, memory: Memory, labels: FrozenSet[str], legal: FrozenSet[str]) -> int:
        """0-based index of the pair that decides the move."""
        for index, pair in enumerate(self.pairs):
            if self.setting is Setting.MEMORYLESS:
                matched = holds_on_labels(pair.guard.cond, labels)
            else:
                matched = self.automata[index].is_accepting(memory[index])
            if matched and all(action in legal for action in pair.dist.support):
                return index
        raise NoMatch(f"no pair of the strategy for {self.agent!r} matches; the fallback pair is not legal here")

    def __str__(self) -> str:
        return format_strategy(self)


def complexity(s: NatStrategy) -> int:
    """c(σ): total guard size; distributions are free."""
    return sum(regex_size(pair.guard) for pair in s.pairs)


def _run(s: NatStrategy, h: History, cgs: Cgs) -> Memory:
    memory = s.initial_memory(cgs.labels(h.states[0]))
    for state in h.states[1:]:
        memory = s.advance(memory, cgs.labels(state))
    return memory


def match_index(h: History, s: NatStrategy, cgs: Cgs) -> int:
    """1-based index of the first consistent pair with a legal support at last(h)."""
    memory = _run(s, h, cgs)
    return s.select(memory, cgs.labels(h.last), cgs.legal(h.last, s.agent)) + 1


def act(s: NatStrategy, h: History, cgs: Cgs) -> Distribution:
    return s.pairs[match_index(h, s, cgs) - 1].dist


def fallback_guard(setting: Setting) -> GuardRegex:
    return TRUE if setting is Setting.MEMORYLESS else UNIVERSAL


def validate_strategy(s: NatStrategy, cgs: Cgs, strict: bool = False) -> List[str]:
    """
    Check a strategy against a model.

    Returns the lint warnings of the eager support check. In strict mode the
    literal availability reading is enforced: every non-final pair must give
    positive weight to every action legal where its guard can match last.

    Raises:
        InvalidStrategy: Unknown agent, action or atom, a broken fallback pair,
            or a strict-mode violation.
    """
    if s.agent not in cgs.agents:
        raise InvalidStrategy(f"strategy names unknown agent {s.agent!r}", s.agent)
    if not s.pairs:
        raise InvalidStrategy("strategy has no pairs", s.agent)
    for line, pair in enumerate(s.pairs, start=1):
        for action in pair.dist.support:
            if action not in cgs.actions:
                raise InvalidStrategy(f"unknown action {action!r}", f"pair {line}")
        for cond in regex_letters(pair.guard):
            for name in sorted(atoms(cond)):
                if name not in cgs.props:
                    raise InvalidStrategy(f"unknown atom {name!r} in guard", f"pair {line}")
        if s.setting is Setting.MEMORYLESS and not isinstance(pair.guard, Letter):
            raise InvalidStrategy("memoryless strategies take plain conditions as guards", f"pair {line}")

    last = s.pairs[-1]
    if last.guard != fallback_guard(s.setting):
        raise InvalidStrategy(
            f"last guard must be {format_regex(fallback_guard(s.setting))} in setting {s.setting.value}",
            f"pair {len(s.pairs)}")
    if not last.is_dirac:
        raise InvalidStrategy("last pair must play a single action", f"pair {len(s.pairs)}")
    fallback = last.dist.dirac_value
    if fallback not in cgs.globally_legal(s.agent):
        hint = "" if cgs.globally_legal(s.agent) else "; consider adding a noop action legal everywhere"
        raise InvalidStrategy(
            f"fallback action {fallback!r} is not legal in every state for {s.agent!r}{hint}",
            f"pair {len(s.pairs)}")

    warnings: List[str] = []
    for line, pair in enumerate(s.pairs[:-1], start=1):
        finals = last_conditions(pair.guard)
        for state in cgs.states:
            labels = cgs.labels(state)
            if not any(holds_on_labels(cond, labels) for cond in finals):
                continue
            legal = cgs.legal(state, s.agent)
            illegal = [action for action in pair.dist.support if action not in legal]
            if illegal:
                warnings.append(f"pair {line} may match in {state} where {illegal} is not legal for {s.agent}")
            if strict:
                missing = [action for action in sorted(legal) if action not in pair.dist]
                if missing:
                    raise InvalidStrategy(
                        f"strict support: pair {line} gives no weight to legal {missing} in {state}",
                        f"pair {line}")
    for warning in warnings:
        logger.warning(warning)
    return warnings


def last_conditions(r: GuardRegex) -> Tuple[Formula, ...]:
    if isinstance(r, Letter):
        return (r.cond,)
    return compile_guard(r).final_conditions


# --- TEXT FORMAT ---

STRATEGY_GRAMMAR = r"""
    ?start: pair
    pair: regex "->" target

    ?regex: cat
          | regex "+" cat                   -> choice
    ?cat: bor
        | cat "." bor                       -> concat
    ?bor: band
        | bor "|" band                      -> or_
    ?band: bnot
         | band "&" bnot                    -> and_
    ?bnot: postfix
         | "!" bnot                         -> not_
    ?postfix: primary
            | postfix "*"                   -> star
    ?primary: TRUE                          -> top
            | TOPSYM                        -> top
            | NAME                          -> atom
            | "(" regex ")"

    target: NAME                            -> dirac
          | "{" weight ("," weight)* "}"    -> mixed
    weight: NAME ":" PROB

    TRUE: "T"
    TOPSYM: "⊤"
    PROB: /\d+\s*\/\s*\d+|\d*\.\d+|\d+/
    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %import common.WS_INLINE
    %ignore WS_INLINE
"""

_parser = Lark(STRATEGY_GRAMMAR, parser="lalr")


class _PairBuilder(Transformer):

    def top(self, children):
        return TRUE

    def atom(self, children):
        return Letter(Atom(str(children[0])))

    def _conditions(self, children, operator):
        if not all(isinstance(child, Letter) for child in children):
            raise StrategySyntaxError(f"Boolean '{operator}' applied to a regular expression")
        return [child.cond for child in children]

    def not_(self, children):
        (cond,) = self._conditions(children, "!")
        return Letter(Not(cond))

    def or_(self, children):
        left, right = self._conditions(children, "|")
        return Letter(Or(left, right))

    def and_(self, children):
        left, right = self._conditions(children, "&")
        return Letter(And(left, right))

    def star(self, children):
        return Star(children[0])

    def concat(self, children):
        return Concat(children[0], children[1])

    def choice(self, children):
        return Choice(children[0], children[1])

    def dirac(self, children):
        return Distribution.point(str(children[0]))

    def weight(self, children):
        return (str(children[0]), parse_fraction(str(children[1])))

    def mixed(self, children):
        names = [name for name, _ in children]
        if len(set(names)) != len(names):
            raise StrategySyntaxError(f"action listed twice in {names}")
        try:
            return Distribution(children)
        except ValueError as e:
            raise StrategySyntaxError(f"action distribution is not exact: {e}") from e

    def pair(self, children):
        return StrategyPair(children[0], children[1])


def parse_pair(text: str) -> StrategyPair:
    try:
        return _PairBuilder().transform(_parser.parse(text))
    except UnexpectedInput as e:
        raise StrategySyntaxError(f"cannot parse strategy pair {text.strip()!r}", f"column {e.column}") from e
    except VisitError as e:
        if isinstance(e.orig_exc, NatpatlError):
            raise e.orig_exc from e
        raise


def parse_strategy(text: str, agent: Optional[str] = None,
                   setting: Optional[Setting] = None) -> NatStrategy:
    """
    Parse the strategy text format.

    Header lines ``agent NAME`` and ``setting r|R`` are optional; arguments
    given here must agree with them. Without any setting information the
    setting is ``r`` when every guard is a plain condition and ``R`` otherwise.
    """
    pairs: List[StrategyPair] = []
    header_agent: Optional[str] = None
    header_setting: Optional[Setting] = None
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if "->" not in line and len(words) == 2 and words[0] in ("agent", "setting"):
            if words[0] == "agent":
                header_agent = words[1]
            else:
                try:
                    header_setting = Setting(words[1])
                except ValueError:
                    raise StrategySyntaxError(f"unknown setting {words[1]!r}", f"line {number}")
            continue
        try:
            pairs.append(parse_pair(line))
        except StrategySyntaxError as e:
            raise StrategySyntaxError(e.message, f"line {number}" + (f", {e.location}" if e.location else "")) from e

    if agent is not None and header_agent is not None and agent != header_agent:
        raise InvalidStrategy(f"strategy file is for {header_agent!r}, not {agent!r}", "agent")
    if setting is not None and header_setting is not None and setting != header_setting:
        raise InvalidStrategy(f"strategy file declares setting {header_setting.value}", "setting")
    resolved_agent = agent or header_agent
    if resolved_agent is None:
        raise StrategySyntaxError("no agent given for strategy", "agent")
    resolved_setting = setting or header_setting
    if resolved_setting is None:
        memoryless = all(isinstance(pair.guard, Letter) for pair in pairs)
        resolved_setting = Setting.MEMORYLESS if memoryless else Setting.RECALL
    return NatStrategy(resolved_agent, resolved_setting, tuple(pairs))


def load_strategy(path: Union[str, Path], agent: Optional[str] = None,
                  setting: Optional[Setting] = None) -> NatStrategy:
    logger.info(f"Loading strategy {path}")
    return parse_strategy(Path(path).read_text(encoding="utf-8"), agent, setting)


def format_target(dist: Distribution) -> str:
    if dist.is_dirac:
        return str(dist.dirac_value)
    return "{" + ", ".join(f"{action}: {format_fraction(p)}" for action, p in dist.items()) + "}"


def format_pairs(s: NatStrategy) -> str:
    return "\n".join(f"{format_regex(pair.guard)} -> {format_target(pair.dist)}" for pair in s.pairs)


def format_strategy(s: NatStrategy) -> str:
    return f"agent {s.agent}\nsetting {s.setting.value}\n{format_pairs(s)}\n"


# --- VOCABULARIES ---

Vocabulary = Tuple[Formula, ...]


def canonical_vocabulary(conditions: Iterable[Formula]) -> Vocabulary:
    unique = {cond for cond in conditions}
    return tuple(sorted(unique, key=lambda cond: (condition_size(cond), to_text(cond))))


def used_props(cgs: Cgs) -> List[str]:
    """Propositions that label at least one state, in declaration order."""
    used = set().union(*(cgs.labels(state) for state in cgs.states))
    return [prop for prop in cgs.props if prop in used]


def literal_vocabulary(cgs: Cgs, max_conjuncts: int = 2) -> Vocabulary:
    """⊤, literals over the used propositions and conjunctions of up to ``max_conjuncts`` literals."""
    literals = []
    for prop in used_props(cgs):
        literals.append((prop, Atom(prop)))
        literals.append((prop, Not(Atom(prop))))
    conditions: List[Formula] = [Top()] + [literal for _, literal in literals]
    for width in range(2, max_conjuncts + 1):
        for group in combinations(literals, width):
            if len({prop for prop, _ in group}) < width:
                continue
            cond = group[0][1]
            for _, literal in group[1:]:
                cond = And(cond, literal)
            conditions.append(cond)
    return canonical_vocabulary(conditions)


def minterm_vocabulary(cgs: Cgs) -> Vocabulary:
    """⊤ plus one full conjunction of literals per distinct state label set."""
    props = used_props(cgs)
    conditions: List[Formula] = [Top()]
    for labels in {cgs.labels(state) for state in cgs.states}:
        literals = [Atom(prop) if prop in labels else Not(Atom(prop)) for prop in props]
        if not literals:
            continue
        cond = literals[0]
        for literal in literals[1:]:
            cond = And(cond, literal)
        conditions.append(cond)
    return canonical_vocabulary(conditions)


def parse_vocabulary(text: str) -> Vocabulary:
    conditions = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        cond = parse_formula(line)
        if not is_boolean(cond):
            raise StrategySyntaxError(f"vocabulary entry is not a Boolean condition: {line!r}", f"line {number}")
        conditions.append(cond)
    return canonical_vocabulary(conditions)


def load_vocabulary(path: Union[str, Path]) -> Vocabulary:
    logger.info(f"Loading vocabulary {path}")
    return parse_vocabulary(Path(path).read_text(encoding="utf-8"))


# --- ENUMERATION ---

@dataclass(frozen=True)
class StrategySkeleton:
    """Guards and action supports of a behavioral strategy, weights left open."""
    agent: str
    setting: Setting
    guards: Tuple[GuardRegex, ...]
    supports: Tuple[Tuple[str, ...], ...]

    @property
    def complexity(self) -> int:
        return sum(regex_size(guard) for guard in self.guards)

    def uniform(self) -> NatStrategy:
        """Representative strategy spreading weight evenly over each support."""
        pairs = tuple(StrategyPair(guard, Distribution.uniform(list(support)))
                      for guard, support in zip(self.guards, self.supports))
        return NatStrategy(self.agent, self.setting, pairs)

    def describe(self) -> str:
        return "; ".join(f"{format_regex(guard)} -> {{{', '.join(support)}}}"
                         for guard, support in zip(self.guards, self.supports))


def _regexes_by_size(letters: Vocabulary, limit: int) -> Dict[int, List[GuardRegex]]:
    """Canonical regexes: left-nested concat and choice, sorted choice operands, no nested star."""
    table: Dict[int, List[GuardRegex]] = {n: [] for n in range(1, limit + 1)}
    for cond in letters:
        n = condition_size(cond)
        if n <= limit:
            table[n].append(Letter(cond))
    for n in range(2, limit + 1):
        for inner in table[n - 1]:
            if not isinstance(inner, Star):
                table[n].append(Star(inner))
        for left_size in range(1, n - 1):
            right_size = n - 1 - left_size
            for left in table[left_size]:
                for right in table[right_size]:
                    if not isinstance(right, Concat):
                        table[n].append(Concat(left, right))
                    if not isinstance(right, Choice):
                        rightmost = left.right if isinstance(left, Choice) else left
                        if format_regex(rightmost) < format_regex(right):
                            table[n].append(Choice(left, right))
    return table


class _Semantics:
    """Label-set facts about a model used to prune guards that can never matter."""

    def __init__(self, cgs: Cgs, agent: str):
        self.cgs = cgs
        self.agent = agent
        self.label_sets = sorted({cgs.labels(state) for state in cgs.states}, key=sorted)

    def states_where(self, cond: Formula) -> FrozenSet[str]:
        return frozenset(state for state in self.cgs.states if holds_on_labels(cond, self.cgs.labels(state)))

    def nonempty(self, guard: GuardRegex) -> bool:
        if isinstance(guard, Letter):
            return bool(self.states_where(guard.cond))
        nfa = compile_guard(guard)
        seen: Set[int] = set()
        frontier = list(nfa.initial)
        while frontier:
            state = frontier.pop()
            for cond, target in nfa.edges[state]:
                if target not in seen and any(holds_on_labels(cond, labels) for labels in self.label_sets):
                    if target in nfa.accepting:
                        return True
                    seen.add(target)
                    frontier.append(target)
        return False

    def final_states(self, guard: GuardRegex) -> FrozenSet[str]:
        found: Set[str] = set()
        for cond in last_conditions(guard):
            found |= self.states_where(cond)
        return frozenset(found)

    def coverage(self, guard: GuardRegex, support: Sequence[str]) -> FrozenSet[str]:
        """States where the pair can fire as the last letter with a legal support."""
        return frozenset(state for state in self.final_states(guard)
                         if all(action in self.cgs.legal(state, self.agent) for action in support))


def _guard_candidates(vocab: Vocabulary, setting: Setting, budget: int,
                      semantics: _Semantics) -> List[Tuple[int, GuardRegex]]:
    letters = tuple(cond for cond in vocab)
    if setting is Setting.MEMORYLESS:
        regexes = [Letter(cond) for cond in letters]
        sized = [(condition_size(r.cond), r) for r in regexes if condition_size(r.cond) <= budget]
    else:
        table = _regexes_by_size(letters, budget) if budget > 0 else {}
        sized = [(n, r) for n, group in table.items() for r in group if r != UNIVERSAL]
    sized = [(n, r) for n, r in sized if semantics.nonempty(r)]
    sized.sort(key=lambda item: (item[0], format_regex(item[1])))
    return sized


def _pair_lists(candidates: List[Tuple[int, GuardRegex]], budget: int, options,
                semantics: _Semantics, setting: Setting) -> Iterator[Tuple[Tuple[GuardRegex, ...], Tuple[tuple, ...]]]:
    """Ordered lists of non-final (guard, option) pairs with total guard size exactly ``budget``."""

    def extend(remaining: int, guards, chosen, covered: FrozenSet[str], certain: Set[GuardRegex]):
        if remaining == 0:
            yield tuple(guards), tuple(chosen)
            return
        for size, guard in candidates:
            if size > remaining:
                break
            if guard in certain:
                continue
            for option in options(guard):
                reach = semantics.coverage(guard, option)
                if not reach:
                    continue
                if setting is Setting.MEMORYLESS and reach <= covered:
                    continue
                always = setting is Setting.RECALL and reach == semantics.final_states(guard)
                yield from extend(remaining - size, guards + [guard], chosen + [option],
                                  covered | reach, certain | {guard} if always else certain)

    yield from extend(budget, [], [], frozenset(), set())


def _fallback_actions(cgs: Cgs, agent: str) -> List[str]:
    legal = cgs.globally_legal(agent)
    return [action for action in cgs.actions if action in legal]


def _check_inputs(agent: str, vocab: Vocabulary, cgs: Cgs) -> None:
    if agent not in cgs.agents:
        raise InvalidStrategy(f"unknown agent {agent!r}", agent)
    if not vocab:
        raise VocabularyEmpty("guard vocabulary is empty")
    if not _fallback_actions(cgs, agent):
        raise InvalidStrategy(
            f"agent {agent!r} has no action legal in every state; consider adding a noop action", agent)


def enumerate_det(agent: str, k: int, setting: Setting, vocab: Vocabulary, cgs: Cgs) -> Iterator[NatStrategy]:
    """
    Canonical deterministic strategies of complexity at most ``k``.

    Strategies come in ascending complexity, then in lexicographic order of
    their text. Pairs that can never fire (unsatisfiable guard, action illegal
    wherever the guard can end, or every such state already taken by an
    earlier pair) are skipped, since dropping them yields an equivalent
    strategy that is enumerated anyway.
    """
    _check_inputs(agent, vocab, cgs)
    semantics = _Semantics(cgs, agent)
    fallback = fallback_guard(setting)
    fallback_cost = regex_size(fallback)
    candidates = _guard_candidates(vocab, setting, k - fallback_cost, semantics)

    def options(guard):
        states = semantics.final_states(guard)
        return [(action,) for action in cgs.actions
                if any(action in cgs.legal(state, agent) for state in states)]

    for total in range(fallback_cost, k + 1):
        batch = []
        for guards, chosen in _pair_lists(candidates, total - fallback_cost, options, semantics, setting):
            for action in _fallback_actions(cgs, agent):
                pairs = tuple(StrategyPair(guard, Distribution.point(option[0]))
                              for guard, option in zip(guards, chosen))
                pairs += (StrategyPair(fallback, Distribution.point(action)),)
                strategy = NatStrategy(agent, setting, pairs)
                batch.append((format_pairs(strategy), strategy))
        batch.sort(key=lambda item: item[0])
        logger.debug(f"{len(batch)} deterministic strategies of complexity {total} for {agent}")
        for _, strategy in batch:
            yield strategy


def enumerate_skeletons(agent: str, k: int, setting: Setting, vocab: Vocabulary,
                        cgs: Cgs) -> Iterator[StrategySkeleton]:
    """Guard lists of ``enumerate_det`` with every non-empty support instead of single actions."""
    _check_inputs(agent, vocab, cgs)
    semantics = _Semantics(cgs, agent)
    fallback = fallback_guard(setting)
    fallback_cost = regex_size(fallback)
    candidates = _guard_candidates(vocab, setting, k - fallback_cost, semantics)

    def options(guard):
        states = semantics.final_states(guard)
        usable = [action for action in cgs.actions if any(action in cgs.legal(state, agent) for state in states)]
        return [support for width in range(1, len(usable) + 1) for support in combinations(usable, width)]

    for total in range(fallback_cost, k + 1):
        batch = []
        for guards, supports in _pair_lists(candidates, total - fallback_cost, options, semantics, setting):
            for action in _fallback_actions(cgs, agent):
                skeleton = StrategySkeleton(agent, setting, guards + (fallback,), supports + ((action,),))
                batch.append((skeleton.describe(), skeleton))
        batch.sort(key=lambda item: item[0])
        for _, skeleton in batch:
            yield skeleton
