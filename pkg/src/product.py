"""
Product structures: a game with some or all natural strategies fixed

A product state pairs a game state with the memory of every fixed strategy
(one automaton state set per strategy pair). That memory decides which pair
fires, so the finite product carries the same path measure as the history
tree it replaces.
"""

import logging
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product as cartesian
from typing import Dict, FrozenSet, Hashable, List, Mapping, Sequence, Tuple

from cgs import Cgs, Distribution, Profile
from config import DEFAULT_MAX_PRODUCT_STATES
from errors import (InvalidStrategy, MissingAgentStrategy, NoMatch, StateBudgetExceeded,
                    StrategyAgentMismatch)
from natstrat import Memory, NatStrategy
from utils import format_fraction

logger = logging.getLogger(__name__)

MemoryVector = Tuple[Memory, ...]
ProductState = Tuple[str, MemoryVector]
Choice = Tuple[Profile, Distribution]


@dataclass(frozen=True)
class Mdp:
    """
    Finite MDP over indexed states.

    Attributes:
        states (Tuple[Hashable, ...]): State objects; for products these are
            (game state, memory vector) pairs.
        choices (Tuple[Tuple[Choice, ...], ...]): Per state, the non-empty list
            of (free-agent joint action, distribution over state indices).
        agents (Tuple[str, ...]): Free agents whose joint actions label choices.
        initial (int): Index of the initial state.
    """
    states: Tuple[Hashable, ...]
    choices: Tuple[Tuple[Choice, ...], ...]
    agents: Tuple[str, ...] = ()
    initial: int = 0

    @property
    def size(self) -> int:
        return len(self.states)

    def cgs_state(self, index: int) -> str:
        state = self.states[index]
        return state[0] if isinstance(state, tuple) else state

    @cached_property
    def successor_sets(self) -> Tuple[FrozenSet[int], ...]:
        return tuple(frozenset(target for _, dist in options for target in dist.support)
                     for options in self.choices)

    def project(self, states: Sequence[str]) -> FrozenSet[int]:
        """Indices whose game component is in ``states``."""
        wanted = set(states)
        return frozenset(index for index in range(self.size) if self.cgs_state(index) in wanted)


@dataclass(frozen=True)
class MarkovChain:
    states: Tuple[Hashable, ...]
    rows: Tuple[Distribution, ...]
    initial: int = 0

    @property
    def size(self) -> int:
        return len(self.states)

    def cgs_state(self, index: int) -> str:
        state = self.states[index]
        return state[0] if isinstance(state, tuple) else state

    def as_mdp(self) -> Mdp:
        return Mdp(self.states, tuple(((((), row),) for row in self.rows)), (), self.initial)

    def project(self, states: Sequence[str]) -> FrozenSet[int]:
        wanted = set(states)
        return frozenset(index for index in range(self.size) if self.cgs_state(index) in wanted)


class ProfileTracker:
    """Memory bookkeeping and move selection for a set of fixed strategies."""

    def __init__(self, cgs: Cgs, profile: Mapping[str, NatStrategy]):
        for agent, strategy in profile.items():
            if strategy.agent != agent:
                raise StrategyAgentMismatch(
                    f"strategy for {strategy.agent!r} was supplied for agent {agent!r}", agent)
            if agent not in cgs.agents:
                raise StrategyAgentMismatch(f"unknown agent {agent!r} in profile", agent)
        self.cgs = cgs
        self.agents = tuple(agent for agent in cgs.agents if agent in profile)
        self.strategies = tuple(profile[agent] for agent in self.agents)

    def initial(self, state: str) -> MemoryVector:
        labels = self.cgs.labels(state)
        return tuple(strategy.initial_memory(labels) for strategy in self.strategies)

    def advance(self, memory: MemoryVector, state: str) -> MemoryVector:
        labels = self.cgs.labels(state)
        return tuple(strategy.advance(part, labels) for strategy, part in zip(self.strategies, memory))

    def moves(self, memory: MemoryVector, state: str) -> Tuple[Distribution, ...]:
        """Action distribution of every fixed agent at the product state."""
        labels = self.cgs.labels(state)
        moves = []
        for agent, strategy, part in zip(self.agents, self.strategies, memory):
            try:
                index = strategy.select(part, labels, self.cgs.legal(state, agent))
            except NoMatch as e:
                raise InvalidStrategy(str(e), agent) from e
            moves.append(strategy.pairs[index].dist)
        return tuple(moves)

    def memory_bound(self) -> int:
        """Upper bound on distinct memory vectors: 2 to the total automaton size."""
        return 2 ** sum(nfa.size for strategy in self.strategies for nfa in strategy.automata)


def memory_update(tracker: ProfileTracker, memory: MemoryVector, state: str) -> MemoryVector:
    """Memory of every tracked agent after the play enters ``state``."""
    return tracker.advance(memory, state)


def _joint_outcomes(cgs: Cgs, state: str, fixed_agents: Sequence[str], fixed_moves: Sequence[Distribution],
                    free_profile: Sequence[str], free_agents: Sequence[str]) -> Dict[str, Fraction]:
    """Σ_m Π_a move_a(m_a) · τ(state, m)(s'), with free components pinned."""
    outcome: Dict[str, Fraction] = {}
    fixed_index = {agent: i for i, agent in enumerate(fixed_agents)}
    free_index = {agent: i for i, agent in enumerate(free_agents)}
    for combo in cartesian(*(list(move.items()) for move in fixed_moves)):
        weight = Fraction(1)
        for _, p in combo:
            weight *= p
        profile = tuple(combo[fixed_index[agent]][0] if agent in fixed_index else free_profile[free_index[agent]]
                        for agent in cgs.agents)
        for target, p in cgs.successors(state, profile).items():
            outcome[target] = outcome.get(target, Fraction(0)) + weight * p
    return outcome


def _explore(cgs: Cgs, tracker: ProfileTracker, initial: str, max_states: int):
    free_agents = tuple(agent for agent in cgs.agents if agent not in tracker.agents)
    start = (initial, tracker.initial(initial))
    index: Dict[ProductState, int] = {start: 0}
    order: List[ProductState] = [start]
    choices: List[Tuple[Choice, ...]] = []
    frontier = deque([start])
    while frontier:
        product_state = frontier.popleft()
        state, memory = product_state
        moves = tracker.moves(memory, state)
        free_options = [sorted(cgs.legal(state, agent), key=cgs.actions.index) for agent in free_agents]
        options = []
        for free_profile in cartesian(*free_options):
            outcome = _joint_outcomes(cgs, state, tracker.agents, moves, free_profile, free_agents)
            weights = []
            for target in sorted(outcome, key=cgs.states.index):
                successor = (target, tracker.advance(memory, target))
                if successor not in index:
                    if len(order) >= max_states:
                        raise StateBudgetExceeded(max_states, "product states")
                    index[successor] = len(order)
                    order.append(successor)
                    frontier.append(successor)
                weights.append((index[successor], outcome[target]))
            options.append((tuple(free_profile), Distribution(weights)))
        choices.append(tuple(options))

    bound = len(cgs.states) * tracker.memory_bound()
    assert len(order) <= bound, f"product has {len(order)} states, above the bound {bound}"
    return tuple(order), tuple(choices), free_agents


def fix_coalition(cgs: Cgs, coalition: Sequence[str], profile: Mapping[str, NatStrategy], initial: str,
                  max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> Mdp:
    """
    Fix the coalition's strategies and keep every other agent as MDP choices.

    Raises:
        StrategyAgentMismatch: The profile does not cover exactly the coalition.
        InvalidStrategy: A fixed strategy has no applicable pair somewhere.
        StateBudgetExceeded: More than ``max_states`` reachable product states.
    """
    if set(profile) != set(coalition):
        raise StrategyAgentMismatch(
            f"profile covers {sorted(profile)} but the coalition is {sorted(coalition)}", "profile")
    tracker = ProfileTracker(cgs, profile)
    states, choices, free_agents = _explore(cgs, tracker, initial, max_states)
    logger.debug(f"Coalition product from {initial}: {len(states)} states, free agents {free_agents}")
    return Mdp(states, choices, free_agents, 0)


def fix_all(cgs: Cgs, profile: Mapping[str, NatStrategy], initial: str,
            max_states: int = DEFAULT_MAX_PRODUCT_STATES) -> MarkovChain:
    missing = [agent for agent in cgs.agents if agent not in profile]
    if missing:
        raise MissingAgentStrategy(f"no strategy for {missing}", ",".join(missing))
    tracker = ProfileTracker(cgs, profile)
    states, choices, _ = _explore(cgs, tracker, initial, max_states)
    logger.debug(f"Markov chain from {initial}: {len(states)} states")
    return MarkovChain(states, tuple(options[0][1] for options in choices), 0)


def state_names(structure) -> List[str]:
    """Readable product state names: the game state, suffixed when memories differ."""
    seen: Dict[str, List[Hashable]] = {}
    for state in structure.states:
        if isinstance(state, tuple):
            seen.setdefault(state[0], [])
            if state[1] not in seen[state[0]]:
                seen[state[0]].append(state[1])
    names = []
    for index, state in enumerate(structure.states):
        if not isinstance(state, tuple):
            names.append(str(state))
            continue
        variants = seen[state[0]]
        names.append(state[0] if len(variants) == 1 else f"{state[0]}#{variants.index(state[1])}")
    return names


def format_transitions(structure) -> str:
    """One line per transition: ``source choice target p/q``."""
    mdp = structure.as_mdp() if isinstance(structure, MarkovChain) else structure
    names = state_names(mdp)
    lines = []
    for source, options in enumerate(mdp.choices):
        for label, dist in options:
            choice = ",".join(label) if label else "-"
            for target, p in dist.items():
                lines.append(f"{names[source]} {choice} {names[target]} {format_fraction(p)}")
    return "\n".join(lines) + ("\n" if lines else "")
