"""
Stochastic concurrent game structures

This module holds the domain model every other module reads: exact
distributions, the validated game structure, and histories. All values are
immutable after construction, so a Cgs can be shared freely between
threads evaluating candidate strategies.

Key Components:
    - Distribution: exact finite distribution with no zero entries
    - RawModel: structurally unchecked model as produced by the DSL parser
    - Cgs: validated structure (states, agents, legality, transitions, labels)
    - History: non-empty connected finite path
    - validate_cgs / successors / reachable_states: operations over them
"""

import logging
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product as cartesian
from types import MappingProxyType
from typing import (Any, Dict, FrozenSet, Generic, Hashable, Iterable, Iterator,
                    List, Mapping, Optional, Sequence, Tuple, TypeVar, Union)

from pydantic import BaseModel, ConfigDict, Field

from errors import (DanglingStateReference, EmptyLegality, IllegalProfile, InvalidHistory,
                    MissingTransition, ModelError, TransitionForIllegalProfile,
                    UnnormalizedDistribution)
from utils import format_fraction

logger = logging.getLogger(__name__)

Prob = Fraction
T = TypeVar("T", bound=Hashable)
Profile = Tuple[str, ...]


class Distribution(Generic[T]):
    """
    Exact probability distribution over a finite support.

    Zero weights are dropped on construction and the remaining weights must
    sum to exactly 1. Insertion order of the support is preserved, which keeps
    every derived structure deterministic.
    """

    __slots__ = ("_weights",)

    def __init__(self, weights: Union[Mapping[T, Any], Iterable[Tuple[T, Any]]]):
        pairs = weights.items() if isinstance(weights, Mapping) else weights
        merged: Dict[T, Fraction] = {}
        for element, probability in pairs:
            probability = Fraction(probability)
            if probability < 0:
                raise ValueError(f"negative probability {probability} for {element!r}")
            if probability == 0:
                continue
            merged[element] = merged.get(element, Fraction(0)) + probability
        total = sum(merged.values(), Fraction(0))
        if total != 1:
            raise ValueError(f"distribution sums to {total}")
        self._weights = merged

    @classmethod
    def point(cls, element: T) -> "Distribution[T]":
        return cls({element: Fraction(1)})

    @classmethod
    def uniform(cls, elements: Sequence[T]) -> "Distribution[T]":
        share = Fraction(1, len(elements))
        return cls([(element, share) for element in elements])

    @staticmethod
    def product(parts: Sequence["Distribution"]) -> "Distribution[tuple]":
        """Independent product distribution over tuples, in component order."""
        outcomes: List[Tuple[tuple, Fraction]] = [((), Fraction(1))]
        for part in parts:
            outcomes = [(prefix + (element,), weight * p)
                        for prefix, weight in outcomes
                        for element, p in part.items()]
        return Distribution(outcomes)

    @property
    def support(self) -> Tuple[T, ...]:
        return tuple(self._weights)

    @property
    def is_dirac(self) -> bool:
        return len(self._weights) == 1

    @property
    def dirac_value(self) -> T:
        if not self.is_dirac:
            raise ValueError("distribution is not a point distribution")
        return next(iter(self._weights))

    def items(self) -> Iterator[Tuple[T, Fraction]]:
        return iter(self._weights.items())

    def map(self, fn) -> "Distribution":
        return Distribution((fn(element), p) for element, p in self._weights.items())

    def __getitem__(self, element: T) -> Fraction:
        return self._weights.get(element, Fraction(0))

    def __contains__(self, element: object) -> bool:
        return element in self._weights

    def __iter__(self) -> Iterator[T]:
        return iter(self._weights)

    def __len__(self) -> int:
        return len(self._weights)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self._weights == other._weights

    def __hash__(self) -> int:
        return hash(frozenset(self._weights.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{element}: {format_fraction(p)}" for element, p in self._weights.items())
        return "{" + body + "}"


# --- RAW MODEL (DSL OUTPUT) ---

class RawState(BaseModel):
    name: str = Field(..., description="State identifier")
    labels: List[str] = Field(default_factory=list, description="Atomic propositions true in the state")
    line: Optional[int] = Field(None, description="Source line")


class RawLegal(BaseModel):
    state: str = Field(..., description="State identifier")
    agent: str = Field(..., description="Agent identifier")
    actions: List[str] = Field(..., description="Actions available to the agent")
    line: Optional[int] = Field(None, description="Source line")


class RawTransition(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: str = Field(..., description="Source state")
    profile: List[str] = Field(..., description="Joint action in declared agent order")
    outcomes: List[Tuple[str, Fraction]] = Field(..., description="Target states with exact weights")
    line: Optional[int] = Field(None, description="Source line")


class RawModel(BaseModel):
    """
    Model description exactly as written, before any semantic checks.

    Attributes:
        agents (List[str]): Agents in declaration order; this order fixes the
            layout of every joint action.
        props (List[str]): Declared atomic propositions.
        actions (List[str]): Declared actions.
        states (List[RawState]): States with their label sets.
        legal (List[RawLegal]): Legality entries per (state, agent).
        transitions (List[RawTransition]): Transition entries per (state, profile).
        init (Optional[str]): Initial state, if declared.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    agents: List[str] = Field(default_factory=list)
    props: List[str] = Field(default_factory=list)
    actions: List[str] = Field(default_factory=list)
    states: List[RawState] = Field(default_factory=list)
    legal: List[RawLegal] = Field(default_factory=list)
    transitions: List[RawTransition] = Field(default_factory=list)
    init: Optional[str] = None


# --- VALIDATED STRUCTURE ---

@dataclass(frozen=True)
class Cgs:
    """
    Validated stochastic concurrent game structure.

    Joint actions (profiles) are tuples laid out in ``agents`` order. Only
    profiles that are legal componentwise have a transition.
    """
    states: Tuple[str, ...]
    agents: Tuple[str, ...]
    actions: Tuple[str, ...]
    props: Tuple[str, ...]
    legality: Mapping[Tuple[str, str], FrozenSet[str]]
    transitions: Mapping[Tuple[str, Profile], Distribution]
    labeling: Mapping[str, FrozenSet[str]]
    initial: Optional[str] = None

    def legal(self, state: str, agent: str) -> FrozenSet[str]:
        return self.legality[(state, agent)]

    def labels(self, state: str) -> FrozenSet[str]:
        return self.labeling[state]

    def agent_index(self, agent: str) -> int:
        return self.agents.index(agent)

    @cached_property
    def _profiles(self) -> Mapping[str, Tuple[Profile, ...]]:
        table = {}
        for state in self.states:
            options = [sorted(self.legality[(state, agent)], key=self.actions.index) for agent in self.agents]
            table[state] = tuple(cartesian(*options))
        return MappingProxyType(table)

    def profiles(self, state: str) -> Tuple[Profile, ...]:
        """Legal joint actions at ``state`` in canonical order."""
        return self._profiles[state]

    def successors(self, state: str, profile: Profile) -> Distribution:
        if len(profile) != len(self.agents):
            raise IllegalProfile(state, tuple(profile))
        for agent, action in zip(self.agents, profile):
            if action not in self.legality[(state, agent)]:
                raise IllegalProfile(state, tuple(profile), agent)
        return self.transitions[(state, tuple(profile))]

    @cached_property
    def _successor_sets(self) -> Mapping[str, FrozenSet[str]]:
        return MappingProxyType({
            state: frozenset(target for profile in self.profiles(state)
                             for target in self.transitions[(state, profile)])
            for state in self.states
        })

    def successor_states(self, state: str) -> FrozenSet[str]:
        return self._successor_sets[state]

    def globally_legal(self, agent: str) -> FrozenSet[str]:
        """Actions the agent may play in every state."""
        common = None
        for state in self.states:
            legal = self.legality[(state, agent)]
            common = legal if common is None else common & legal
        return frozenset(common or ())


@dataclass(frozen=True)
class History:
    """Non-empty finite path through a Cgs."""
    states: Tuple[str, ...]

    def __post_init__(self):
        if not self.states:
            raise InvalidHistory("a history needs at least one state")

    @classmethod
    def of(cls, cgs: Cgs, states: Sequence[str]) -> "History":
        """Build a history, checking every step is possible in ``cgs``."""
        states = tuple(states)
        if not states:
            raise InvalidHistory("a history needs at least one state")
        for state in states:
            if state not in cgs.labeling:
                raise InvalidHistory(f"unknown state {state!r}", state)
        for position, (source, target) in enumerate(zip(states, states[1:])):
            if target not in cgs.successor_states(source):
                raise InvalidHistory(f"no legal move from {source!r} to {target!r}", position)
        return cls(states)

    @property
    def last(self) -> str:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)

    def extend(self, state: str) -> "History":
        return History(self.states + (state,))


def validate_cgs(raw: RawModel) -> Cgs:
    """
    Check a raw model against every structural invariant and build a Cgs.

    Probabilities are taken exactly as written; nothing is renormalized.
    """
    if not raw.agents:
        raise ModelError("model declares no agents", "agents")
    if not raw.states:
        raise ModelError("model declares no states", "states")
    if not raw.actions:
        raise ModelError("model declares no actions", "actions")
    for kind, names in (("agent", raw.agents), ("action", raw.actions),
                        ("prop", raw.props), ("state", [s.name for s in raw.states])):
        seen = set()
        for name in names:
            if name in seen:
                raise ModelError(f"{kind} {name!r} declared twice", name)
            seen.add(name)

    state_names = [s.name for s in raw.states]
    known_states = set(state_names)
    known_agents = set(raw.agents)
    known_actions = set(raw.actions)
    known_props = set(raw.props)

    labeling: Dict[str, FrozenSet[str]] = {}
    for state in raw.states:
        for prop in state.labels:
            if prop not in known_props:
                raise DanglingStateReference("prop", prop, f"labels of state {state.name}")
        labeling[state.name] = frozenset(state.labels)

    legality: Dict[Tuple[str, str], FrozenSet[str]] = {}
    for entry in raw.legal:
        where = f"legal {entry.state} {entry.agent}"
        if entry.state not in known_states:
            raise DanglingStateReference("state", entry.state, where)
        if entry.agent not in known_agents:
            raise DanglingStateReference("agent", entry.agent, where)
        for action in entry.actions:
            if action not in known_actions:
                raise DanglingStateReference("action", action, where)
        if (entry.state, entry.agent) in legality:
            raise ModelError(f"duplicate legality entry for {entry.agent!r} in {entry.state!r}", where)
        legality[(entry.state, entry.agent)] = frozenset(entry.actions)

    for state in state_names:
        for agent in raw.agents:
            if not legality.get((state, agent)):
                raise EmptyLegality(state, agent)

    transitions: Dict[Tuple[str, Profile], Distribution] = {}
    for entry in raw.transitions:
        profile = tuple(entry.profile)
        where = f"trans {entry.state} {profile}"
        if entry.state not in known_states:
            raise DanglingStateReference("state", entry.state, where)
        if len(profile) != len(raw.agents):
            raise ModelError(
                f"profile {profile} has {len(profile)} components for {len(raw.agents)} agents", where)
        for agent, action in zip(raw.agents, profile):
            if action not in known_actions:
                raise DanglingStateReference("action", action, where)
            if action not in legality[(entry.state, agent)]:
                raise TransitionForIllegalProfile(entry.state, profile, agent)
        for target, _ in entry.outcomes:
            if target not in known_states:
                raise DanglingStateReference("state", target, where)
        if any(weight < 0 for _, weight in entry.outcomes):
            raise UnnormalizedDistribution(entry.state, profile, sum((w for _, w in entry.outcomes), Fraction(0)))
        total = sum((weight for _, weight in entry.outcomes), Fraction(0))
        if total != 1:
            raise UnnormalizedDistribution(entry.state, profile, total)
        if (entry.state, profile) in transitions:
            raise ModelError(f"duplicate transition entry for {profile} in {entry.state!r}", where)
        transitions[(entry.state, profile)] = Distribution(entry.outcomes)

    if raw.init is not None and raw.init not in known_states:
        raise DanglingStateReference("state", raw.init, "init")

    cgs = Cgs(
        states=tuple(state_names),
        agents=tuple(raw.agents),
        actions=tuple(raw.actions),
        props=tuple(raw.props),
        legality=MappingProxyType(legality),
        transitions=MappingProxyType(transitions),
        labeling=MappingProxyType(labeling),
        initial=raw.init,
    )
    for state in cgs.states:
        for profile in cgs.profiles(state):
            if (state, profile) not in transitions:
                raise MissingTransition(state, profile)

    logger.debug(f"Validated model with {len(cgs.states)} states and {len(cgs.agents)} agents")
    return cgs


def successors(cgs: Cgs, state: str, profile: Sequence[str]) -> Distribution:
    """τ(state, profile); raises IllegalProfile naming the first offending agent."""
    return cgs.successors(state, tuple(profile))


def reachable_states(cgs: Cgs, initial: str) -> Tuple[str, ...]:
    """States reachable from ``initial`` in breadth-first discovery order."""
    seen = {initial}
    order = [initial]
    frontier = deque([initial])
    while frontier:
        state = frontier.popleft()
        for target in sorted(cgs.successor_states(state), key=cgs.states.index):
            if target not in seen:
                seen.add(target)
                order.append(target)
                frontier.append(target)
    return tuple(order)


def unreachable_states(cgs: Cgs, initial: str) -> Tuple[str, ...]:
    reachable = set(reachable_states(cgs, initial))
    return tuple(state for state in cgs.states if state not in reachable)
