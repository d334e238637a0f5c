"""
Shared fixtures: shipped sample models, small hand-built games and random generators
"""

import os
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as cartesian
from pathlib import Path
from typing import Dict, FrozenSet, Hashable, List, Mapping, Tuple

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cgs import Cgs, Distribution, validate_cgs  # noqa: E402
from dsl import load_model, parse_model  # noqa: E402
from natstrat import NatStrategy, Setting, parse_strategy  # noqa: E402
from product import Mdp  # noqa: E402

SAMPLES = Path(__file__).resolve().parent.parent / "samples"

# s0 --a:x--> goal or s1 (1/2 each), s0 --a:y--> s1; in s1 the opponent b either
# gambles (x: goal with 1/3) or sends the play back to s0 (y).
RELAY_MODEL = """
agents a, b
props p, goal
actions x, y

states s0, s1 {p}, g {goal}, d

legal s0 a {x, y}
legal s0 b {x, y}
legal s1 a {x, y}
legal s1 b {x, y}
legal g a {x, y}
legal g b {x, y}
legal d a {x, y}
legal d b {x, y}

trans s0 (x, x) -> { g: 1/2, s1: 1/2 }
trans s0 (x, y) -> { g: 1/2, s1: 1/2 }
trans s0 (y, x) -> { s1: 1 }
trans s0 (y, y) -> { s1: 1 }
trans s1 (x, x) -> { g: 1/3, d: 2/3 }
trans s1 (y, x) -> { g: 1/3, d: 2/3 }
trans s1 (x, y) -> { s0: 1 }
trans s1 (y, y) -> { s0: 1 }
trans g (x, x) -> { g: 1 }
trans g (x, y) -> { g: 1 }
trans g (y, x) -> { g: 1 }
trans g (y, y) -> { g: 1 }
trans d (x, x) -> { d: 1 }
trans d (x, y) -> { d: 1 }
trans d (y, x) -> { d: 1 }
trans d (y, y) -> { d: 1 }

init s0
"""

# single agent, two states, both actions legal everywhere; p holds in s1 only
TOGGLE_MODEL = """
agents ag
props p
actions a, b

states s0, s1 {p}

legal s0 ag {a, b}
legal s1 ag {a, b}

trans s0 (a) -> { s1: 1 }
trans s0 (b) -> { s0: 1 }
trans s1 (a) -> { s0: 1 }
trans s1 (b) -> { s1: 1/2, s0: 1/2 }

init s0
"""


def create_sample_model(text: str) -> Cgs:
    """Parse and validate model DSL text"""
    return validate_cgs(parse_model(text))


def create_sample_strategy(text: str, agent: str = None, setting: Setting = None) -> NatStrategy:
    """Parse strategy text, one pair per line"""
    return parse_strategy(text, agent, setting)


@dataclass
class RandomGame:
    """A generated two-agent game kept next to its DSL text"""
    text: str
    states: List[str]
    labels: Dict[str, FrozenSet[str]]
    legal: Dict[Tuple[str, str], Tuple[str, ...]]
    trans: Dict[Tuple[str, Tuple[str, str]], Dict[str, Fraction]]


def create_random_game(rng: random.Random, max_states: int = 3) -> RandomGame:
    """
    Agents a and b with actions x and y on two to ``max_states`` states.

    x is legal everywhere; every transition has one or two targets with
    dyadic probabilities.
    """
    states = [f"s{i}" for i in range(rng.randint(2, max_states))]
    props = ["p", "q"] if rng.random() < 0.5 else ["p"]
    labels = {state: frozenset(prop for prop in props if rng.random() < 0.5) for state in states}
    legal = {(state, agent): ("x", "y") if rng.random() < 0.5 else ("x",) for state in states for agent in ("a", "b")}
    lines = ["agents a, b", "props p, q", "actions x, y", ""]
    lines.append("states " + ", ".join(f"{state} {{{', '.join(sorted(labels[state]))}}}" if labels[state] else state
                                       for state in states))
    lines += [f"legal {state} {agent} {{{', '.join(actions)}}}" for (state, agent), actions in legal.items()]
    trans = {}
    for state in states:
        for profile in cartesian(legal[(state, "a")], legal[(state, "b")]):
            first, second = rng.sample(states, 2)
            share = Fraction(rng.randint(1, 4), 4)
            dist = {first: share}
            if share < 1:
                dist[second] = 1 - share
            trans[(state, profile)] = dist
            entries = ", ".join(f"{target}: {p}" for target, p in dist.items())
            lines.append(f"trans {state} ({profile[0]}, {profile[1]}) -> {{ {entries} }}")
    lines.append("init s0")
    return RandomGame("\n".join(lines) + "\n", states, labels, legal, trans)


def create_random_mdp(rng: random.Random, max_states: int = 5) -> Mdp:
    """One or two choices per state, each moving to one or two states with dyadic weights"""
    size = rng.randint(2, max_states)
    choices = []
    for _ in range(size):
        options = []
        for label in range(rng.randint(1, 2)):
            first, second = rng.sample(range(size), 2)
            share = Fraction(rng.randint(1, 4), 4)
            options.append(((f"c{label}",), Distribution({first: share, second: 1 - share})))
        choices.append(tuple(options))
    return Mdp(tuple(range(size)), tuple(choices), ("b",), 0)


Chain = Mapping[Hashable, Mapping[Hashable, Fraction]]


def solve_exact(chain: Chain, unknown: List, target: FrozenSet) -> Dict[Hashable, Fraction]:
    """Gauss-Jordan elimination of x = P x + b over the unknown states"""
    n = len(unknown)
    position = {state: i for i, state in enumerate(unknown)}
    rows = []
    for state in unknown:
        row = [Fraction(0)] * (n + 1)
        row[position[state]] += 1
        for successor, p in chain[state].items():
            if successor in position:
                row[position[successor]] -= p
            elif successor in target:
                row[n] += p
        rows.append(row)
    for column in range(n):
        pivot = next(r for r in range(column, n) if rows[r][column] != 0)
        rows[column], rows[pivot] = rows[pivot], rows[column]
        lead = rows[column][column]
        rows[column] = [value / lead for value in rows[column]]
        for r in range(n):
            if r != column and rows[r][column] != 0:
                factor = rows[r][column]
                rows[r] = [value - factor * pivot_value for value, pivot_value in zip(rows[r], rows[column])]
    return {state: rows[position[state]][n] for state in unknown}


def exact_until_values(chain: Chain, safe: FrozenSet, target: FrozenSet) -> Dict[Hashable, Fraction]:
    """Pr(safe U target) from every state of a chain given as nested dictionaries"""
    reach = set(target)
    grew = True
    while grew:
        grew = False
        for state, dist in chain.items():
            if state not in reach and state in safe and any(successor in reach for successor in dist):
                reach.add(state)
                grew = True
    solved = solve_exact(chain, sorted(reach - target), target)
    return {state: Fraction(1) if state in target else solved.get(state, Fraction(0)) for state in chain}


@pytest.fixture(scope="session")
def coin() -> Cgs:
    return load_model(SAMPLES / "coin.cgs")


@pytest.fixture(scope="session")
def maze() -> Cgs:
    return load_model(SAMPLES / "maze.cgs")


@pytest.fixture(scope="session")
def voting() -> Cgs:
    return load_model(SAMPLES / "voting.cgs")


@pytest.fixture(scope="session")
def relay() -> Cgs:
    return create_sample_model(RELAY_MODEL)


@pytest.fixture(scope="session")
def toggle() -> Cgs:
    return create_sample_model(TOGGLE_MODEL)


@pytest.fixture(scope="session")
def voter() -> NatStrategy:
    return parse_strategy((SAMPLES / "voter.nstrat").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def coercer() -> NatStrategy:
    return parse_strategy((SAMPLES / "coercer.nstrat").read_text(encoding="utf-8"))
