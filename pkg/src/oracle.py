"""
Monte-Carlo oracle for fully fixed strategy profiles

Plays are sampled with numpy's PCG64 generator. The root seed is split with
SeedSequence.spawn into a fixed number of batches, so the aggregate estimate
only depends on the seed and never on how many worker threads run the
batches.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np

from cgs import Cgs, Distribution
from errors import FormulaError, MissingAgentStrategy
from logic import Formula, Until, check_atoms, holds_on_labels, is_boolean, to_text
from models import Estimate
from natstrat import NatStrategy
from product import MemoryVector, ProfileTracker

logger = logging.getLogger(__name__)

Z_99 = 2.5758
DEFAULT_BATCHES = 16


@dataclass(frozen=True)
class StateObjective:
    """safe U target over game states."""
    safe: FrozenSet[str]
    target: FrozenSet[str]


def state_objective(cgs: Cgs, f: Formula) -> StateObjective:
    """Game-state sets of an until formula over Boolean conditions (``F p`` included)."""
    if not isinstance(f, Until) or not is_boolean(f.left) or not is_boolean(f.right):
        raise FormulaError(f"simulation needs 'safe U target' over Boolean conditions, got {to_text(f)}", f.span)
    check_atoms(f, cgs.props)
    safe = frozenset(s for s in cgs.states if holds_on_labels(f.left, cgs.labels(s)))
    target = frozenset(s for s in cgs.states if holds_on_labels(f.right, cgs.labels(s)))
    return StateObjective(safe, target)


def confidence_interval(hits: int, n: int) -> Tuple[float, float, float]:
    """p̂ and the clipped normal-approximation 99% interval."""
    p = hits / n
    half = Z_99 * math.sqrt(p * (1 - p) / n)
    return p, max(0.0, p - half), min(1.0, p + half)


class _Simulator:
    """Samples one step of the Markov chain induced by a full profile."""

    def __init__(self, cgs: Cgs, profile: Mapping[str, NatStrategy]):
        missing = [agent for agent in cgs.agents if agent not in profile]
        if missing:
            raise MissingAgentStrategy(f"no strategy for {missing}", ",".join(missing))
        self.cgs = cgs
        self.tracker = ProfileTracker(cgs, profile)
        self._steps: Dict[Tuple[str, MemoryVector], Tuple[List[Tuple[tuple, str]], np.ndarray]] = {}

    def _outcomes(self, state: str, memory: MemoryVector):
        key = (state, memory)
        cached = self._steps.get(key)
        if cached is None:
            joint = Distribution.product(self.tracker.moves(memory, state))
            outcomes, weights = [], []
            for profile, p in joint.items():
                for target, q in self.cgs.successors(state, profile).items():
                    outcomes.append((profile, target))
                    weights.append(float(p * q))
            cumulative = np.cumsum(np.asarray(weights, dtype=float))
            cumulative[-1] = 1.0
            cached = (outcomes, cumulative)
            self._steps[key] = cached
        return cached

    def step(self, state: str, memory: MemoryVector, rng: np.random.Generator) -> Tuple[tuple, str, MemoryVector]:
        outcomes, cumulative = self._outcomes(state, memory)
        index = int(np.searchsorted(cumulative, rng.random(), side="right"))
        profile, target = outcomes[min(index, len(outcomes) - 1)]
        return profile, target, self.tracker.advance(memory, target)

    def play(self, start: str, objective: StateObjective, horizon: int, rng: np.random.Generator) -> Optional[bool]:
        """True on reaching the target, False on leaving safe states, None when undecided."""
        state = start
        memory = self.tracker.initial(start)
        for step in range(horizon + 1):
            if state in objective.target:
                return True
            if state not in objective.safe:
                return False
            if step == horizon:
                return None
            _, state, memory = self.step(state, memory, rng)
        return None


def _batch_sizes(n: int, batches: int) -> List[int]:
    batches = min(batches, n)
    return [n // batches + (1 if i < n % batches else 0) for i in range(batches)]


def estimate_until(cgs: Cgs, profile: Mapping[str, NatStrategy], start: str, objective: StateObjective,
                   horizon: int, n: int, seed: int, batches: int = DEFAULT_BATCHES, jobs: int = 1) -> Estimate:
    """
    Estimate Pr(safe U≤horizon target) from ``start``.

    Raises:
        MissingAgentStrategy: The profile does not cover every agent.
    """
    simulator = _Simulator(cgs, profile)
    sizes = _batch_sizes(n, batches)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(batch: int) -> Tuple[int, int]:
        rng = np.random.Generator(np.random.PCG64(children[batch]))
        hits = undecided = 0
        for _ in range(sizes[batch]):
            outcome = simulator.play(start, objective, horizon, rng)
            if outcome is None:
                undecided += 1
            elif outcome:
                hits += 1
        return hits, undecided

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(run, range(len(sizes))))
    hits = sum(h for h, _ in results)
    undecided = sum(u for _, u in results)
    value, lower, upper = confidence_interval(hits, n)
    logger.debug(f"estimate from {start}: {hits}/{n} hits, {undecided} undecided at horizon {horizon}")
    return Estimate(value=value, lower=lower, upper=upper, samples=n, horizon=horizon, undecided=undecided / n)


def estimate_until_unbounded(cgs: Cgs, profile: Mapping[str, NatStrategy], start: str, objective: StateObjective,
                             n: int, seed: int, tolerance: float = 1e-3, initial_horizon: int = 8,
                             max_horizon: int = 1 << 16, batches: int = DEFAULT_BATCHES, jobs: int = 1) -> Estimate:
    """Double the horizon until at most ``tolerance`` of the plays are undecided."""
    horizon = initial_horizon
    while True:
        estimate = estimate_until(cgs, profile, start, objective, horizon, n, seed, batches, jobs)
        if estimate.undecided <= tolerance or horizon >= max_horizon:
            if estimate.undecided > tolerance:
                logger.warning(f"{estimate.undecided:.4f} of plays still undecided at horizon {horizon}")
            return estimate
        horizon *= 2


def simulate_traces(cgs: Cgs, profile: Mapping[str, NatStrategy], start: str, horizon: int, n: int,
                    seed: int) -> List[str]:
    """``n`` plays of ``horizon`` steps: ``s0 [a,b] s1 [a,b] s2 ...``."""
    simulator = _Simulator(cgs, profile)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lines = []
    for _ in range(n):
        state = start
        memory = simulator.tracker.initial(start)
        parts = [state]
        for _ in range(horizon):
            joint, state, memory = simulator.step(state, memory, rng)
            parts.append(f"[{','.join(joint)}]")
            parts.append(state)
        lines.append(" ".join(parts))
    return lines
