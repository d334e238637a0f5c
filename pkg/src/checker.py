"""
Bottom-up model checking of NatPATL and NatPATL* formulas

State subformulas are decided on every state reachable from the initial
state, innermost first, and frozen as predicates. A coalition operator is
decided by enumerating deterministic natural-strategy profiles of bounded
complexity for the coalition, fixing them in the game and solving the
remaining MDP for the opponents' optimum. Bodies of the form X, U and their
negations go to the dedicated solvers; anything else goes through a Rabin
automaton.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as cartesian
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from cgs import Cgs, reachable_states
from errors import FormulaError, NotPositiveFragment, SolverError, UnknownAgent
from logic import (And, Atom, Coalition, Formula, Next, Not, Or, Top, Until, check_atoms,
                   classify, is_state_formula, subformulas, to_text)
from models import CheckConfig, Verdict
from natstrat import (NatStrategy, Vocabulary, complexity, enumerate_det, format_pairs,
                      literal_vocabulary, load_vocabulary, minterm_vocabulary, validate_strategy)
from omega import Dra, ltl_to_dra, mdp_omega
from probsolve import Interval, Optimize, SolveMode, UntilObjective, mdp_next, mdp_until
from product import Mdp, fix_all, fix_coalition

logger = logging.getLogger(__name__)

Profile = Dict[str, NatStrategy]
Key = Tuple[str, Formula]


def vocabulary_for(source: str, cgs: Cgs) -> Vocabulary:
    """Resolve ``literals``, ``minterms`` or a vocabulary file path."""
    if source == "literals":
        return literal_vocabulary(cgs)
    if source == "minterms":
        return minterm_vocabulary(cgs)
    return load_vocabulary(source)


def compare(value: Interval, op, threshold: Fraction) -> Verdict:
    """Decide value ⋈ threshold; unknown when the interval straddles it."""
    low, high = op.holds(value.lower, threshold), op.holds(value.upper, threshold)
    if low and high:
        return Verdict.TRUE
    if not low and not high:
        return Verdict.FALSE
    return Verdict.UNKNOWN


@dataclass
class Witness:
    state: str
    formula: Coalition
    profile: Profile
    value: Interval


@dataclass
class CheckStats:
    candidates: int = 0
    products: int = 0
    largest_product: int = 0
    automaton_states: int = 0
    solve_seconds: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return {"candidates": self.candidates, "products": self.products,
                "largest_product": self.largest_product, "automaton_states": self.automaton_states,
                "solve_seconds": round(self.solve_seconds, 6)}


@dataclass
class CheckResult:
    """
    Outcome of a check.

    Attributes:
        initial (str): State the outermost formula was decided at.
        formula (Formula): The checked formula.
        truth (Dict[Key, Verdict]): Verdict per (state, state subformula).
        witnesses (Dict[Key, Witness]): Witness of every true coalition entry.
        values (Dict[Key, Interval]): Best probability found per coalition entry.
        stats (CheckStats): Enumeration counts and solver time.
    """
    initial: str
    formula: Formula
    truth: Dict[Key, Verdict] = field(default_factory=dict)
    witnesses: Dict[Key, Witness] = field(default_factory=dict)
    values: Dict[Key, Interval] = field(default_factory=dict)
    stats: CheckStats = field(default_factory=CheckStats)

    @property
    def verdict(self) -> Verdict:
        return self.truth[(self.initial, self.formula)]


# --- BODY ROUTING ---

@dataclass(frozen=True)
class _Route:
    """How a coalition body is solved: kind plus the state formulas it needs."""
    kind: str
    first: Optional[Formula] = None
    second: Optional[Formula] = None
    ltl: Optional[Formula] = None
    predicates: Tuple[Tuple[str, Formula], ...] = ()


def _abstract(body: Formula) -> Tuple[Formula, Tuple[Tuple[str, Formula], ...]]:
    """Replace maximal state subformulas of a path formula by fresh atoms."""
    names: Dict[Formula, str] = {}

    def visit(node: Formula) -> Formula:
        if isinstance(node, Top):
            return node
        if is_state_formula(node):
            if node not in names:
                names[node] = f"_p{len(names)}"
            return Atom(names[node])
        if isinstance(node, Not):
            return Not(visit(node.arg))
        if isinstance(node, Next):
            return Next(visit(node.arg))
        if isinstance(node, Or):
            return Or(visit(node.left), visit(node.right))
        if isinstance(node, And):
            return And(visit(node.left), visit(node.right))
        if isinstance(node, Until):
            return Until(visit(node.left), visit(node.right))
        raise FormulaError(f"unexpected path formula node {to_text(node)}", node.span)

    abstracted = visit(body)
    return abstracted, tuple((name, formula) for formula, name in names.items())


def route_body(body: Formula) -> _Route:
    if isinstance(body, Next) and is_state_formula(body.arg):
        return _Route("next", body.arg)
    if isinstance(body, Until) and is_state_formula(body.left) and is_state_formula(body.right):
        return _Route("until", body.left, body.right)
    if isinstance(body, Not):
        inner = body.arg
        if isinstance(inner, Next) and is_state_formula(inner.arg):
            return _Route("next", Not(inner.arg))
        if isinstance(inner, Until) and is_state_formula(inner.left) and is_state_formula(inner.right):
            return _Route("not-until", inner.left, inner.right)
    ltl, predicates = _abstract(body)
    return _Route("omega", ltl=ltl, predicates=predicates)


# --- CHECKER ---

class ModelChecker:
    """
    Decision procedure over one model and configuration.

    The truth table is filled lazily per (state, subformula); each coalition
    entry records the best value found and, when true, its witness profile.
    """

    def __init__(self, cgs: Cgs, cfg: Optional[CheckConfig] = None, vocabulary: Optional[Vocabulary] = None):
        self.cgs = cgs
        self.cfg = cfg or CheckConfig()
        self.vocabulary = vocabulary if vocabulary is not None else vocabulary_for(self.cfg.vocab, cgs)
        self._automata: Dict[Formula, Dra] = {}
        self._enumerated: Dict[Tuple[str, int], List[NatStrategy]] = {}

    # --- state formulas ---

    def _validate(self, s0: str, f: Formula) -> None:
        if s0 not in self.cgs.states:
            raise FormulaError(f"unknown initial state {s0!r}", s0)
        if not is_state_formula(f):
            raise FormulaError("the checked formula must be a state formula (wrap paths in a coalition)", f.span)
        check_atoms(f, self.cgs.props)
        for g in subformulas(f):
            if isinstance(g, Coalition):
                for agent in g.agents:
                    if agent not in self.cgs.agents:
                        raise UnknownAgent(f"unknown agent {agent!r} in coalition", g.span)

    def check(self, s0: str, f: Formula) -> CheckResult:
        self._validate(s0, f)
        result = CheckResult(s0, f)
        states = reachable_states(self.cgs, s0)
        started = time.perf_counter()
        for g in subformulas(f):
            if not is_state_formula(g):
                continue
            targets = (s0,) if g == f else states
            for state in targets:
                result.truth[(state, g)] = self._decide(state, g, result, states)
        logger.info(f"{to_text(f)} at {s0}: {result.verdict.value} "
                    f"({result.stats.candidates} candidates, {time.perf_counter() - started:.3f}s)")
        return result

    def _decide(self, state: str, g: Formula, result: CheckResult, states: Sequence[str]) -> Verdict:
        truth = result.truth
        if isinstance(g, Top):
            return Verdict.TRUE
        if isinstance(g, Atom):
            return Verdict.of(g.name in self.cgs.labels(state))
        if isinstance(g, Not):
            return truth[(state, g.arg)].negate()
        if isinstance(g, Or):
            return truth[(state, g.left)].either(truth[(state, g.right)])
        if isinstance(g, And):
            return truth[(state, g.left)].both(truth[(state, g.right)])
        if isinstance(g, Coalition):
            return self._coalition(state, g, result)
        raise FormulaError(f"not a state formula: {to_text(g)}", g.span)

    # --- coalition operators ---

    def _strategies(self, agent: str, k: int) -> List[NatStrategy]:
        key = (agent, k)
        if key not in self._enumerated:
            self._enumerated[key] = list(enumerate_det(agent, k, self.cfg.setting, self.vocabulary, self.cgs))
            logger.debug(f"{len(self._enumerated[key])} candidate strategies for {agent} at k={k}")
        return self._enumerated[key]

    def candidate_profiles(self, coalition: Sequence[str], k: int) -> Iterator[Profile]:
        """Coalition profiles by ascending total complexity, then by text."""
        members = sorted(coalition, key=self.cgs.agent_index)
        if not members:
            yield {}
            return
        grouped: List[Dict[int, List[NatStrategy]]] = []
        for agent in members:
            by_cost: Dict[int, List[NatStrategy]] = {}
            for strategy in self._strategies(agent, k):
                by_cost.setdefault(complexity(strategy), []).append(strategy)
            grouped.append(by_cost)
        costs = [sorted(group) for group in grouped]
        totals = sorted({sum(combo) for combo in cartesian(*costs)})
        for total in totals:
            batch = []
            for combo in cartesian(*costs):
                if sum(combo) != total:
                    continue
                for chosen in cartesian(*(grouped[i][cost] for i, cost in enumerate(combo))):
                    batch.append((tuple(format_pairs(s) for s in chosen), dict(zip(members, chosen))))
            batch.sort(key=lambda item: item[0])
            for _, profile in batch:
                yield profile

    def _coalition(self, state: str, g: Coalition, result: CheckResult) -> Verdict:
        route = route_body(g.body)
        optimize = Optimize.MIN if g.cmp.is_lower_bound else Optimize.MAX
        key = (state, g)
        best: Optional[Interval] = None
        unknown = False
        chunk = max(1, self.cfg.jobs) * 4
        profiles = self.candidate_profiles(g.agents, g.bound)
        with ThreadPoolExecutor(max_workers=self.cfg.jobs) as pool:
            while True:
                batch = [profile for _, profile in zip(range(chunk), profiles)]
                if not batch:
                    break
                outcomes = list(pool.map(lambda p: self._evaluate(state, g, route, optimize, p, result), batch))
                for profile, (verdict, value, stats) in zip(batch, outcomes):
                    self._merge(result.stats, stats)
                    if value is not None and (best is None or _improves(optimize, value, best)):
                        best = value
                    if verdict is Verdict.TRUE:
                        result.witnesses[key] = Witness(state, g, profile, value)
                        result.values[key] = value
                        logger.debug(f"{to_text(g)} at {state}: witness found with value {value.lower}")
                        return Verdict.TRUE
                    if verdict is Verdict.UNKNOWN:
                        unknown = True
        if best is not None:
            result.values[key] = best
        return Verdict.UNKNOWN if unknown else Verdict.FALSE

    @staticmethod
    def _merge(total: CheckStats, part: CheckStats) -> None:
        total.candidates += part.candidates
        total.products += part.products
        total.largest_product = max(total.largest_product, part.largest_product)
        total.automaton_states = max(total.automaton_states, part.automaton_states)
        total.solve_seconds += part.solve_seconds

    def _evaluate(self, state: str, g: Coalition, route: _Route, optimize: Optimize, profile: Profile,
                  result: CheckResult) -> Tuple[Verdict, Optional[Interval], CheckStats]:
        """Opponent-optimal value of one candidate profile and its verdict."""
        stats = CheckStats(candidates=1)
        mode = SolveMode(optimize, self.cfg.tolerance)
        if self.cfg.opponent_bound is None:
            structures = [fix_coalition(self.cgs, g.agents, profile, state, self.cfg.max_product_states)]
        else:
            structures = [chain.as_mdp() for chain in self._opponent_chains(state, g.agents, profile)]
        values: List[Interval] = []
        undecided = False
        for mdp in structures:
            stats.products += 1
            stats.largest_product = max(stats.largest_product, mdp.size)
            started = time.perf_counter()
            value, clean = self.solve_body(mdp, route, mode, result, stats)
            stats.solve_seconds += time.perf_counter() - started
            undecided = undecided or not clean
            values.append(value)
        pick = min if optimize is Optimize.MIN else max
        worst = Interval(pick(v.lower for v in values), pick(v.upper for v in values))
        verdict = compare(worst, g.cmp, g.threshold)
        if undecided and verdict is Verdict.TRUE:
            verdict = Verdict.UNKNOWN
        return verdict, worst, stats

    def _opponent_chains(self, state: str, coalition: Sequence[str], profile: Profile):
        opponents = [agent for agent in self.cgs.agents if agent not in coalition]
        bound = self.cfg.opponent_bound
        choices = [self._strategies(agent, bound) for agent in opponents]
        for combo in cartesian(*choices):
            full = dict(profile)
            full.update(zip(opponents, combo))
            yield fix_all(self.cgs, full, state, self.cfg.max_product_states)

    def solve_body(self, mdp: Mdp, route: _Route, mode: SolveMode, result: CheckResult,
                   stats: Optional[CheckStats] = None) -> Tuple[Interval, bool]:
        """
        Optimal probability of a routed body on a product.

        Returns the value and whether every inner predicate on the product was
        decided; an undecided predicate makes a true comparison unknown.
        """
        truth = result.truth
        clean = True

        def states_where(formula: Formula) -> FrozenSet[int]:
            nonlocal clean
            chosen = set()
            for i in range(mdp.size):
                verdict = truth[(mdp.cgs_state(i), formula)]
                if verdict is Verdict.UNKNOWN:
                    clean = False
                if verdict is Verdict.TRUE:
                    chosen.add(i)
            return frozenset(chosen)

        if route.kind == "next":
            value = mdp_next(mdp, self._next_target(route.first, states_where, mdp), 0, mode)
        elif route.kind == "until":
            value = mdp_until(mdp, UntilObjective(states_where(route.first), states_where(route.second)), 0, mode)
        elif route.kind == "not-until":
            objective = UntilObjective(states_where(route.first), states_where(route.second))
            value = mdp_until(mdp, objective, 0, mode.with_optimize(mode.optimize.dual)).complement()
        else:
            dra = self._automaton(route.ltl)
            if stats is not None:
                stats.automaton_states = max(stats.automaton_states, dra.size)
            sets = {name: states_where(formula) for name, formula in route.predicates}

            def letter_of(i: int) -> FrozenSet[str]:
                return frozenset(name for name, members in sets.items() if i in members)
            value = mdp_omega(mdp, dra, letter_of, 0, mode, self.cfg.max_product_states)
        return value, clean

    @staticmethod
    def _next_target(formula: Formula, states_where, mdp: Mdp) -> FrozenSet[int]:
        if isinstance(formula, Not):
            positive = states_where(formula.arg)
            return frozenset(range(mdp.size)) - positive
        return states_where(formula)

    def _automaton(self, ltl: Formula) -> Dra:
        if ltl not in self._automata:
            self._automata[ltl] = ltl_to_dra(ltl, self.cfg.max_product_states)
        return self._automata[ltl]

    # --- verification ---

    def verify_profile(self, s0: str, g: Coalition, profile: Mapping[str, NatStrategy]) -> Tuple[Verdict, Interval]:
        """
        Decide ⟨⟨C⟩⟩ for one given (possibly behavioral) coalition profile.

        Inner state subformulas are decided on the states reachable from ``s0``
        first; the profile is validated against the model.
        """
        for strategy in profile.values():
            validate_strategy(strategy, self.cgs, self.cfg.strict_support)
        inner = self.decide_inner(s0, g.body)
        route = route_body(g.body)
        optimize = Optimize.MIN if g.cmp.is_lower_bound else Optimize.MAX
        verdict, value, _ = self._evaluate(s0, g, route, optimize, dict(profile), inner)
        return verdict, value

    def decide_inner(self, s0: str, body: Formula) -> CheckResult:
        """Decide every state subformula of a path formula on the states reachable from ``s0``."""
        check_atoms(body, self.cgs.props)
        inner = CheckResult(s0, body)
        states = reachable_states(self.cgs, s0)
        for h in subformulas(body):
            if is_state_formula(h):
                for state in states:
                    inner.truth[(state, h)] = self._decide(state, h, inner, states)
        return inner

    # --- positive fragment ---

    def guess_and_verify(self, s0: str, f: Formula) -> CheckResult:
        """
        Decide a negation-free formula top-down.

        Only the entries the verdict at ``s0`` depends on are decided: a
        disjunction stops at its first true side, a conjunction at its first
        false side. A coalition entry is settled by the first candidate profile
        that verifies, and the witnesses collected on the way form a
        certificate that is checked again against the final truth table.
        """
        self._validate(s0, f)
        result = CheckResult(s0, f)
        started = time.perf_counter()
        self._settle(s0, f, result)
        self._verify_certificate(result)
        logger.info(f"{to_text(f)} at {s0} (guess and verify): {result.verdict.value} "
                    f"({len(result.witnesses)} witnesses, {time.perf_counter() - started:.3f}s)")
        return result

    def _settle(self, state: str, g: Formula, result: CheckResult) -> Verdict:
        key = (state, g)
        if key in result.truth:
            return result.truth[key]
        if isinstance(g, Not):
            raise NotPositiveFragment(f"negation in {to_text(g)}", g.span)
        if isinstance(g, Or):
            verdict = self._settle(state, g.left, result)
            if verdict is not Verdict.TRUE:
                verdict = verdict.either(self._settle(state, g.right, result))
        elif isinstance(g, And):
            verdict = self._settle(state, g.left, result)
            if verdict is not Verdict.FALSE:
                verdict = verdict.both(self._settle(state, g.right, result))
        elif isinstance(g, Coalition):
            for formula in _route_predicates(route_body(g.body)):
                for other in reachable_states(self.cgs, state):
                    self._settle(other, formula, result)
            verdict = self._coalition(state, g, result)
        else:
            verdict = self._decide(state, g, result, ())
        result.truth[key] = verdict
        return verdict

    def _verify_certificate(self, result: CheckResult) -> None:
        for (state, g), witness in result.witnesses.items():
            optimize = Optimize.MIN if g.cmp.is_lower_bound else Optimize.MAX
            verdict, value, _ = self._evaluate(state, g, route_body(g.body), optimize, witness.profile, result)
            if verdict is not Verdict.TRUE:
                logger.error(f"witness for {to_text(g)} at {state} does not verify (value {value.lower})")
                raise SolverError(f"witness for {to_text(g)} at {state} failed verification", state)


def _route_predicates(route: _Route) -> List[Formula]:
    """State formulas a routed body reads on the product."""
    found = [formula for formula in (route.first, route.second) if formula is not None]
    return found + [formula for _, formula in route.predicates]


def _improves(optimize: Optimize, candidate: Interval, current: Interval) -> bool:
    """Better for the coalition: higher under MIN adversaries, lower under MAX."""
    if optimize is Optimize.MIN:
        return candidate.lower > current.lower
    return candidate.upper < current.upper


def check(cgs: Cgs, s0: str, f: Formula, cfg: Optional[CheckConfig] = None,
          vocabulary: Optional[Vocabulary] = None) -> CheckResult:
    return ModelChecker(cgs, cfg, vocabulary).check(s0, f)


def check_positive_np_path(cgs: Cgs, s0: str, f: Formula, cfg: Optional[CheckConfig] = None,
                           vocabulary: Optional[Vocabulary] = None) -> CheckResult:
    """
    Check a negation-free formula by guessing and verifying coalition witnesses.

    Without negation a coalition operator is only ever needed true, so one
    verified profile per operator and state settles it. The entries are
    decided on demand from the top and the collected witnesses are verified
    once more before the result is returned.

    Raises:
        NotPositiveFragment: The formula contains a negation.
    """
    if not classify(f).positive:
        raise NotPositiveFragment("formula contains negation; the witness-guessing procedure needs the positive fragment")
    return ModelChecker(cgs, cfg, vocabulary).guess_and_verify(s0, f)


def verify_witness(cgs: Cgs, result: CheckResult, key: Key, cfg: Optional[CheckConfig] = None,
                   vocabulary: Optional[Vocabulary] = None) -> Tuple[Verdict, Interval]:
    """Re-solve a reported witness with its profile fixed."""
    witness = result.witnesses[key]
    checker = ModelChecker(cgs, cfg, vocabulary)
    return checker.verify_profile(witness.state, witness.formula, witness.profile)
