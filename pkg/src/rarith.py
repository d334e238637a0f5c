"""
Real-arithmetic encoding of coalition operators with behavioral strategies

For a coalition operator whose body is X, U or a negated X/U, the encoder
emits one existential constraint system per strategy skeleton (guards and
action supports from the bounded enumeration). Action weights become real
variables, one per (agent, pair, action, product state), tied together
wherever the same pair fires; value variables bound the opponents' optimum
through the Bellman inequalities. The disjunction over skeletons is written
as an SMT-LIB2 script for nonlinear real arithmetic; solving is left to an
external tool.
"""

import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from io import StringIO
from itertools import product as cartesian
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from pysmt.fnode import FNode
from pysmt.logics import QF_NRA
from pysmt.shortcuts import FALSE, GE, GT, LE, LT, And, Equals, Or, Plus, Real, Symbol, Times
from pysmt.smtlib.script import smtlibscript_from_formula
from pysmt.typing import REAL

from cgs import Cgs
from checker import ModelChecker, route_body, vocabulary_for
from errors import BodyNotNatPatl, NatpatlError, UnknownVerdict
from logic import CmpOp, Coalition, Formula, Not, to_text
from models import CheckConfig, Verdict
from natstrat import NatStrategy, StrategySkeleton, Vocabulary, enumerate_skeletons
from probsolve import Optimize, SolveMode, UntilObjective, prob0_min, solve_until
from product import Mdp, ProfileTracker, fix_coalition

logger = logging.getLogger(__name__)

_MIRROR = {CmpOp.GE: CmpOp.LE, CmpOp.GT: CmpOp.LT, CmpOp.LE: CmpOp.GE, CmpOp.LT: CmpOp.GT}
_RELATIONS = {CmpOp.GE: GE, CmpOp.GT: GT, CmpOp.LE: LE, CmpOp.LT: LT}


def _sum(terms: Sequence[FNode]) -> FNode:
    return Plus(terms) if terms else Real(0)


def _compare(op: CmpOp, left: FNode, right: FNode) -> FNode:
    return _RELATIONS[op](left, right)


@dataclass(frozen=True)
class VariableInfo:
    """Meaning of one emitted variable."""
    kind: str
    profile: int
    product_state: int
    state: str
    agent: Optional[str] = None
    pair: Optional[int] = None
    action: Optional[str] = None

    def as_dict(self) -> Dict[str, Any]:
        return {key: value for key, value in self.__dict__.items() if value is not None}


@dataclass
class _SkeletonEncoding:
    index: int
    skeletons: Dict[str, StrategySkeleton]
    mdp: Mdp
    tracker: ProfileTracker
    formula: FNode
    objective: Optional[UntilObjective] = None
    weights: Dict[Tuple[str, int, str, int], FNode] = field(default_factory=dict)
    values: Dict[int, FNode] = field(default_factory=dict)


@dataclass
class RealArithScript:
    """
    Existential real-arithmetic query for one coalition operator.

    Attributes:
        query (Coalition): The encoded operator.
        initial (str): State the operator is evaluated at.
        formula (FNode): Disjunction over skeleton profiles.
        variables (Dict[str, VariableInfo]): Every declared variable.
        encodings (List[_SkeletonEncoding]): Per-skeleton constraint systems.
        op (CmpOp): Comparison on the encoded value after mirroring negated bodies.
        threshold (Fraction): Threshold after mirroring negated bodies.
    """
    query: Coalition
    initial: str
    formula: FNode
    variables: Dict[str, VariableInfo]
    encodings: List[_SkeletonEncoding]
    op: CmpOp
    threshold: Fraction

    def to_smtlib(self) -> str:
        script = smtlibscript_from_formula(self.formula, logic=QF_NRA)
        buffer = StringIO()
        script.serialize(buffer, daggify=False)
        return f"; {to_text(self.query)} at {self.initial}\n" + buffer.getvalue()

    def metadata(self) -> Dict[str, Any]:
        return {
            "query": to_text(self.query),
            "initial": self.initial,
            "logic": "QF_NRA",
            "skeletons": [{agent: skeleton.describe() for agent, skeleton in encoding.skeletons.items()}
                          for encoding in self.encodings],
            "variables": {name: info.as_dict() for name, info in sorted(self.variables.items())},
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)

    def evaluate(self, assignment: Mapping[str, Fraction]) -> bool:
        """Substitute exact values and simplify; unassigned disjuncts may stay symbolic."""
        substitution = {Symbol(name, REAL): Real(Fraction(value)) for name, value in assignment.items()}
        return self.formula.substitute(substitution).simplify().is_true()

    def trivially_unsat(self) -> bool:
        """Threshold outside the reachable range [0, 1] of any probability."""
        d = self.threshold
        return ((self.op is CmpOp.GT and d >= 1) or (self.op is CmpOp.GE and d > 1)
                or (self.op is CmpOp.LT and d <= 0) or (self.op is CmpOp.LE and d < 0))

    def witness_assignment(self, profile: Mapping[str, NatStrategy]) -> Dict[str, Fraction]:
        """
        Values of the skeleton matching a deterministic or behavioral profile.

        Raises:
            NatpatlError: No emitted skeleton has the profile's guards and supports.
        """
        for encoding in self.encodings:
            if all(_matches(encoding.skeletons[agent], profile[agent]) for agent in encoding.skeletons):
                return _assignment(self, encoding, profile)
        raise NatpatlError("profile does not match any encoded skeleton", ",".join(sorted(profile)))

    def substitute_witness(self, profile: Mapping[str, NatStrategy]) -> bool:
        return self.evaluate(self.witness_assignment(profile))


def _matches(skeleton: StrategySkeleton, strategy: NatStrategy) -> bool:
    return (skeleton.setting is strategy.setting
            and skeleton.guards == tuple(pair.guard for pair in strategy.pairs)
            and [set(support) for support in skeleton.supports] == [set(pair.dist.support) for pair in strategy.pairs])


def _assignment(script: RealArithScript, encoding: _SkeletonEncoding,
                profile: Mapping[str, NatStrategy]) -> Dict[str, Fraction]:
    assignment: Dict[str, Fraction] = {}
    for (agent, pair, action, _), symbol in encoding.weights.items():
        assignment[symbol.symbol_name()] = profile[agent].pairs[pair].dist[action]
    if encoding.values:
        mdp = fix_coalition(encoding.tracker.cgs, tuple(profile), profile, script.initial)
        optimize = Optimize.MIN if script.op.is_lower_bound else Optimize.MAX
        solution = solve_until(mdp, encoding.objective, SolveMode(optimize))
        for i, symbol in encoding.values.items():
            assignment[symbol.symbol_name()] = solution.values[i].lower
    return assignment


# --- ENCODER ---

class _Encoder:
    def __init__(self, cgs: Cgs, s0: str, query: Coalition, cfg: CheckConfig, vocabulary: Vocabulary):
        self.cgs = cgs
        self.s0 = s0
        self.query = query
        self.cfg = cfg
        self.vocabulary = vocabulary
        self.variables: Dict[str, VariableInfo] = {}
        self.checker = ModelChecker(cgs, cfg.model_copy(update={"solve": "exact"}), vocabulary)

    def run(self, k: int) -> RealArithScript:
        route = route_body(self.query.body)
        if route.kind == "omega":
            raise BodyNotNatPatl(f"body {to_text(self.query.body)} is not X or U over state formulas",
                                 self.query.span)
        inner = self.checker.decide_inner(self.s0, self.query.body)
        if any(verdict is Verdict.UNKNOWN for verdict in inner.truth.values()):
            raise UnknownVerdict("an inner predicate could not be decided")
        op, threshold = self.query.cmp, self.query.threshold
        negated = route.kind == "not-until"
        if negated:
            op, threshold = _MIRROR[op], 1 - threshold
        optimize = Optimize.MIN if op.is_lower_bound else Optimize.MAX

        members = sorted(self.query.agents, key=self.cgs.agent_index)
        choices = [list(enumerate_skeletons(agent, k, self.cfg.setting, self.vocabulary, self.cgs))
                   for agent in members]
        encodings = []
        for index, combo in enumerate(cartesian(*choices)):
            skeletons = dict(zip(members, combo))
            encodings.append(self._encode_profile(index, skeletons, route, inner, op, threshold, optimize))
        logger.info(f"Encoded {to_text(self.query)} with {len(encodings)} skeleton profiles, "
                    f"{len(self.variables)} variables")
        formula = Or([encoding.formula for encoding in encodings]) if encodings else FALSE()
        return RealArithScript(self.query, self.s0, formula, self.variables, encodings, op, threshold)

    def _declare(self, name: str, info: VariableInfo) -> FNode:
        self.variables[name] = info
        return Symbol(name, REAL)

    def _encode_profile(self, index: int, skeletons: Dict[str, StrategySkeleton], route, inner,
                        op: CmpOp, threshold: Fraction, optimize: Optimize) -> _SkeletonEncoding:
        profile = {agent: skeleton.uniform() for agent, skeleton in skeletons.items()}
        mdp = fix_coalition(self.cgs, tuple(skeletons), profile, self.s0, self.cfg.max_product_states)
        tracker = ProfileTracker(self.cgs, profile)
        encoding = _SkeletonEncoding(index, skeletons, mdp, tracker, Real(0))
        constraints: List[FNode] = []
        prefix = f"p{index}_"

        # weights: one variable per (agent, pair, action, product state), equal wherever the pair fires
        fired: Dict[int, Tuple[int, ...]] = {}
        first_use: Dict[Tuple[str, int, str], FNode] = {}
        for i, (state, memory) in enumerate(mdp.states):
            labels = self.cgs.labels(state)
            picks = []
            for agent, strategy, part in zip(tracker.agents, tracker.strategies, memory):
                pair = strategy.select(part, labels, self.cgs.legal(state, agent))
                picks.append(pair)
                support = strategy.pairs[pair].dist.support
                symbols = []
                for action in support:
                    name = f"{prefix}r_{agent}_{pair + 1}_{action}_{i}"
                    symbol = self._declare(name, VariableInfo("weight", index, i, state, agent, pair + 1, action))
                    encoding.weights[(agent, pair, action, i)] = symbol
                    symbols.append(symbol)
                    constraints.append(GT(symbol, Real(0)))
                    shared = first_use.setdefault((agent, pair, action), symbol)
                    if shared is not symbol:
                        constraints.append(Equals(symbol, shared))
                constraints.append(Equals(_sum(symbols), Real(1)))
            fired[i] = tuple(picks)

        def expectation(i: int, choice: int, value_of) -> FNode:
            state, memory = mdp.states[i]
            label, _ = mdp.choices[i][choice]
            free = dict(zip(mdp.agents, label))
            terms = []
            supports = [[(action, encoding.weights[(agent, fired[i][n], action, i)])
                         for action in strategy.pairs[fired[i][n]].dist.support]
                        for n, (agent, strategy) in enumerate(zip(tracker.agents, tracker.strategies))]
            index_of = {s: n for n, s in enumerate(mdp.states)}
            for combo in cartesian(*supports):
                fixed = {agent: action for agent, (action, _) in zip(tracker.agents, combo)}
                joint = tuple(fixed.get(agent, free.get(agent)) for agent in self.cgs.agents)
                weight = [symbol for _, symbol in combo]
                for target, p in self.cgs.successors(state, joint).items():
                    successor = index_of[(target, tracker.advance(memory, target))]
                    term = value_of(successor)
                    if term is None:
                        continue
                    factors = weight + [Real(p)] + ([] if term is True else [term])
                    terms.append(Times(factors) if len(factors) > 1 else factors[0])
            return _sum(terms)

        truth = inner.truth
        if route.kind == "next":
            target = _states_where(mdp, truth, route.first)

            def in_target(j: int):
                return True if j in target else None
            for choice in range(len(mdp.choices[0])):
                constraints.append(_compare(op, expectation(0, choice, in_target), Real(threshold)))
        else:
            safe = _states_where(mdp, truth, route.first)
            goal = _states_where(mdp, truth, route.second)
            encoding.objective = UntilObjective(safe, goal)
            zero = prob0_min(mdp, encoding.objective) if optimize is Optimize.MIN else frozenset()
            for i, (state, _) in enumerate(mdp.states):
                encoding.values[i] = self._declare(f"{prefix}v_{i}", VariableInfo("value", index, i, state))

            def value_of(j: int):
                return encoding.values[j]
            for i, symbol in encoding.values.items():
                constraints.append(GE(symbol, Real(0)))
                constraints.append(LE(symbol, Real(1)))
                if i in goal:
                    constraints.append(Equals(symbol, Real(1)))
                elif i not in safe or i in zero:
                    constraints.append(Equals(symbol, Real(0)))
                else:
                    for choice in range(len(mdp.choices[i])):
                        bound = expectation(i, choice, value_of)
                        constraints.append(LE(symbol, bound) if optimize is Optimize.MIN else GE(symbol, bound))
            constraints.append(_compare(op, encoding.values[0], Real(threshold)))
        encoding.formula = And(constraints)
        return encoding


def _states_where(mdp: Mdp, truth, formula: Formula) -> frozenset:
    if isinstance(formula, Not):
        return frozenset(range(mdp.size)) - _states_where(mdp, truth, formula.arg)
    return frozenset(i for i in range(mdp.size) if truth[(mdp.cgs_state(i), formula)] is Verdict.TRUE)


def encode(cgs: Cgs, s0: str, query: Coalition, cfg: Optional[CheckConfig] = None,
           vocabulary: Optional[Vocabulary] = None, k: Optional[int] = None) -> RealArithScript:
    """
    Emit the real-arithmetic query for ``query`` at ``s0``.

    Raises:
        BodyNotNatPatl: The body is not X or U (possibly negated) over state formulas.
        VocabularyEmpty: The guard vocabulary is empty.
    """
    cfg = cfg or CheckConfig()
    if vocabulary is None:
        vocabulary = vocabulary_for(cfg.vocab, cgs)
    return _Encoder(cgs, s0, query, cfg, vocabulary).run(query.bound if k is None else k)


def run_external(script: RealArithScript, command: str, path: str) -> str:
    """Write the script to ``path`` and return the first output line of ``command path``."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(script.to_smtlib())
    argv = shlex.split(command) + [path]
    logger.info(f"Running external solver: {' '.join(argv)}")
    try:
        completed = subprocess.run(argv, capture_output=True, text=True, check=False)
    except OSError as e:
        logger.error(f"External solver failed to start: {e}")
        raise NatpatlError(f"cannot run external solver {argv[0]!r}: {e}", command) from e
    answer = completed.stdout.strip().splitlines()
    return answer[0] if answer else completed.stderr.strip()
