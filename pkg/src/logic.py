"""
NatPATL / NatPATL* syntax

Formulas are immutable dataclass trees. Source spans ride along for error
reporting but never take part in equality or hashing, so a parsed formula
equals the same formula built by hand.

Concrete grammar, loosest binding first::

    formula := disj ["U" formula]            (right associative)
    disj    := disj "|" conj | conj
    conj    := conj "&" unary | unary
    unary   := "!" unary | "X" unary | "F" unary | "G" unary
             | "<<" [agent {"," agent}] ">>" "[" cmp d "," "k" "=" N "]" unary
             | "T" | "⊤" | atom | "(" formula ")"

``F φ`` is read as ``T U φ`` and ``G φ`` as ``!(T U !φ)``. Thresholds are
fractions (``9/10``) or decimals converted exactly (``0.9``).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from errors import (FormulaError, FormulaSyntaxError, NatpatlError, ThresholdOutOfRange,
                    UnknownAgent, UnknownAtom)
from utils import format_fraction, parse_fraction

logger = logging.getLogger(__name__)


class CmpOp(str, Enum):
    """Comparison ⋈ of a coalition operator."""
    LE = "<="
    LT = "<"
    GT = ">"
    GE = ">="

    def conjugate(self) -> "CmpOp":
        """Swap strictness only: ≤↔<, ≥↔>."""
        return {CmpOp.LE: CmpOp.LT, CmpOp.LT: CmpOp.LE,
                CmpOp.GT: CmpOp.GE, CmpOp.GE: CmpOp.GT}[self]

    def holds(self, value: Fraction, threshold: Fraction) -> bool:
        if self is CmpOp.LE:
            return value <= threshold
        if self is CmpOp.LT:
            return value < threshold
        if self is CmpOp.GT:
            return value > threshold
        return value >= threshold

    @property
    def is_lower_bound(self) -> bool:
        """True for ≥ and >, where the opponents try to minimize."""
        return self in (CmpOp.GE, CmpOp.GT)


# --- AST ---

@dataclass(frozen=True)
class Formula:
    span: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False, kw_only=True)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Coalition(Formula):
    agents: Tuple[str, ...]
    cmp: CmpOp
    threshold: Fraction
    bound: int
    body: Formula


BOOLEAN_NODES = (Top, Atom, Not, Or, And)
TEMPORAL_NODES = (Next, Until)


def eventually(arg: Formula) -> Until:
    return Until(Top(), arg)


def always(arg: Formula) -> Not:
    return Not(Until(Top(), Not(arg)))


def children(f: Formula) -> Tuple[Formula, ...]:
    if isinstance(f, (Not, Next)):
        return (f.arg,)
    if isinstance(f, (Or, And, Until)):
        return (f.left, f.right)
    if isinstance(f, Coalition):
        return (f.body,)
    return ()


def subformulas(f: Formula) -> List[Formula]:
    """Distinct subformulas in post-order (children before parents)."""
    order: List[Formula] = []
    seen = set()

    def visit(node: Formula) -> None:
        for child in children(node):
            visit(child)
        if node not in seen:
            seen.add(node)
            order.append(node)
    visit(f)
    return order


def atoms(f: Formula) -> FrozenSet[str]:
    return frozenset(node.name for node in subformulas(f) if isinstance(node, Atom))


def size(f: Formula) -> int:
    return 1 + sum(size(child) for child in children(f))


def is_boolean(f: Formula) -> bool:
    return isinstance(f, BOOLEAN_NODES) and all(is_boolean(child) for child in children(f))


def is_state_formula(f: Formula) -> bool:
    """No temporal operator outside the body of a coalition operator."""
    if isinstance(f, Coalition):
        return True
    if isinstance(f, TEMPORAL_NODES):
        return False
    return all(is_state_formula(child) for child in children(f))


# --- CLASSIFICATION ---

class Fragment(str, Enum):
    NATPATL = "NatPATL"
    NATPATL_STAR = "NatPATL*"


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"
    MIXED = "mixed"


@dataclass(frozen=True)
class Classification:
    """
    Result of classify().

    Attributes:
        fragment (Fragment): NatPATL when every temporal operator sits directly
            under a coalition operator and every coalition body is temporal.
        positive (bool): No negation anywhere (conjunction allowed).
        parity (Dict[Formula, Parity]): Number of enclosing negations per
            subformula, MIXED when equal subformulas occur under both parities.
    """
    fragment: Fragment
    positive: bool
    parity: Dict[Formula, Parity]


def classify(f: Formula) -> Classification:
    natpatl = True
    positive = True
    parity: Dict[Formula, Parity] = {}

    def visit(node: Formula, parent: Optional[Formula], negations: int) -> None:
        nonlocal natpatl, positive
        current = Parity.EVEN if negations % 2 == 0 else Parity.ODD
        previous = parity.get(node)
        parity[node] = current if previous in (None, current) else Parity.MIXED
        if isinstance(node, TEMPORAL_NODES) and not isinstance(parent, Coalition):
            natpatl = False
        if isinstance(node, Coalition) and not isinstance(node.body, TEMPORAL_NODES):
            natpatl = False
        if isinstance(node, Not):
            positive = False
            visit(node.arg, node, negations + 1)
            return
        for child in children(node):
            visit(child, node, negations)

    visit(f, None, 0)
    return Classification(Fragment.NATPATL if natpatl else Fragment.NATPATL_STAR, positive, parity)


# --- BOOLEAN EVALUATION ---

def holds_on_labels(g: Formula, labels: FrozenSet[str]) -> bool:
    """Evaluate a Boolean formula on a label set."""
    if isinstance(g, Top):
        return True
    if isinstance(g, Atom):
        return g.name in labels
    if isinstance(g, Not):
        return not holds_on_labels(g.arg, labels)
    if isinstance(g, Or):
        return holds_on_labels(g.left, labels) or holds_on_labels(g.right, labels)
    if isinstance(g, And):
        return holds_on_labels(g.left, labels) and holds_on_labels(g.right, labels)
    raise FormulaError(f"not a Boolean formula: {to_text(g)}", g.span)


def check_atoms(g: Formula, props: Sequence[str]) -> None:
    for name in sorted(atoms(g)):
        if name not in props:
            raise UnknownAtom(f"atom {name!r} is not a proposition of the model", name)


def eval_bool(g: Formula, state: str, cgs) -> bool:
    """s ⊨ g over the label set of ``state``."""
    check_atoms(g, cgs.props)
    return holds_on_labels(g, cgs.labels(state))


# --- PRINTING ---

def to_text(f: Formula) -> str:
    if isinstance(f, Top):
        return "T"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        inner = f.arg
        if isinstance(inner, Until) and isinstance(inner.left, Top) and isinstance(inner.right, Not):
            return f"G {to_text(inner.right.arg)}"
        return f"!{to_text(inner)}"
    if isinstance(f, Next):
        return f"X {to_text(f.arg)}"
    if isinstance(f, Until):
        if isinstance(f.left, Top):
            return f"F {to_text(f.right)}"
        return f"({to_text(f.left)} U {to_text(f.right)})"
    if isinstance(f, Or):
        return f"({to_text(f.left)} | {to_text(f.right)})"
    if isinstance(f, And):
        return f"({to_text(f.left)} & {to_text(f.right)})"
    if isinstance(f, Coalition):
        return (f"<<{','.join(f.agents)}>>[{f.cmp.value}{format_fraction(f.threshold)}, k={f.bound}] "
                f"{to_text(f.body)}")
    raise TypeError(f"unknown formula node {f!r}")


# --- PARSING ---

FORMULA_GRAMMAR = r"""
    ?start: formula

    ?formula: disj
            | disj "U" formula              -> until
    ?disj: conj
         | disj "|" conj                    -> or_
    ?conj: unary
         | conj "&" unary                   -> and_
    ?unary: primary
          | "!" unary                       -> not_
          | "X" unary                       -> next_
          | "F" unary                       -> eventually
          | "G" unary                       -> always
          | "<<" agent_list? ">>" "[" CMP THRESHOLD "," "k" "=" INT "]" unary -> coalition
    agent_list: NAME ("," NAME)*
    ?primary: TRUE                          -> top
            | TOPSYM                        -> top
            | NAME                          -> atom
            | "(" formula ")"

    TRUE: "T"
    TOPSYM: "⊤"
    CMP: "<=" | ">=" | "<" | ">"
    THRESHOLD: /\d+\s*\/\s*\d+|\d*\.\d+|\d+/
    INT: /\d+/
    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %import common.WS
    %ignore WS
"""

_parser = Lark(FORMULA_GRAMMAR, parser="lalr", propagate_positions=True)


def _span(meta) -> Optional[Tuple[int, int]]:
    if getattr(meta, "empty", True):
        return None
    return (meta.start_pos, meta.end_pos)


@v_args(meta=True)
class _FormulaBuilder(Transformer):

    def __init__(self, agents: Optional[Sequence[str]]):
        super().__init__()
        self.agents = None if agents is None else set(agents)

    def top(self, meta, children):
        return Top(span=_span(meta))

    def atom(self, meta, children):
        return Atom(str(children[0]), span=_span(meta))

    def not_(self, meta, children):
        return Not(children[0], span=_span(meta))

    def next_(self, meta, children):
        return Next(children[0], span=_span(meta))

    def eventually(self, meta, children):
        return Until(Top(), children[0], span=_span(meta))

    def always(self, meta, children):
        return Not(Until(Top(), Not(children[0])), span=_span(meta))

    def until(self, meta, children):
        return Until(children[0], children[1], span=_span(meta))

    def or_(self, meta, children):
        return Or(children[0], children[1], span=_span(meta))

    def and_(self, meta, children):
        return And(children[0], children[1], span=_span(meta))

    def agent_list(self, meta, children):
        return tuple(str(child) for child in children)

    def coalition(self, meta, children):
        body = children[-1]
        bound_token = children[-2]
        threshold_token = children[-3]
        cmp_token = children[-4]
        agents = children[0] if len(children) == 5 else ()
        span = _span(meta)
        if len(set(agents)) != len(agents):
            raise FormulaError(f"agent listed twice in coalition {agents}", span)
        if self.agents is not None:
            for agent in agents:
                if agent not in self.agents:
                    raise UnknownAgent(f"unknown agent {agent!r} in coalition", span)
        try:
            threshold = parse_fraction(str(threshold_token))
        except ValueError as e:
            raise FormulaSyntaxError(str(e), threshold_token.start_pos) from e
        if threshold > 1:
            raise ThresholdOutOfRange(f"threshold {threshold_token} is outside [0, 1]", span)
        bound = int(bound_token)
        if bound < 1:
            raise FormulaError("complexity bound k must be at least 1", span)
        return Coalition(agents, CmpOp(str(cmp_token)), threshold, bound, body, span=span)


def parse_formula(text: str, agents: Optional[Sequence[str]] = None) -> Formula:
    """
    Parse concrete syntax into a Formula.

    Args:
        text: Formula text.
        agents: When given, coalition members must be among these agents.

    Raises:
        FormulaSyntaxError: With the character offset of the first bad token.
        UnknownAgent: Coalition names an agent outside ``agents``.
        ThresholdOutOfRange: Threshold greater than 1.
    """
    try:
        tree = _parser.parse(text)
        return _FormulaBuilder(agents).transform(tree)
    except UnexpectedInput as e:
        position = getattr(e, "pos_in_stream", None)
        raise FormulaSyntaxError(f"cannot parse formula {text!r}", position) from e
    except VisitError as e:
        if isinstance(e.orig_exc, NatpatlError):
            raise e.orig_exc from e
        raise
