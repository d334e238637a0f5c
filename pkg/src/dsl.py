"""
Model DSL front end

Grammar (free-form, whitespace insensitive, ``#`` starts a comment)::

    agents  a b            # declaration order fixes joint-action layout
    props   p q
    actions go stay
    param   fail = 1/10
    states  s0 {} s1 {p, q}
    legal   s0 a { go, stay }
    trans   s0 (go, stay) -> { s1: 1 - fail, s0: fail }
    init    s0

Probabilities are rational expressions over integers, ``/``, ``+``, ``-``,
``*``, parentheses and previously declared parameters. Decimal literals are
not part of the grammar.
"""

import logging
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Union

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from cgs import Cgs, RawLegal, RawModel, RawState, RawTransition, validate_cgs
from errors import DanglingStateReference, ModelSyntaxError, NatpatlError

logger = logging.getLogger(__name__)

MODEL_GRAMMAR = r"""
    start: _item*

    _item: agents | props | actions | param | states | legal | trans | init

    agents: "agents" _names
    props: "props" _names?
    actions: "actions" _names
    param: "param" NAME "=" expr
    states: "states" state_decl (","? state_decl)*
    state_decl: NAME label_set?
    label_set: "{" [NAME ("," NAME)*] "}"
    legal: "legal" NAME NAME "{" NAME ("," NAME)* "}"
    trans: "trans" NAME "(" NAME ("," NAME)* ")" "->" "{" branch ("," branch)* ","? "}"
    branch: NAME ":" expr
    init: "init" NAME

    _names: NAME (","? NAME)*

    ?expr: term
         | expr "+" term   -> add
         | expr "-" term   -> sub
    ?term: factor
         | term "*" factor -> mul
         | term "/" factor -> div
    ?factor: INT           -> number
           | NAME          -> ref
           | "(" expr ")"

    NAME: /[A-Za-z_][A-Za-z0-9_]*/
    COMMENT: /#[^\n]*/

    %import common.INT
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_parser = Lark(MODEL_GRAMMAR, parser="lalr", propagate_positions=True)

Expr = Callable[[Dict[str, Fraction]], Fraction]


class _ModelBuilder(Transformer):
    """Turns the parse tree into statement records; expressions stay lazy."""

    def number(self, children):
        value = Fraction(int(children[0]))
        return lambda env: value

    def ref(self, children):
        name = str(children[0])

        def lookup(env):
            if name not in env:
                raise DanglingStateReference("parameter", name, "probability expression")
            return env[name]
        return lookup

    def add(self, children):
        left, right = children
        return lambda env: left(env) + right(env)

    def sub(self, children):
        left, right = children
        return lambda env: left(env) - right(env)

    def mul(self, children):
        left, right = children
        return lambda env: left(env) * right(env)

    def div(self, children):
        left, right = children

        def divide(env):
            denominator = right(env)
            if denominator == 0:
                raise ModelSyntaxError("division by zero in probability expression")
            return left(env) / denominator
        return divide

    def _names_of(self, children):
        return [str(child) for child in children if isinstance(child, Token)]

    def agents(self, children):
        return ("agents", self._names_of(children))

    def props(self, children):
        return ("props", self._names_of(children))

    def actions(self, children):
        return ("actions", self._names_of(children))

    def param(self, children):
        return ("param", str(children[0]), children[1])

    def label_set(self, children):
        return [str(child) for child in children if child is not None]

    @v_args(meta=True)
    def state_decl(self, meta, children):
        labels = children[1] if len(children) > 1 else []
        return RawState(name=str(children[0]), labels=labels, line=meta.line)

    def states(self, children):
        return ("states", list(children))

    @v_args(meta=True)
    def legal(self, meta, children):
        names = [str(child) for child in children]
        return ("legal", RawLegal(state=names[0], agent=names[1], actions=names[2:], line=meta.line))

    def branch(self, children):
        return (str(children[0]), children[1])

    @v_args(meta=True)
    def trans(self, meta, children):
        state = str(children[0])
        profile = [str(child) for child in children[1:] if isinstance(child, Token)]
        branches = [child for child in children[1:] if isinstance(child, tuple)]
        return ("trans", state, profile, branches, meta.line)

    def init(self, children):
        return ("init", str(children[0]))

    def start(self, children):
        return list(children)


def parse_model(text: str) -> RawModel:
    """Parse model DSL text into a RawModel (no semantic validation)."""
    try:
        tree = _parser.parse(text)
        statements = _ModelBuilder().transform(tree)
    except UnexpectedInput as e:
        raise ModelSyntaxError(f"unexpected input in model: {e.get_context(text).strip()}",
                               f"line {e.line}, column {e.column}") from e
    except VisitError as e:
        if isinstance(e.orig_exc, NatpatlError):
            raise e.orig_exc from e
        raise

    raw = RawModel()
    params: Dict[str, Fraction] = {}
    for statement in statements:
        kind = statement[0]
        if kind in ("agents", "props", "actions"):
            getattr(raw, kind).extend(statement[1])
        elif kind == "param":
            _, name, expr = statement
            if name in params:
                raise ModelSyntaxError(f"parameter {name!r} declared twice", name)
            params[name] = expr(params)
        elif kind == "states":
            raw.states.extend(statement[1])
        elif kind == "legal":
            raw.legal.append(statement[1])
        elif kind == "trans":
            _, state, profile, branches, line = statement
            outcomes = [(target, expr(params)) for target, expr in branches]
            raw.transitions.append(RawTransition(state=state, profile=profile, outcomes=outcomes, line=line))
        elif kind == "init":
            if raw.init is not None:
                raise ModelSyntaxError("init declared twice", "init")
            raw.init = statement[1]
    return raw


def load_model(source: Union[str, Path]) -> Cgs:
    """Read, parse and validate a model file."""
    path = Path(source)
    logger.info(f"Loading model {path}")
    return validate_cgs(parse_model(path.read_text(encoding="utf-8")))
