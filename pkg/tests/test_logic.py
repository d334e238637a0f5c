"""
Tests for the formula language: parsing, printing, classification, Boolean evaluation
"""

from fractions import Fraction

import pytest

from errors import FormulaSyntaxError, ThresholdOutOfRange, UnknownAgent, UnknownAtom
from logic import And, Atom, CmpOp, Coalition, Fragment, Next, Not, Or, Parity, Top, Until, always, atoms, \
    classify, eval_bool, eventually, holds_on_labels, is_boolean, is_state_formula, parse_formula, size, \
    subformulas, to_text


def test_parse_coalition():
    """Coalition operator with threshold, comparison and bound"""
    f = parse_formula("<<a,b>>[>=1/2, k=3] F goal", ["a", "b"])
    assert isinstance(f, Coalition)
    assert f.agents == ("a", "b")
    assert f.cmp is CmpOp.GE
    assert f.threshold == Fraction(1, 2)
    assert f.bound == 3
    assert f.body == eventually(Atom("goal"))


def test_parse_decimal_threshold_is_exact():
    """0.9 is read as 9/10 exactly"""
    f = parse_formula("<<a>>[>0.9,k=1] X p")
    assert f.threshold == Fraction(9, 10)


def test_parse_sugar_and_precedence():
    """G is ¬(⊤ U ¬x); & binds tighter than |; U is right associative"""
    assert parse_formula("G p") == always(Atom("p"))
    assert parse_formula("p | q & r") == Or(Atom("p"), And(Atom("q"), Atom("r")))
    assert parse_formula("p U q U r") == Until(Atom("p"), Until(Atom("q"), Atom("r")))
    assert parse_formula("!X p") == Not(Next(Atom("p")))
    assert parse_formula("⊤") == Top()


def test_parse_errors():
    """Errors name the offending agent, threshold or position"""
    with pytest.raises(FormulaSyntaxError):
        parse_formula("p &")
    with pytest.raises(UnknownAgent):
        parse_formula("<<z>>[>=1/2,k=1] F p", ["a"])
    with pytest.raises(ThresholdOutOfRange):
        parse_formula("<<a>>[>=3/2,k=1] F p")


def test_print_round_trips():
    """Printed formulas parse back to the same tree"""
    for text in ["<<a>>[>=1/2, k=1] F heads", "!<<v>>[<1/3, k=4] (p U (q & !r))", "G (F t0 & F t1)",
                 "<<>>[<=0, k=1] X p"]:
        f = parse_formula(text)
        assert parse_formula(to_text(f)) == f
    assert to_text(parse_formula("<<a>>[>=1/2,k=1] F heads")) == "<<a>>[>=1/2, k=1] F heads"


def test_spans_do_not_affect_equality():
    """Source positions are not part of formula identity"""
    assert parse_formula("p & q") == And(Atom("p"), Atom("q"))


def test_cmp_operations():
    """Conjugates swap strictness only"""
    assert CmpOp.GE.conjugate() is CmpOp.GT
    assert CmpOp.LT.conjugate() is CmpOp.LE
    assert CmpOp.GT.holds(Fraction(1, 2), Fraction(1, 3))
    assert not CmpOp.GT.holds(Fraction(1, 2), Fraction(1, 2))
    assert CmpOp.LE.holds(Fraction(1, 2), Fraction(1, 2))
    assert CmpOp.GE.is_lower_bound and not CmpOp.LE.is_lower_bound


def test_structure_helpers():
    """Atoms, sizes and subformula order"""
    f = parse_formula("<<a>>[>=1/2,k=1] (p U !q)")
    assert atoms(f) == frozenset({"p", "q"})
    assert size(f) == len(subformulas(f))
    assert is_state_formula(f)
    assert not is_state_formula(f.body)
    assert is_boolean(parse_formula("p & !q | T"))
    assert not is_boolean(parse_formula("X p"))


def test_classify_fragment():
    """NatPATL needs every temporal operator directly under a coalition"""
    flat = classify(parse_formula("<<a>>[>=1/2,k=1] (p U q) & !<<b>>[<1,k=2] X r"))
    assert flat.fragment is Fragment.NATPATL
    assert not flat.positive

    nested = classify(parse_formula("<<a>>[>=1/2,k=1] G (F t0 & F t1)"))
    assert nested.fragment is Fragment.NATPATL_STAR
    assert nested.positive is False

    positive = classify(parse_formula("<<a>>[>=1/2,k=1] (F p & X q)"))
    assert positive.positive
    assert positive.fragment is Fragment.NATPATL_STAR


def test_classify_parity():
    """Parity counts enclosing negations per subformula"""
    cls = classify(parse_formula("!(p & !q)"))
    assert cls.parity[Atom("p")] is Parity.ODD
    assert cls.parity[Atom("q")] is Parity.EVEN
    assert classify(parse_formula("p & !p")).parity[Atom("p")] is Parity.MIXED


def test_boolean_evaluation(coin):
    """Boolean conditions evaluate on label sets"""
    g = parse_formula("heads | !tails")
    assert holds_on_labels(g, frozenset({"heads"}))
    assert not holds_on_labels(g, frozenset({"tails"}))
    assert eval_bool(g, "s0", coin)
    assert not eval_bool(parse_formula("tails"), "sH", coin)
    with pytest.raises(UnknownAtom):
        eval_bool(parse_formula("edge"), "s0", coin)
