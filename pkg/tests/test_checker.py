"""
Tests for the model checker on the relay game
"""

from fractions import Fraction

import pytest

from checker import ModelChecker, check, check_positive_np_path, compare, route_body, verify_witness
from conftest import create_sample_strategy
from errors import FormulaError, NotPositiveFragment, UnknownAtom
from logic import Atom, CmpOp, parse_formula
from models import CheckConfig, Verdict
from natstrat import format_pairs
from probsolve import Interval


def run_check(cgs, text, cfg=None, state="s0"):
    f = parse_formula(text, cgs.agents)
    return f, check(cgs, state, f, cfg)


@pytest.mark.parametrize("text, verdict", [
    ("<<a>>[>=2/3,k=1] F goal", Verdict.TRUE),
    ("<<a>>[>2/3,k=2] F goal", Verdict.FALSE),
    ("<<a>>[<=1/3,k=1] F goal", Verdict.TRUE),
    ("<<a>>[<=0,k=1] F goal", Verdict.FALSE),
    ("<<a>>[>=1/2,k=1] X goal", Verdict.TRUE),
    ("<<a>>[>1/2,k=1] X goal", Verdict.FALSE),
    ("!<<a>>[>2/3,k=2] F goal", Verdict.TRUE),
    ("<<a>>[>=2/3,k=1] (F goal & F goal)", Verdict.TRUE),
    ("<<a>>[>2/3,k=1] (F goal & F goal)", Verdict.FALSE),
    ("<<b>>[<=1/2,k=1] X <<a>>[>=2/3,k=1] F goal", Verdict.TRUE),
    ("<<b>>[<=1/3,k=1] X <<a>>[>=2/3,k=1] F goal", Verdict.FALSE),
])
def test_relay_verdicts(relay, text, verdict):
    """Opponent b minimizes lower bounds and maximizes upper bounds"""
    _, result = run_check(relay, text)
    assert result.verdict is verdict


def test_witness_and_value(relay):
    """A true coalition entry carries its witness profile and value"""
    f, result = run_check(relay, "<<a>>[>=2/3,k=1] F goal")
    key = ("s0", f)
    witness = result.witnesses[key]
    assert format_pairs(witness.profile["a"]) == "T -> x"
    assert result.values[key] == Interval.point(Fraction(2, 3))
    assert result.stats.candidates >= 1

    f, result = run_check(relay, "<<a>>[<=1/3,k=1] F goal")
    assert format_pairs(result.witnesses[("s0", f)].profile["a"]) == "T -> y"


def test_false_entry_keeps_best_value(relay):
    """A false coalition entry reports the best value any candidate reached"""
    f, result = run_check(relay, "<<a>>[<=0,k=1] F goal")
    assert ("s0", f) not in result.witnesses
    assert result.values[("s0", f)] == Interval.point(Fraction(1, 3))


def test_inner_formulas_decided_everywhere(relay):
    """Nested coalition operators are decided on every reachable state"""
    f, result = run_check(relay, "<<b>>[<=1/2,k=1] X <<a>>[>=2/3,k=1] F goal")
    inner = f.body.arg
    assert result.truth[("s0", inner)] is Verdict.TRUE
    assert result.truth[("s1", inner)] is Verdict.FALSE
    assert result.truth[("g", inner)] is Verdict.TRUE
    assert result.truth[("d", inner)] is Verdict.FALSE


def test_interval_mode_can_be_unknown(relay):
    """A bracket straddling the threshold yields unknown"""
    cfg = CheckConfig(solve="iter:1/1000")
    _, result = run_check(relay, "<<a>>[>=2/3,k=1] F goal", cfg)
    assert result.verdict is Verdict.UNKNOWN
    _, result = run_check(relay, "<<a>>[>=1/2,k=1] F goal", cfg)
    assert result.verdict is Verdict.TRUE


def test_enumerated_opponents(relay):
    """Opponents restricted to natural strategies"""
    cfg = CheckConfig(opponent="enumerate:1")
    _, result = run_check(relay, "<<a>>[>=2/3,k=1] F goal", cfg)
    assert result.verdict is Verdict.TRUE
    _, result = run_check(relay, "<<a>>[>2/3,k=1] F goal", cfg)
    assert result.verdict is Verdict.FALSE


def test_parallel_evaluation_agrees(relay):
    """Worker threads do not change verdicts or witnesses"""
    f, serial = run_check(relay, "<<a>>[<=1/3,k=2] F goal")
    _, parallel = run_check(relay, "<<a>>[<=1/3,k=2] F goal", CheckConfig(jobs=3))
    assert serial.verdict is parallel.verdict is Verdict.TRUE
    key = ("s0", f)
    assert format_pairs(serial.witnesses[key].profile["a"]) == format_pairs(parallel.witnesses[key].profile["a"])


def test_verify_profile_and_witness(relay):
    """Given profiles are solved directly; reported witnesses re-verify"""
    f, result = run_check(relay, "<<a>>[>=2/3,k=1] F goal")
    checker = ModelChecker(relay)
    verdict, value = checker.verify_profile("s0", f, {"a": create_sample_strategy("T -> y", agent="a")})
    assert verdict is Verdict.FALSE
    assert value == Interval.point(0)

    mixed = create_sample_strategy("!p -> {x: 1/2, y: 1/2}\nT -> x", agent="a")
    verdict, value = checker.verify_profile("s0", parse_formula("<<a>>[>=1/2,k=2] F goal"), {"a": mixed})
    assert verdict is Verdict.TRUE
    assert value == Interval.point(Fraction(1, 2))

    verdict, value = verify_witness(relay, result, ("s0", f))
    assert verdict is Verdict.TRUE
    assert value == Interval.point(Fraction(2, 3))


def test_candidate_profiles_order(relay):
    """Joint profiles come by total complexity, then by text"""
    profiles = list(ModelChecker(relay).candidate_profiles(["b", "a"], 1))
    texts = [(format_pairs(p["a"]), format_pairs(p["b"])) for p in profiles]
    assert texts == [("T -> x", "T -> x"), ("T -> x", "T -> y"), ("T -> y", "T -> x"), ("T -> y", "T -> y")]
    assert list(ModelChecker(relay).candidate_profiles([], 1)) == [{}]


def test_route_body():
    """Bodies route to next, until, negated until or the automaton path"""
    assert route_body(parse_formula("X p")).kind == "next"
    assert route_body(parse_formula("p U q")).kind == "until"
    assert route_body(parse_formula("G p")).kind == "not-until"
    assert route_body(parse_formula("!X p")).kind == "next"
    omega = route_body(parse_formula("F p & F q"))
    assert omega.kind == "omega"
    assert [formula for _, formula in omega.predicates] == [Atom("p"), Atom("q")]


def test_compare():
    """Comparison against a bracket is three-valued"""
    half = Fraction(1, 2)
    assert compare(Interval.point(half), CmpOp.GE, half) is Verdict.TRUE
    assert compare(Interval.point(half), CmpOp.GT, half) is Verdict.FALSE
    assert compare(Interval(Fraction(1, 3), half), CmpOp.GE, half) is Verdict.UNKNOWN


def test_check_errors(relay):
    """Bad initial states, path formulas and unknown atoms are rejected"""
    with pytest.raises(FormulaError):
        check(relay, "nowhere", parse_formula("p"))
    with pytest.raises(FormulaError):
        check(relay, "s0", parse_formula("F goal"))
    with pytest.raises(UnknownAtom):
        check(relay, "s0", parse_formula("<<a>>[>=1/2,k=1] F edge"))


def test_positive_fragment_procedure(relay):
    """The witness-guessing procedure accepts negation-free formulas only"""
    result = check_positive_np_path(relay, "s0", parse_formula("<<a>>[>=2/3,k=1] F goal & p | goal"))
    assert result.verdict is Verdict.FALSE
    result = check_positive_np_path(relay, "s0", parse_formula("<<a>>[>=2/3,k=1] F goal"))
    assert result.verdict is Verdict.TRUE
    with pytest.raises(NotPositiveFragment):
        check_positive_np_path(relay, "s0", parse_formula("!<<a>>[>2/3,k=1] F goal"))


def test_positive_fragment_decides_on_demand(relay):
    """A true left disjunct leaves the right one undecided; every witness re-verifies"""
    right = parse_formula("<<a>>[>=1,k=1] X goal", relay.agents)
    f = parse_formula("<<a>>[>=2/3,k=1] F goal | <<a>>[>=1,k=1] X goal", relay.agents)
    result = check_positive_np_path(relay, "s0", f)
    assert result.verdict is Verdict.TRUE
    assert ("s0", right) not in result.truth

    nested = parse_formula("<<b>>[<=1/2,k=1] X <<a>>[>=2/3,k=1] F goal", relay.agents)
    guessed = check_positive_np_path(relay, "s0", nested)
    assert guessed.verdict is check(relay, "s0", nested).verdict is Verdict.TRUE
    assert guessed.witnesses
    for key in guessed.witnesses:
        verdict, _ = verify_witness(relay, guessed, key)
        assert verdict is Verdict.TRUE


def test_coin(coin):
    """The fair coin lands heads with probability one half"""
    expectations = {"<<a>>[>=1/2,k=1] F heads": Verdict.TRUE, "<<a>>[>1/2,k=1] F heads": Verdict.FALSE,
                    "<<a>>[>=1,k=1] X (heads | tails)": Verdict.TRUE}
    for text, verdict in expectations.items():
        _, result = run_check(coin, text)
        assert result.verdict is verdict, text
