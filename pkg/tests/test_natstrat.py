"""
Tests for natural strategies: guards, automata, matching, text format, enumeration
"""

from fractions import Fraction

import pytest

from cgs import History
from conftest import create_sample_strategy
from errors import InvalidStrategy, NoMatch, StrategySyntaxError, VocabularyEmpty
from logic import And, Atom, Not, Top
from natstrat import TRUE, UNIVERSAL, Concat, Letter, Setting, act, complexity, compile_guard, \
    consistent, enumerate_det, enumerate_skeletons, format_pairs, format_regex, format_strategy, \
    literal_vocabulary, match_index, minterm_vocabulary, parse_pair, parse_strategy, parse_vocabulary, \
    regex_size, validate_strategy

P = Atom("p")


def test_regex_sizes():
    """Every symbol but parentheses counts; distributions are free"""
    assert regex_size(UNIVERSAL) == 2
    assert regex_size(Concat(UNIVERSAL, Letter(P))) == 4
    pair = parse_pair("hasBallot & !scanned -> scan")
    assert regex_size(pair.guard) == 4


def test_complexity_of_sample_strategies(voter, coercer):
    """Complexity sums the guard sizes"""
    simple = create_sample_strategy("hasBallot & !scanned -> scan\nT -> noop", agent="v")
    assert complexity(simple) == 5
    assert regex_size(coercer.pairs[2].guard) == 15
    assert complexity(coercer) == 5 + 7 + 15 + 2
    assert voter.setting is Setting.MEMORYLESS
    assert coercer.setting is Setting.RECALL


def test_compile_guard_merges_states():
    """⊤* needs a single state; a single letter needs two"""
    assert compile_guard(UNIVERSAL).size == 1
    assert compile_guard(Letter(P)).size == 2
    nfa = compile_guard(Concat(UNIVERSAL, Letter(P)))
    assert nfa.accepts([frozenset(), frozenset({"p"})])
    assert not nfa.accepts([frozenset({"p"}), frozenset()])
    assert not nfa.accepts([])


def test_consistent_histories(toggle):
    """A guard regex is matched against the whole history"""
    guard = parse_pair("T* . p . !p -> b").guard
    assert consistent(History.of(toggle, ["s0", "s1", "s0"]), guard, toggle)
    assert not consistent(History.of(toggle, ["s0", "s1"]), guard, toggle)
    assert consistent(History.of(toggle, ["s1"]), TRUE, toggle)


def test_match_index_memoryless(coin):
    """Memoryless guards read the last state; illegal supports are skipped"""
    s = create_sample_strategy("heads -> noop\nT -> toss", agent="a")
    assert match_index(History.of(coin, ["s0", "sH"]), s, coin) == 1
    assert match_index(History.of(coin, ["s0", "sT"]), s, coin) == 2
    assert act(s, History.of(coin, ["s0", "sH"]), coin).dirac_value == "noop"

    skipping = create_sample_strategy("!heads -> noop\nT -> toss", agent="a")
    assert match_index(History.of(coin, ["s0"]), skipping, coin) == 2
    assert match_index(History.of(coin, ["s0", "sT"]), skipping, coin) == 1


def test_match_index_with_recall(toggle):
    """Recall guards match the full history"""
    s = create_sample_strategy("T* . p . !p -> b\nT* -> a", agent="ag")
    assert s.setting is Setting.RECALL
    assert match_index(History.of(toggle, ["s0", "s1", "s0"]), s, toggle) == 1
    assert match_index(History.of(toggle, ["s0", "s1"]), s, toggle) == 2


def test_no_match_raises(coin):
    """When even the fallback is illegal nothing can be played"""
    s = create_sample_strategy("T -> noop", agent="a")
    with pytest.raises(NoMatch):
        match_index(History.of(coin, ["s0"]), s, coin)


def test_parse_strategy_headers():
    """Header lines set agent and setting; explicit arguments must agree"""
    s = parse_strategy("agent a\nsetting R\nT* . p -> x  # comment\nT* -> y\n")
    assert s.agent == "a" and s.setting is Setting.RECALL
    assert s.pairs[0].guard == Concat(UNIVERSAL, Letter(P))
    with pytest.raises(InvalidStrategy):
        parse_strategy("agent a\nT -> y\n", agent="b")
    with pytest.raises(InvalidStrategy):
        parse_strategy("setting r\nT -> y\n", agent="a", setting=Setting.RECALL)
    with pytest.raises(StrategySyntaxError):
        parse_strategy("T -> y\n")


def test_parse_mixed_targets():
    """Mixed targets must be exact and list each action once"""
    pair = parse_pair("p & !q -> {x: 1/3, y: 2/3}")
    assert pair.guard == Letter(And(P, Not(Atom("q"))))
    assert pair.dist["y"] == Fraction(2, 3)
    with pytest.raises(StrategySyntaxError):
        parse_pair("p -> {x: 1/3, y: 1/3}")
    with pytest.raises(StrategySyntaxError):
        parse_pair("p -> {x: 1/2, x: 1/2}")


def test_parse_errors_carry_line():
    """Boolean connectives apply to conditions only"""
    with pytest.raises(StrategySyntaxError) as excinfo:
        parse_strategy("agent a\nT -> x\n(p . q) & r -> x\n")
    assert "line 3" in str(excinfo.value.location)
    with pytest.raises(StrategySyntaxError):
        parse_pair("p ->")


def test_format_round_trip(coercer):
    """Printed strategies parse back to equal strategies"""
    text = format_strategy(coercer)
    assert parse_strategy(text) == coercer
    assert format_regex(coercer.pairs[2].guard) == \
        "T* . (!requested_v)* . (requested_v & !vot_v)* . !punished_v"
    assert format_pairs(create_sample_strategy("T -> {x: 1/4, y: 3/4}", agent="a")) == "T -> {x: 1/4, y: 3/4}"


def test_validate_strategy(coin):
    """Fallback rules, unknown names and support warnings"""
    assert validate_strategy(create_sample_strategy("heads -> noop\nT -> toss", agent="a"), coin) == []

    warnings = validate_strategy(create_sample_strategy("!heads -> noop\nT -> toss", agent="a"), coin)
    assert len(warnings) == 1 and "s0" in warnings[0]

    for text in ["heads -> noop\nT -> noop", "heads -> toss", "edge -> toss\nT -> toss",
                 "heads -> jump\nT -> toss", "T -> {toss: 1/2, noop: 1/2}"]:
        with pytest.raises(InvalidStrategy):
            validate_strategy(create_sample_strategy(text, agent="a"), coin)


def test_validate_strict_support(coin):
    """Strict mode wants every legal action in the support of non-final pairs"""
    with pytest.raises(InvalidStrategy):
        validate_strategy(create_sample_strategy("heads -> noop\nT -> toss", agent="a"), coin, strict=True)
    mixed = create_sample_strategy("heads -> {noop: 1/2, toss: 1/2}\nT -> toss", agent="a")
    assert validate_strategy(mixed, coin, strict=True) == []


def test_vocabularies(coin):
    """Literal and minterm vocabularies start with ⊤; files add only what they list"""
    literals = literal_vocabulary(coin)
    assert literals[0] == Top()
    assert len(literals) == 9
    assert len(minterm_vocabulary(coin)) == 4
    vocab = parse_vocabulary("# comment\nheads\n!tails\n")
    assert vocab == (Atom("heads"), Not(Atom("tails")))
    with pytest.raises(StrategySyntaxError):
        parse_vocabulary("X heads")


def test_enumerate_det_order(toggle):
    """Strategies come by complexity, then by text"""
    strategies = list(enumerate_det("ag", 2, Setting.MEMORYLESS, (P,), toggle))
    assert len(strategies) == 6
    assert [complexity(s) for s in strategies] == [1, 1, 2, 2, 2, 2]
    assert [format_pairs(s) for s in strategies[:3]] == ["T -> a", "T -> b", "p -> a\nT -> a"]
    assert all(s.is_deterministic for s in strategies)


def test_enumerate_det_prunes_shadowed_pairs(toggle):
    """A pair covering only states already taken is never generated"""
    strategies = list(enumerate_det("ag", 3, Setting.MEMORYLESS, (P, Not(P)), toggle))
    assert len(strategies) == 10
    assert not any(format_pairs(s).startswith("p -> a\np ->") for s in strategies)


def test_enumerate_det_with_recall(toggle):
    """⊤*·p needs budget 6 once the ⊤* fallback is paid for"""
    guard = Concat(UNIVERSAL, Letter(P))

    def has_guard(k):
        return any(s.pairs[0].guard == guard
                   for s in enumerate_det("ag", k, Setting.RECALL, (P, Top()), toggle))
    assert has_guard(6)
    assert not has_guard(5)


def test_enumerate_errors(toggle):
    """Empty vocabularies and unknown agents are rejected"""
    with pytest.raises(VocabularyEmpty):
        list(enumerate_det("ag", 2, Setting.MEMORYLESS, (), toggle))
    with pytest.raises(InvalidStrategy):
        list(enumerate_det("zz", 2, Setting.MEMORYLESS, (P,), toggle))


def test_enumerate_skeletons(toggle):
    """Skeletons list supports instead of single actions"""
    skeletons = list(enumerate_skeletons("ag", 2, Setting.MEMORYLESS, (P,), toggle))
    assert len(skeletons) == 8
    widest = [s for s in skeletons if s.supports[0] == ("a", "b")]
    assert len(widest) == 2
    uniform = widest[0].uniform()
    assert uniform.pairs[0].dist["a"] == Fraction(1, 2)
    assert widest[0].describe().startswith("p -> {a, b}")
