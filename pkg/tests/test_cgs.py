"""
Tests for the game structure: distributions, validation, successors, histories
"""

from fractions import Fraction

import pytest

from cgs import Distribution, History, RawLegal, RawModel, RawState, RawTransition, reachable_states, \
    successors, unreachable_states, validate_cgs
from errors import DanglingStateReference, EmptyLegality, IllegalProfile, InvalidHistory, MissingTransition, \
    TransitionForIllegalProfile, UnnormalizedDistribution


def create_sample_raw(**overrides) -> RawModel:
    """One agent, two states, a single action looping or moving"""
    fields = dict(
        agents=["a"],
        actions=["go", "stay"],
        props=["p"],
        states=[RawState(name="s0", labels=[]), RawState(name="s1", labels=["p"])],
        legal=[RawLegal(state="s0", agent="a", actions=["go", "stay"]),
               RawLegal(state="s1", agent="a", actions=["stay"])],
        transitions=[
            RawTransition(state="s0", profile=["go"], outcomes=[("s1", Fraction(1, 3)), ("s0", Fraction(2, 3))]),
            RawTransition(state="s0", profile=["stay"], outcomes=[("s0", Fraction(1))]),
            RawTransition(state="s1", profile=["stay"], outcomes=[("s1", Fraction(1))]),
        ],
        init="s0",
    )
    fields.update(overrides)
    return RawModel(**fields)


def test_distribution_drops_zero_weights_and_keeps_order():
    """Zero entries vanish from the support; insertion order is kept"""
    dist = Distribution([("b", Fraction(1, 2)), ("a", 0), ("c", Fraction(1, 2))])
    assert dist.support == ("b", "c")
    assert "a" not in dist
    assert dist["b"] == Fraction(1, 2)


def test_distribution_rejects_bad_totals():
    """Weights must sum to exactly one and be non-negative"""
    with pytest.raises(ValueError):
        Distribution({"a": Fraction(1, 3), "b": Fraction(1, 3)})
    with pytest.raises(ValueError):
        Distribution({"a": Fraction(3, 2), "b": Fraction(-1, 2)})


def test_distribution_point_uniform_product():
    """Dirac, uniform and independent product distributions"""
    point = Distribution.point("x")
    assert point.is_dirac and point.dirac_value == "x"

    uniform = Distribution.uniform(["x", "y", "z"])
    assert all(uniform[e] == Fraction(1, 3) for e in "xyz")
    assert not uniform.is_dirac

    joint = Distribution.product([Distribution.uniform(["a", "b"]), point])
    assert joint.support == (("a", "x"), ("b", "x"))
    assert joint[("a", "x")] == Fraction(1, 2)


def test_validate_builds_model():
    """A well-formed raw model validates and exposes its tables"""
    cgs = validate_cgs(create_sample_raw())
    assert cgs.states == ("s0", "s1")
    assert cgs.labels("s1") == frozenset({"p"})
    assert cgs.legal("s0", "a") == frozenset({"go", "stay"})
    assert cgs.profiles("s0") == (("go",), ("stay",))
    assert cgs.globally_legal("a") == frozenset({"stay"})
    assert cgs.initial == "s0"


def test_validate_rejects_empty_legality():
    """Every agent needs at least one action in every state"""
    raw = create_sample_raw(legal=[RawLegal(state="s0", agent="a", actions=["go", "stay"])])
    with pytest.raises(EmptyLegality):
        validate_cgs(raw)


def test_validate_rejects_unnormalized_distribution():
    """Outcome probabilities are taken as written and must sum to one"""
    transitions = create_sample_raw().transitions
    transitions[0] = RawTransition(state="s0", profile=["go"], outcomes=[("s1", Fraction(1, 3))])
    with pytest.raises(UnnormalizedDistribution):
        validate_cgs(create_sample_raw(transitions=transitions))


def test_validate_rejects_transition_for_illegal_profile():
    """A transition may only be given for a legal profile"""
    transitions = create_sample_raw().transitions + [
        RawTransition(state="s1", profile=["go"], outcomes=[("s0", Fraction(1))])]
    with pytest.raises(TransitionForIllegalProfile):
        validate_cgs(create_sample_raw(transitions=transitions))


def test_validate_rejects_missing_transition():
    """Every legal profile needs a transition"""
    transitions = create_sample_raw().transitions[:2]
    with pytest.raises(MissingTransition):
        validate_cgs(create_sample_raw(transitions=transitions))


def test_validate_rejects_dangling_references():
    """Unknown states and props are reported with their kind"""
    with pytest.raises(DanglingStateReference):
        validate_cgs(create_sample_raw(init="nowhere"))
    with pytest.raises(DanglingStateReference):
        validate_cgs(create_sample_raw(states=[RawState(name="s0", labels=["q"]),
                                               RawState(name="s1", labels=[])]))


def test_successors_checks_legality(coin):
    """The coin tosses fairly from s0; noop is not legal there"""
    dist = successors(coin, "s0", ["toss"])
    assert dist["sH"] == Fraction(1, 2) and dist["sT"] == Fraction(1, 2)
    with pytest.raises(IllegalProfile) as excinfo:
        successors(coin, "s0", ["noop"])
    assert excinfo.value.error_code == "ILLEGAL_PROFILE"


def test_successors_checks_profile_length(coin, relay):
    """A joint action needs exactly one action per agent"""
    with pytest.raises(IllegalProfile) as excinfo:
        successors(coin, "sH", ["toss", "noop"])
    assert excinfo.value.agent is None
    with pytest.raises(IllegalProfile):
        successors(relay, "s0", ["x"])
    with pytest.raises(IllegalProfile):
        successors(relay, "s0", [])


def test_reachability(coin):
    """Breadth-first discovery order from the initial state"""
    assert reachable_states(coin, "s0") == ("s0", "sH", "sT")
    assert unreachable_states(coin, "sH") == ("s0", "sT")


def test_history_follows_moves(coin):
    """Histories only follow possible moves"""
    history = History.of(coin, ["s0", "sH"])
    assert history.last == "sH"
    assert len(history.extend("sH")) == 3
    with pytest.raises(InvalidHistory):
        History.of(coin, ["sH", "sT"])
    with pytest.raises(InvalidHistory):
        History.of(coin, [])
