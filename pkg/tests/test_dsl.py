"""
Tests for the model DSL
"""

from fractions import Fraction

import pytest

from conftest import SAMPLES, create_sample_model
from dsl import load_model, parse_model
from errors import DanglingStateReference, ModelSyntaxError, UnnormalizedDistribution

PARAM_MODEL = """
# a lossy channel
agents s
props ok
actions send
param fail = 1/10
param keep = 1 - fail * 2
states a b {ok} c
legal a s {send}
legal b s {send}
legal c s {send}
trans a (send) -> { b: keep, c: fail, a: fail }
trans b (send) -> { b: 1 }
trans c (send) -> { c: 1 }
init a
"""


def test_parse_parameters_and_comments():
    """Parameters are exact rationals and may refer to earlier ones"""
    cgs = create_sample_model(PARAM_MODEL)
    dist = cgs.successors("a", ("send",))
    assert dist["b"] == Fraction(4, 5)
    assert dist["c"] == Fraction(1, 10)
    assert cgs.labels("b") == frozenset({"ok"})
    assert cgs.labels("a") == frozenset()


def test_decimal_literals_rejected():
    """Probabilities are written as rationals, never decimals"""
    with pytest.raises(ModelSyntaxError):
        parse_model(PARAM_MODEL.replace("1/10", "0.1"))


def test_syntax_error_has_location():
    """Syntax errors report line and column"""
    with pytest.raises(ModelSyntaxError) as excinfo:
        parse_model("agents a\nstates s0\nlegal s0 a go\n")
    assert "line 3" in str(excinfo.value.location)


def test_unknown_parameter():
    """Referencing an undeclared parameter is a dangling reference"""
    with pytest.raises(DanglingStateReference):
        parse_model(PARAM_MODEL.replace("keep = 1 - fail * 2", "keep = 1 - lost * 2"))


def test_duplicate_init():
    """At most one init statement"""
    with pytest.raises(ModelSyntaxError):
        parse_model(PARAM_MODEL + "\ninit b\n")


def test_probabilities_not_renormalized():
    """A distribution summing to less than one is rejected as written"""
    with pytest.raises(UnnormalizedDistribution):
        create_sample_model(PARAM_MODEL.replace("a: fail }", "a: 0 }"))


def test_sample_models_load(coin, maze, voting):
    """Shipped samples validate"""
    assert coin.agents == ("a",)
    assert maze.agents == ("C", "E")
    assert maze.initial == "c11"
    assert len(maze.states) == 9
    assert voting.initial == "b_f"
    assert len(voting.states) == 28


def test_load_model_from_path():
    """load_model accepts str paths too"""
    cgs = load_model(str(SAMPLES / "coin.cgs"))
    assert cgs.props == ("heads", "tails")
