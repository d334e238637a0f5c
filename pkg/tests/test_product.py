"""
Tests for product construction
"""

from fractions import Fraction

import pytest

from conftest import create_sample_strategy
from errors import InvalidStrategy, MissingAgentStrategy, StateBudgetExceeded, StrategyAgentMismatch
from product import ProfileTracker, fix_all, fix_coalition, format_transitions, memory_update, state_names


def create_sample_profile(**texts):
    """One fallback-only or multi-pair strategy per agent keyword"""
    return {agent: create_sample_strategy(text, agent=agent) for agent, text in texts.items()}


def test_fix_coalition_keeps_opponents_free(relay):
    """Fixing a leaves b's actions as MDP choices"""
    mdp = fix_coalition(relay, ["a"], create_sample_profile(a="T -> x"), "s0")
    assert mdp.agents == ("b",)
    assert [mdp.cgs_state(i) for i in range(mdp.size)] == ["s0", "s1", "g", "d"]
    labels = [label for label, _ in mdp.choices[1]]
    assert labels == [("x",), ("y",)]
    _, gamble = mdp.choices[1][0]
    assert gamble[next(iter(mdp.project(["g"])))] == Fraction(1, 3)


def test_fix_all_gives_chain(relay):
    """With every agent fixed the product is a Markov chain"""
    chain = fix_all(relay, create_sample_profile(a="T -> x", b="T -> y"), "s0")
    assert chain.size == 3
    row = chain.rows[0]
    assert sorted(row[t] for t in row.support) == [Fraction(1, 2), Fraction(1, 2)]


def test_profile_must_match_coalition(relay):
    """The profile covers exactly the coalition, and strategies their own agents"""
    with pytest.raises(StrategyAgentMismatch):
        fix_coalition(relay, ["a", "b"], create_sample_profile(a="T -> x"), "s0")
    with pytest.raises(StrategyAgentMismatch):
        fix_coalition(relay, ["a"], {"a": create_sample_strategy("T -> x", agent="b")}, "s0")
    with pytest.raises(MissingAgentStrategy):
        fix_all(relay, create_sample_profile(a="T -> x"), "s0")


def test_state_budget(relay):
    """Exploration stops at the configured budget"""
    with pytest.raises(StateBudgetExceeded):
        fix_coalition(relay, ["a"], create_sample_profile(a="T -> x"), "s0", max_states=2)


def test_illegal_fallback_surfaces(coin):
    """A strategy with nothing legal to play is rejected during exploration"""
    with pytest.raises(InvalidStrategy):
        fix_all(coin, create_sample_profile(a="T -> noop"), "s0")


def test_recall_memory_splits_states(toggle):
    """A recall strategy may visit one game state with different memories"""
    chain = fix_all(toggle, create_sample_profile(ag="T* . p . !p -> b\nT* -> a"), "s0")
    assert chain.size == 3
    names = state_names(chain)
    assert sorted(names) == ["s0#0", "s0#1", "s1"]


def test_format_transitions(relay):
    """One line per transition: source choice target probability"""
    mdp = fix_coalition(relay, ["a"], create_sample_profile(a="T -> x"), "s0")
    lines = format_transitions(mdp).splitlines()
    assert lines[0] == "s0 x s1 1/2"
    assert lines[1] == "s0 x g 1/2"
    assert "s1 x d 2/3" in lines
    assert "s1 y s0 1" in lines
    chain = fix_all(relay, create_sample_profile(a="T -> y", b="T -> y"), "s0")
    assert format_transitions(chain) == "s0 - s1 1\ns1 - s0 1\n"


def test_memory_update_tracks_guard_progress(toggle):
    """Recall memory returns to the same set of automaton states on a repeated suffix"""
    tracker = ProfileTracker(toggle, create_sample_profile(ag="T* . p . !p -> b\nT* -> a"))
    start = tracker.initial("s0")
    seen_p = memory_update(tracker, start, "s1")
    back = memory_update(tracker, seen_p, "s0")
    assert back != start
    assert memory_update(tracker, back, "s1") == seen_p
    assert tracker.moves(start, "s0")[0].dirac_value == "a"
    assert tracker.moves(back, "s0")[0].dirac_value == "b"
