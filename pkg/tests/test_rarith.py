"""
Tests for the real-arithmetic encoding of behavioral-strategy queries
"""

import random
from fractions import Fraction

import pytest

from checker import check, verify_witness
from conftest import create_random_game, create_sample_model, create_sample_strategy
from errors import BodyNotNatPatl, NatpatlError
from logic import CmpOp, parse_formula
from models import CheckConfig, Verdict
from rarith import encode, run_external


def create_sample_script(relay, text: str, **kwargs):
    return encode(relay, "s0", parse_formula(text, relay.agents), **kwargs)


def test_one_system_per_skeleton(relay):
    """With budget 1 only the fallback exists, once per action"""
    script = create_sample_script(relay, "<<a>>[>=2/3,k=1] F goal")
    assert len(script.encodings) == 2
    described = [encoding.skeletons["a"].describe() for encoding in script.encodings]
    assert described == sorted(described)
    kinds = {info.kind for info in script.variables.values()}
    assert kinds == {"weight", "value"}


def test_smtlib_text(relay):
    """The script declares every variable and asks for satisfiability"""
    script = create_sample_script(relay, "<<a>>[>=2/3,k=1] F goal")
    text = script.to_smtlib()
    assert text.startswith("; <<a>>")
    assert "QF_NRA" in text
    assert "(declare-fun p0_v_0 () Real)" in text
    assert "(assert" in text
    assert "(check-sat)" in text


def test_metadata(relay):
    """Metadata maps each variable back to its agent, pair, action and state"""
    script = create_sample_script(relay, "<<a>>[>=1/2,k=1] X goal")
    meta = script.metadata()
    assert meta["logic"] == "QF_NRA"
    assert meta["initial"] == "s0"
    assert len(meta["skeletons"]) == 2
    weights = [info for info in meta["variables"].values() if info["kind"] == "weight"]
    assert weights and all(info["agent"] == "a" and info["pair"] == 1 for info in weights)
    assert not any(info["kind"] == "value" for info in meta["variables"].values())
    assert '"logic": "QF_NRA"' in script.metadata_json()


def test_witness_substitution(relay):
    """A deterministic witness satisfies its own disjunct"""
    gamble = {"a": create_sample_strategy("T -> x", agent="a")}
    assert create_sample_script(relay, "<<a>>[>=2/3,k=1] F goal").substitute_witness(gamble)
    assert not create_sample_script(relay, "<<a>>[>2/3,k=1] F goal").substitute_witness(gamble)
    assert create_sample_script(relay, "<<a>>[>=1/2,k=1] X goal").substitute_witness(gamble)

    assignment = create_sample_script(relay, "<<a>>[>=2/3,k=1] F goal").witness_assignment(gamble)
    assert assignment["p0_v_0"] == Fraction(2, 3)
    assert assignment["p0_r_a_1_x_0"] == 1


def test_unmatched_profile(relay):
    """A profile outside the enumerated skeletons has no assignment"""
    script = create_sample_script(relay, "<<a>>[>=2/3,k=1] F goal")
    with pytest.raises(NatpatlError):
        script.witness_assignment({"a": create_sample_strategy("p -> y\nT -> x", agent="a")})


def test_negated_body_mirrors_threshold(relay):
    """G !goal is encoded as an upper bound on F goal"""
    script = create_sample_script(relay, "<<a>>[>=1/2,k=1] G !goal")
    assert script.op is CmpOp.LE
    assert script.threshold == Fraction(1, 2)


def test_trivially_unsat(relay):
    """Thresholds no probability can meet"""
    assert create_sample_script(relay, "<<a>>[>1,k=1] F goal").trivially_unsat()
    assert create_sample_script(relay, "<<a>>[<0,k=1] F goal").trivially_unsat()
    assert not create_sample_script(relay, "<<a>>[>=1,k=1] F goal").trivially_unsat()


def test_omega_body_rejected(relay):
    """Only X and U bodies have a real-arithmetic encoding"""
    with pytest.raises(BodyNotNatPatl):
        create_sample_script(relay, "<<a>>[>=1/2,k=1] G F goal")


def test_run_external(relay, tmp_path):
    """The script is written out and the tool's first line returned"""
    script = create_sample_script(relay, "<<a>>[>=1/2,k=1] X goal")
    path = tmp_path / "query.smt2"
    assert run_external(script, "echo sat", str(path)).startswith("sat")
    assert "(check-sat)" in path.read_text()
    with pytest.raises(NatpatlError):
        run_external(script, "no-such-solver-binary", str(path))


@pytest.mark.parametrize("model, text", [
    ("coin", "<<a>>[>=1/2,k=1] F heads"),
    ("coin", "<<a>>[>=1,k=1] X (heads | tails)"),
    ("maze", "<<C>>[>=1,k=1] F t1"),
])
def test_checker_witness_satisfies_encoding(model, text, request):
    """The profile the checker reports is a model of the encoded system"""
    cgs = request.getfixturevalue(model)
    f = parse_formula(text, cgs.agents)
    result = check(cgs, cgs.initial, f)
    assert result.verdict is Verdict.TRUE
    witness = result.witnesses[(cgs.initial, f)]
    assert encode(cgs, cgs.initial, f).substitute_witness(witness.profile)


@pytest.mark.parametrize("seed", range(50))
def test_random_game_witnesses_satisfy_encoding(seed):
    rng = random.Random(seed)
    cgs = create_sample_model(create_random_game(rng).text)
    cfg = CheckConfig(vocab="minterms")
    agents = rng.choice(["a", "b", "a,b"])
    op = rng.choice([">=", ">", "<=", "<"])
    threshold = rng.choice(["0", "1/4", "1/2", "3/4", "1"])
    body = rng.choice(["X p", "F p", "p U q", "G !q", "!X p", "F (p & !q)"])
    f = parse_formula(f"<<{agents}>>[{op}{threshold},k={rng.randint(1, 3)}] {body}", cgs.agents)
    result = check(cgs, "s0", f, cfg)
    if result.verdict is not Verdict.TRUE:
        return
    witness = result.witnesses[("s0", f)]
    assert verify_witness(cgs, result, ("s0", f), cfg)[0] is Verdict.TRUE
    assert encode(cgs, "s0", f, cfg).substitute_witness(witness.profile)
