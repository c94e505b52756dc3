import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import PLANS, SPECS, read
from generators import gen_model
from ltlprompt.lang import (
    BinOp, BoolLit, Case, DuplicateDeclaration, EnumLit, EnumSort, IntRange, LexError, SetLit,
    SmvSyntaxError, SortError, UndeclaredVariable, VarRef, parse_model, parse_specs, pretty_print,
)
from ltlprompt.ltl import formula as F

PLAN_EXAMPLE = read(PLANS / "plan_example.smv")


def test_plan_example_structure():
    m = parse_model(PLAN_EXAMPLE)
    action = m.var("Action")
    assert action.sort == EnumSort(("Stop", "Move_forward", "Turn_left", "Turn_right"))
    assert m.assignment("init", "Action").rhs == EnumLit("Stop")
    nxt = m.assignment("next", "Action").rhs
    assert isinstance(nxt, Case) and len(nxt.branches) == 3
    assert nxt.branches[-1] == (BoolLit(True), EnumLit("Stop"))


def test_minimal_model():
    m = parse_model("MODULE m VAR b : boolean; ASSIGN init(b) := FALSE;")
    assert len(m.variables) == 1 and len(m.assignments) == 1


def test_missing_esac_is_a_syntax_error():
    broken = PLAN_EXAMPLE.replace("esac;", "")
    with pytest.raises(SmvSyntaxError) as ei:
        parse_model(broken)
    assert "case" in ei.value.message and ei.value.line is not None


@pytest.mark.parametrize("text,err", [
    ("MODULE m VAR b : boolean; ASSIGN init(b) := 3;", SortError),
    ("MODULE m VAR b : boolean; b : boolean;", DuplicateDeclaration),
    ("MODULE m VAR b : boolean; ASSIGN init(c) := TRUE;", UndeclaredVariable),
    ("MODULE m VAR b : boolean; ASSIGN init(b) := TRUE $", LexError),
    ("MODULE m VAR b : boolean ASSIGN", SmvSyntaxError),
])
def test_diagnostics_carry_positions(text, err):
    with pytest.raises(err) as ei:
        parse_model(text)
    assert ei.value.line is not None and ei.value.col is not None
    assert 1 <= ei.value.line <= text.count("\n") + 1


def test_plain_integer_uses_default_range():
    m = parse_model("MODULE m VAR d : integer;")
    assert m.var("d").sort == IntRange(0, 15)
    assert parse_model("MODULE m VAR d : integer;", (0, 5)).var("d").sort == IntRange(0, 5)


def test_branch_after_true_guard_warns():
    m = parse_model("MODULE m VAR b : boolean; ASSIGN next(b) := case TRUE : TRUE; b : FALSE; esac;")
    assert m.warnings and "unreachable" in m.warnings[0]


def test_set_literal_round_trip():
    m = parse_model("MODULE m VAR b : boolean; ASSIGN next(b) := {TRUE, FALSE};")
    text = pretty_print(m)
    assert "{TRUE, FALSE}" in text
    assert parse_model(text) == m
    assert isinstance(m.assignment("next", "b").rhs, SetLit)


@pytest.mark.parametrize("name", ["plan_example", "unsafe_plan", "safe_plan", "stepwise_plan", "jackal_plan"])
def test_fixture_plans_reparse_exactly(name):
    m = parse_model(read(PLANS / f"{name}.smv"))
    text = pretty_print(m)
    assert parse_model(text) == m
    assert pretty_print(parse_model(text)) == text


def test_parsing_is_deterministic():
    assert parse_model(PLAN_EXAMPLE) == parse_model(PLAN_EXAMPLE)


def test_driving_spec_file(driving_specs):
    assert [s.name for s in driving_specs] == [f"spec{i}" for i in range(1, 16)]
    spec1 = driving_specs[0].formula
    expected = F.Globally(F.Implies(F.Atom(VarRef("Pedestrian")),
                                    F.Finally(F.Atom(BinOp("=", VarRef("Action"), EnumLit("Stop"))))))
    assert spec1 == expected


def test_spec_errors(driving_env):
    assert parse_specs("", driving_env) == []
    with pytest.raises(DuplicateDeclaration):
        parse_specs("LTLSPEC NAME a := G Pedestrian\nLTLSPEC NAME a := F Pedestrian", driving_env)
    with pytest.raises(UndeclaredVariable):
        parse_specs("LTLSPEC NAME a := G Nobody", driving_env)
    with pytest.raises(SmvSyntaxError):
        parse_specs("LTLSPEC NAME a := G (Pedestrian U)", driving_env)


def test_arm_specs_as_printed_and_corrected():
    env = parse_model(read(SPECS / "arm_decls.smv")).variables
    printed = parse_specs(read(SPECS / "arm.ltl"), env)[0].formula
    corrected = parse_specs(read(SPECS / "arm_corrected.ltl"), env)[0].formula
    assert printed != corrected
    assert "X" in str(printed) and "X" in str(corrected)


@settings(max_examples=400, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_round_trip_property(seed):
    m = gen_model(random.Random(seed))
    text = pretty_print(m)
    again = parse_model(text)
    assert again == m
    assert pretty_print(again) == text
