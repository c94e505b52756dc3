import pytest

from conftest import DATA, PLANS, read
from ltlprompt.autodiff import Parameter, UnresolvedPlaceholder
from ltlprompt.backends import FixtureStore, ReplayBackend, ScriptedBackend
from ltlprompt.lang import SmvModel
from ltlprompt.planner import (
    ExtractionError, Strategy, extract_smv, load_task, plan_gen, repair_loop,
)
from ltlprompt.store import PromptStore

PLAN = read(PLANS / "plan_example.smv")
SAFE = read(PLANS / "safe_plan.smv")


@pytest.fixture(scope="module")
def task():
    return load_task(DATA / "tasks" / "driving_left.yaml")


def fenced(text, lang="smv"):
    return f"Here is the plan.\n```{lang}\n{text}```\nDone."


PROMPTS = {"plan": Parameter("plan", "Plan for {{task}}.\n{{nusmv_file}}"),
           "steps": Parameter("steps", "Steps for {{task}}."),
           "step": Parameter("step", "Next step for {{task}} after:\n{{previous_steps}}"),
           "convert": Parameter("convert", "Convert:\n{{steps}}\n{{nusmv_file}}")}


def test_extract_fenced_block():
    assert extract_smv(fenced("MODULE main\nVAR\n  a : boolean;\n")) == "MODULE main\nVAR\n  a : boolean;\n"


def test_extract_bare_module():
    assert extract_smv("Sure! Here you go:\nMODULE driving_task\nVAR\n  a : boolean;\n").startswith(
        "MODULE driving_task")


def test_extract_unterminated_fence():
    assert extract_smv("```\nMODULE main\n") == "MODULE main\n"


def test_extract_prose_fails():
    with pytest.raises(ExtractionError):
        extract_smv("I cannot help with that.")


def test_single_iteration(task):
    b = ScriptedBackend.from_dicts([{"contains": "Plan for", "respond": fenced(PLAN)}])
    r = plan_gen(task, PROMPTS, Strategy("single"), b)
    assert isinstance(r.parsed, SmvModel) and r.diagnostics == []
    assert r.llm_calls == 1


def test_two_iteration(task):
    b = ScriptedBackend.from_dicts([{"contains": "Steps for", "respond": "1. stop"},
                                    {"contains": "Convert:\n1. stop", "respond": fenced(SAFE)}])
    r = plan_gen(task, PROMPTS, Strategy("two"), b)
    assert r.ok and r.llm_calls == 2 and r.steps_text == "1. stop"


def test_multi_sentinel_on_first_call(task):
    b = ScriptedBackend.from_dicts([{"contains": "Next step", "respond": "The steps are already complete."},
                                    {"contains": "Convert", "respond": fenced(SAFE)}])
    r = plan_gen(task, PROMPTS, Strategy("multi"), b)
    assert [c.node_id for c in r.call_records if c.node_id != "extract"] == ["step", "convert"]
    assert r.steps_text == ""


def test_multi_appends_one_step_per_call(task):
    b = ScriptedBackend.from_dicts([
        {"contains": "Convert", "respond": fenced(SAFE)},
        {"contains": "1. look\n2. stop", "respond": "Steps were complete"},
        {"contains": "1. look", "respond": "2. stop"},
        {"contains": "Next step", "respond": "1. look\n"}])
    r = plan_gen(task, PROMPTS, Strategy("multi"), b)
    assert r.steps_text == "1. look\n2. stop"
    assert [c.t for c in r.session.tape.calls("step")] == [1, 2, 3]


@pytest.mark.parametrize("limit", [1, 3])
def test_multi_respects_max_steps(task, limit):
    b = ScriptedBackend.from_dicts([{"contains": "Next step", "respond": "another"},
                                    {"contains": "Convert", "respond": fenced(SAFE)}])
    r = plan_gen(task, PROMPTS, Strategy("multi", max_steps=limit), b)
    assert r.llm_calls == limit + 1


def test_missing_template_rejected(task):
    with pytest.raises(KeyError):
        plan_gen(task, {"plan": PROMPTS["plan"]}, Strategy("two"), ScriptedBackend([]))


def test_unresolved_placeholder_never_sent(task):
    b = ScriptedBackend.from_dicts([{"contains": "", "respond": "x"}])
    with pytest.raises(UnresolvedPlaceholder):
        plan_gen(task, {"plan": Parameter("plan", "{{mystery}}")}, Strategy("single"), b)
    assert b.calls == []


BROKEN = SAFE.replace("esac;", "", 1)


def repair_backend(first=BROKEN, second=SAFE):
    return ScriptedBackend.from_dicts([{"contains": "could not be parsed", "respond": fenced(second)},
                                       {"contains": "Plan for", "respond": fenced(first)}])


def test_repair_fixes_missing_esac(task):
    r = plan_gen(task, PROMPTS, Strategy("single"), repair_backend())
    assert r.ok and r.repairs == 1 and r.llm_calls == 2
    assert [c.node_id for c in r.call_records] == ["plan", "extract", "repair", "extract"]
    assert "repair" in r.graph.nodes


def test_no_repairs_returns_first_attempt(task):
    r = plan_gen(task, PROMPTS, Strategy("single"), repair_backend(), max_repairs=0)
    assert not r.ok and r.llm_calls == 1 and r.diagnostics
    assert repair_loop(task, PROMPTS, repair_backend(), r, 0) is r


def test_persistent_failure_is_graceful(task):
    r = plan_gen(task, PROMPTS, Strategy("single"), repair_backend(BROKEN, BROKEN))
    assert not r.ok and r.parsed is None and r.diagnostics and r.llm_calls == 2


def test_extraction_failure_reported(task):
    b = ScriptedBackend.from_dicts([{"contains": "could not be parsed", "respond": "still no code"},
                                    {"contains": "Plan for", "respond": "no code at all"}])
    r = plan_gen(task, PROMPTS, Strategy("single"), b)
    assert not r.ok and "no SMV model found" in r.diagnostics[0]


def test_jackal_two_iteration_replay():
    task = load_task(DATA / "tasks" / "jackal.yaml")
    prompts = PromptStore(DATA / "prompts" / "jackal").load(0)
    backend = ReplayBackend(FixtureStore(DATA / "fixtures" / "jackal.jsonl"))
    r = plan_gen(task, prompts, Strategy("two"), backend)
    assert "pedestrian" in r.steps_text.lower()
    assert r.ok and "Pedestrian = FALSE & Distance < 5: Move_forward" in r.model_text
