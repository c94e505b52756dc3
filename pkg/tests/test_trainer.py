import json
from fractions import Fraction

import pytest

from conftest import DATA, PLANS, read
from ltlprompt.backends import ReplayBackend, ScriptedBackend
from ltlprompt.planner import Strategy, load_task
from ltlprompt.store import PromptStore
from ltlprompt.trainer import (
    ALWAYS, DEMO_HEADER, TrainConfig, evaluate, icl_mode, load_demos, train, write_run,
)

CUR = DATA / "curriculum"
TWO = Strategy("two")


@pytest.fixture(scope="module")
def cur_tasks():
    return tuple(load_task(CUR / "tasks" / f"{n}.yaml") for n in ("crosswalk", "school", "arterial"))


@pytest.fixture(scope="module")
def cur_prompts():
    return PromptStore(CUR / "prompts").load(0)


def cur_backend():
    return ScriptedBackend.from_file(CUR / "rules.yaml")


def cur_config(tasks, **kw):
    base = dict(steps=10, batch_size=20, strategy=TWO, validation_tasks=tasks, test_tasks=tasks, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def cur_run(cur_tasks, cur_prompts):
    return train(cur_tasks, cur_prompts, cur_config(cur_tasks), cur_backend())


def test_curriculum_reaches_full_score(cur_run):
    assert cur_run.records[0].validation_score == Fraction(1, 4)
    assert cur_run.best_validation == 1 and cur_run.test_score == 1
    assert cur_run.best_params["convert"].version == 3
    assert cur_run.best_params["steps"].version == 0  # frozen template never changes


def test_validation_gate_is_monotone(cur_run):
    vals = [r.validation_score for r in cur_run.records]
    assert vals == sorted(vals)
    for r in cur_run.records:
        if r.proposed and not r.accepted:
            assert r.candidate_validation < r.validation_score


def test_versions_step_by_one_on_acceptance(cur_run):
    prev = cur_run.records[0].versions["convert"]
    for r in cur_run.records[1:]:
        cur = r.versions["convert"]
        assert cur == prev + (1 if r.accepted else 0)
        prev = cur


def test_selective_backward_accounting(cur_run):
    for r in cur_run.records:
        failing = [s for s in r.samples if s.loss > 0]
        if r.step == 0:
            assert r.backward_calls == 0
            continue
        assert r.failing == len(failing)
        assert r.backward_calls <= sum(s.plan.llm_calls for s in failing)
        assert all(not s.gradients for s in r.samples if s.loss == 0)


def test_zero_steps_is_baseline_only(cur_tasks, cur_prompts):
    run = train(cur_tasks, cur_prompts, cur_config(cur_tasks, steps=0), cur_backend())
    assert len(run.records) == 1 and len(run.checkpoints) == 1
    assert run.final_params == dict(cur_prompts)


def test_always_rule_accepts_every_proposal(cur_tasks, cur_prompts):
    run = train(cur_tasks, cur_prompts, cur_config(cur_tasks, steps=4, accept_rule=ALWAYS), cur_backend())
    assert all(r.accepted == r.proposed for r in run.records)


def test_best_of_k_with_identical_proposals(cur_tasks, cur_prompts, cur_run):
    run = train(cur_tasks, cur_prompts, cur_config(cur_tasks, candidates=3), cur_backend())
    assert [r.validation_score for r in run.records] == [r.validation_score for r in cur_run.records]


def test_run_files_are_byte_identical(tmp_path, cur_tasks, cur_prompts):
    outs = []
    for i in range(2):
        run = train(cur_tasks, cur_prompts, cur_config(cur_tasks, steps=4), cur_backend())
        outs.append(write_run(run, tmp_path / f"r{i}"))
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_run_log_carries_traces(tmp_path, cur_run):
    out = write_run(cur_run, tmp_path)
    rows = [json.loads(line) for line in (out / "run.jsonl").read_text().splitlines()]
    samples = [r for r in rows if r["kind"] == "sample"]
    assert all(r["calls"] for r in samples)
    failing = [r for r in samples if r["step"] > 0 and r["loss"] != "0/1"]
    assert failing and all(r["gradients"] for r in failing)
    assert {c["node"] for c in samples[0]["calls"]} == {"steps", "convert", "extract", "verify"}
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "step,mean_loss,mean_safety_score,validation_score,proposed,accepted,checkpoint"
    assert len(summary) == len(cur_run.records) + 1


def test_train_requires_strategy_templates(cur_tasks, cur_prompts):
    with pytest.raises(KeyError):
        train(cur_tasks, {"steps": cur_prompts["steps"]}, cur_config(cur_tasks), cur_backend())


def test_evaluate_empty_task_list(cur_prompts):
    with pytest.raises(ValueError):
        evaluate(cur_prompts, [], TWO, cur_backend())


def test_evaluate_single_task(cur_tasks, cur_prompts):
    mean, samples = evaluate(cur_prompts, cur_tasks[:1], TWO, cur_backend())
    assert len(samples) == 1 and mean == samples[0].score == Fraction(1, 4)


def test_evaluate_scores_are_per_task(cur_tasks, cur_prompts):
    _, together = evaluate(cur_prompts, cur_tasks, TWO, cur_backend())
    for t, s in zip(cur_tasks, together):
        _, alone = evaluate(cur_prompts, [t], TWO, cur_backend())
        assert alone[0].score == s.score


def test_evaluate_parse_failure_counts_as_zero(cur_tasks, cur_prompts):
    junk = ScriptedBackend.from_dicts([{"pattern": ".", "respond": "no model here"}])
    mean, samples = evaluate(cur_prompts, cur_tasks[:2], TWO, junk)
    assert mean == 0 and all(s.flagged for s in samples)


def test_evaluate_backend_failure_is_flagged(cur_tasks, cur_prompts):
    mean, samples = evaluate(cur_prompts, cur_tasks[:1], TWO, ScriptedBackend([]))
    assert mean == 0 and samples[0].error


@pytest.fixture(scope="module")
def driving():
    tasks = [load_task(DATA / "tasks" / f"driving_{n}.yaml") for n in ("right", "straight", "left", "stop")]
    return tasks, PromptStore(DATA / "prompts" / "driving"), ReplayBackend(DATA / "fixtures" / "driving.jsonl")


def test_replay_initial_vs_optimized(driving):
    tasks, store, backend = driving
    v0, _ = evaluate(store.load(0), tasks, Strategy("multi"), backend)
    v1, _ = evaluate(store.load(1), tasks, Strategy("multi"), backend)
    assert (v0, v1) == (Fraction(2, 5), Fraction(2, 3))


def test_icl_without_demos_is_identity(cur_prompts):
    assert icl_mode(cur_prompts, []) == dict(cur_prompts)


def test_icl_prepends_demos_to_plan_templates(cur_prompts):
    demos = load_demos(DATA / "demos.yaml")
    assert len(demos) == 2 and demos[0].plan == read(PLANS / "jackal_plan.smv")
    out = icl_mode(cur_prompts, demos)
    assert out["steps"] == cur_prompts["steps"]
    conv = out["convert"]
    assert conv.text.startswith(DEMO_HEADER) and conv.text.endswith(cur_prompts["convert"].text)
    assert demos[1].task in conv.text and conv.version == cur_prompts["convert"].version


def test_icl_replay_score(driving):
    tasks, store, backend = driving
    demos = load_demos(DATA / "demos.yaml")
    mean, _ = evaluate(icl_mode(store.load(1), demos), tasks, Strategy("multi"), backend)
    assert mean == Fraction(2, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=-1)
    with pytest.raises(ValueError):
        TrainConfig(accept_rule="sometimes")
    with pytest.raises(ValueError):
        TrainConfig(candidates=0)
