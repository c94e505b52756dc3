import csv
import io

import pytest

from conftest import DATA, PLANS, SPECS
from ltlprompt.cli import SEMANTICS_NOTE, claim_notice, main, oracle_check, plan_claims
from ltlprompt.ltl.lasso import Verdict

DRIVING = ["--specs", str(SPECS / "driving.ltl"), "--decls", str(SPECS / "driving_decls.smv")]


def run(argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


def test_verify_unsafe_plan_exits_one():
    code, out = run(["verify", PLANS / "unsafe_plan.smv", *DRIVING])
    assert code == 1
    assert any(line.startswith("spec3") and "Violated" in line for line in out.splitlines())
    assert "-- counterexample for spec3" in out
    assert "notice" not in out  # the header claim agrees with the verdicts


def test_verify_safe_plan_reports_computed_verdicts_with_notice():
    code, out = run(["verify", PLANS / "safe_plan.smv", *DRIVING, "--no-traces"])
    assert code == 1
    assert "counterexample" not in out
    assert "notice: the plan header claims every specification holds" in out
    assert SEMANTICS_NOTE in out


def test_verify_subset_that_holds_exits_zero():
    code, out = run(["verify", PLANS / "safe_plan.smv", *DRIVING, "--specs-subset", "spec1,spec5"])
    assert code == 0 and "violated 0/2" in out


def test_verify_missing_spec_file():
    code, _ = run(["verify", PLANS / "safe_plan.smv", "--specs", "/nonexistent.ltl"])
    assert code == 2


def test_verify_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.smv"
    bad.write_text("MODULE main\nVAR\n  a : boolean\n")
    code, _ = run(["verify", bad, *DRIVING])
    assert code == 2 and "error:" in capsys.readouterr().err


def test_verify_unknown_spec_in_subset():
    code, _ = run(["verify", PLANS / "safe_plan.smv", *DRIVING, "--specs-subset", "spec99"])
    assert code == 2


def test_claims_parsing():
    assert plan_claims("-- @claim: holds\nMODULE main") == ("holds", [])
    assert plan_claims("-- @claim: violates spec3, spec4\n") == ("violates", ["spec3", "spec4"])
    assert plan_claims("MODULE main") is None
    assert claim_notice(("violates", ["spec3"]), {"spec3": "Violated"}) is None
    assert "spec3" in claim_notice(("violates", ["spec3"]), {"spec3": "Holds"})


def test_optimize_curriculum(tmp_path):
    out_dir = tmp_path / "run"
    code, out = run(["optimize", DATA / "curriculum" / "config.yaml", "--out", out_dir])
    assert code == 0 and "test score 1.000" in out
    rows = list(csv.DictReader((out_dir / "summary.csv").open()))
    assert rows[-1]["validation_score"] == "1.000000"
    for name in ("run.jsonl", "run.json", "safety_score.png", "checkpoints/v0000/convert.txt"):
        assert (out_dir / name).is_file()


def test_optimize_zero_steps(tmp_path):
    code, _ = run(["optimize", DATA / "curriculum" / "config.yaml", "--steps", "0", "--out", tmp_path])
    assert code == 0
    assert len((tmp_path / "summary.csv").read_text().splitlines()) == 2
    assert [p.name for p in (tmp_path / "checkpoints").iterdir()] == ["v0000"]


def write_config(tmp_path, text):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text.replace("CUR", str(DATA / "curriculum")))
    return cfg


def test_optimize_missing_prompt_store(tmp_path, capsys):
    cfg = write_config(tmp_path, "backend: {kind: scripted, rules: CUR/rules.yaml}\n"
                                 "paths: {prompts: CUR/nowhere, tasks: [CUR/tasks/school.yaml]}\n")
    code, _ = run(["optimize", cfg, "--out", tmp_path / "o"])
    assert code == 2 and "nowhere" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "trainer: {steps: 1, learning_rate: 3}\n"
                                 "paths: {prompts: CUR/prompts, tasks: [CUR/tasks/school.yaml]}\n")
    code, _ = run(["optimize", cfg])
    assert code == 2 and "learning_rate" in capsys.readouterr().err


def test_optimize_backend_exhaustion(tmp_path):
    cfg = write_config(tmp_path, "backend: {kind: replay, fixtures: %s}\nplanner: {strategy: two}\n"
                                 "trainer: {steps: 1, batch_size: 2}\n"
                                 "paths: {prompts: CUR/prompts, tasks: [CUR/tasks/school.yaml]}\n"
                                 % (DATA / "fixtures" / "jackal.jsonl"))
    code, _ = run(["optimize", cfg, "--out", tmp_path / "o"])
    assert code == 1


def test_evaluate_initial_vs_optimized(tmp_path):
    code, out = run(["evaluate", DATA / "driving.yaml", "--prompt-version", "0", "--prompt-version", "1",
                     "--out", tmp_path])
    assert code == 0
    assert "[v0000] mean safety score 0.400" in out and "[v0001] mean safety score 0.667" in out
    rows = list(csv.DictReader((tmp_path / "evaluation.csv").open()))
    means = {r["prompts"]: float(r["safety_score"]) for r in rows if r["task"] == "mean"}
    assert means["v0001"] >= means["v0000"]
    assert (tmp_path / "evaluation.png").is_file()


def test_evaluate_with_demonstrations(tmp_path):
    code, out = run(["evaluate", DATA / "driving.yaml", "--prompt-version", "1", "--icl", DATA / "demos.yaml",
                     "--out", tmp_path])
    assert code == 0 and "[v0001+icl]" in out


def test_evaluate_unknown_version(tmp_path):
    code, _ = run(["evaluate", DATA / "driving.yaml", "--prompt-version", "7", "--out", tmp_path])
    assert code == 2


def test_oracle_check_vacuous():
    code, out = run(["oracle-check", "--n", "0"])
    assert code == 0 and "instances 0" in out


def test_oracle_check_catches_injected_bug():
    def always_holds(ts, phi):
        return Verdict("Holds")

    buf = io.StringIO()
    assert oracle_check(40, 7, 3, buf, checker=always_holds) == 1
    text = buf.getvalue()
    assert "mismatches 0" not in text and "check: Holds" in text


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
