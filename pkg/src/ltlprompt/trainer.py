"""Prompt optimization loop, batch evaluation, and in-context demonstrations."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from ltlprompt.autodiff import (
    LlmNode, NodeCallError, Parameter, TextualGradient, aggregate, backward, load_parameter,
    optimizer_step,
)
from ltlprompt.backends import Backend, BackendError
from ltlprompt.planner import DATA_DIR, PlanResult, Strategy, TaskSpec, plan_gen
from ltlprompt.store import PromptStore
from ltlprompt.ts import CompileConfig
from ltlprompt.verify import (
    FeedbackText, SpecCheckError, VerificationReport, failed_report, render_feedback, verify_text,
)

ALWAYS = "always"
NO_WORSE = "validation-no-worse"
ACCEPT_RULES = (ALWAYS, NO_WORSE)
ROLES = ("forward", "backward", "optimizer")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 10
    batch_size: int = 20
    strategy: Strategy = Strategy()
    validation_tasks: Tuple[TaskSpec, ...] = ()
    test_tasks: Tuple[TaskSpec, ...] = ()
    accept_rule: str = NO_WORSE
    seed: int = 0
    max_repairs: int = 1
    include_traces: bool = True
    compile: CompileConfig = CompileConfig()
    max_tokens: int = 2048
    candidates: int = 1

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.accept_rule not in ACCEPT_RULES:
            raise ValueError(f"accept_rule must be one of {ACCEPT_RULES}")
        if self.candidates < 1:
            raise ValueError("candidates must be positive")

    def snapshot(self) -> dict:
        return {"steps": self.steps, "batch_size": self.batch_size,
                "strategy": {"kind": self.strategy.kind, "max_steps": self.strategy.max_steps,
                             "done_sentinel": self.strategy.done_sentinel},
                "validation_tasks": [t.id for t in self.validation_tasks],
                "test_tasks": [t.id for t in self.test_tasks],
                "accept_rule": self.accept_rule, "seed": self.seed,
                "max_repairs": self.max_repairs, "include_traces": self.include_traces,
                "state_cap": self.compile.state_cap, "int_range": list(self.compile.int_range),
                "max_tokens": self.max_tokens, "candidates": self.candidates}


def _roles(backends: Union[Backend, Mapping[str, Backend]]) -> Dict[str, Backend]:
    """Forward, backward and optimizer backends; the latter two default to forward."""
    if not isinstance(backends, Mapping):
        return {r: backends for r in ROLES}
    if "forward" not in backends:
        raise KeyError("a 'forward' backend is required")
    return {r: backends.get(r, backends["forward"]) for r in ROLES}


def meta_template(name: str) -> Parameter:
    return load_parameter(DATA_DIR / "meta" / f"{name}.txt")


# -- one sample ----------------------------------------------------------------


@dataclass
class SampleResult:
    task_id: str
    report: VerificationReport
    feedback: FeedbackText
    plan: Optional[PlanResult] = None
    error: Optional[str] = None
    gradients: List[TextualGradient] = field(default_factory=list)

    @property
    def loss(self) -> Fraction:
        return self.report.loss

    @property
    def score(self) -> Fraction:
        return self.report.safety_score

    @property
    def flagged(self) -> bool:
        return self.error is not None or self.report.diagnostic is not None


class Verifier:
    """verify_text with a per-run cache keyed by plan text and suite."""

    def __init__(self, config: CompileConfig = CompileConfig()):
        self.config = config
        self._cache: Dict[tuple, VerificationReport] = {}

    def __call__(self, model_text: str, task: TaskSpec) -> VerificationReport:
        key = (model_text, tuple(s.name for s in task.specs), str(task.spec_file), task.proposition_env)
        hit = self._cache.get(key)
        if hit is None:
            try:
                hit, _ = verify_text(model_text, task.specs, task.proposition_env, self.config)
            except SpecCheckError as exc:
                hit = failed_report(task.specs, f"check error: {exc}")
            self._cache[key] = hit
        return hit


def run_sample(task: TaskSpec, params: Mapping[str, Parameter], strategy: Strategy,
               backends: Mapping[str, Backend], verifier: Verifier, max_repairs: int = 1,
               include_traces: bool = True, max_tokens: int = 2048) -> SampleResult:
    """plan_gen, then verification; the feedback is recorded as the ``verify`` node's output."""
    try:
        plan = plan_gen(task, params, strategy, backends["forward"], max_repairs,
                        verifier.config.int_range, max_tokens)
    except (BackendError, NodeCallError) as exc:
        report = failed_report(task.specs, f"backend error: {exc}")
        return SampleResult(task.id, report, render_feedback(report), None, str(exc))
    if plan.ok:
        report = verifier(plan.model_text, task)
    else:
        report = failed_report(task.specs, "parse error: " + "; ".join(plan.diagnostics))
    feedback = render_feedback(report, plan.model_text, include_traces)
    plan.graph.functional("verify", lambda _text, fb=feedback.render(): fb)
    plan.graph.connect("extract", "verify")
    plan.session.apply("verify", plan.model_text)
    return SampleResult(task.id, report, feedback, plan)


def _mean(xs: Sequence[Fraction]) -> Fraction:
    return sum(xs, Fraction(0)) / len(xs)


def evaluate(prompts: Mapping[str, Parameter], tasks: Sequence[TaskSpec], strategy: Strategy,
             backends: Union[Backend, Mapping[str, Backend]], config: Optional[TrainConfig] = None,
             verifier: Optional[Verifier] = None) -> Tuple[Fraction, List[SampleResult]]:
    """Mean safety score over ``tasks``; failures count as loss 1 and are flagged."""
    if not tasks:
        raise ValueError("cannot evaluate an empty task list")
    config = config or TrainConfig(strategy=strategy)
    verifier = verifier or Verifier(config.compile)
    roles = _roles(backends)
    samples = [run_sample(t, prompts, strategy, roles, verifier, config.max_repairs,
                          config.include_traces, config.max_tokens) for t in tasks]
    return _mean([s.score for s in samples]), samples


# -- training ------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    task_ids: List[str]
    samples: List[SampleResult]
    mean_loss: Fraction
    versions: Dict[str, int]
    validation_score: Fraction
    proposed: bool = False
    accepted: bool = False
    candidate_validation: Optional[Fraction] = None
    checkpoint: int = 0
    failing: int = 0
    backward_calls: int = 0
    forward_llm_calls: int = 0
    errors: List[str] = field(default_factory=list)
    batch_versions: Dict[str, int] = field(default_factory=dict)

    @property
    def mean_safety_score(self) -> Fraction:
        return 1 - self.mean_loss


@dataclass
class OptimizationRun:
    config: TrainConfig
    records: List[StepRecord]
    checkpoints: List[Tuple[Dict[str, Parameter], Fraction]]
    best_checkpoint: int
    test_score: Optional[Fraction] = None
    test_samples: List[SampleResult] = field(default_factory=list)

    @property
    def best_params(self) -> Dict[str, Parameter]:
        return self.checkpoints[self.best_checkpoint][0]

    @property
    def best_validation(self) -> Fraction:
        return self.checkpoints[self.best_checkpoint][1]

    @property
    def final_params(self) -> Dict[str, Parameter]:
        return self.checkpoints[-1][0]


def _merge_feedback(per_sample: Sequence[Tuple[int, str, List[TextualGradient]]]) -> str:
    """One block per failing sample, each holding that sample's aggregated critiques."""
    blocks = []
    for k, task_id, grads in per_sample:
        by_node: Dict[str, List[TextualGradient]] = {}
        for g in grads:
            by_node.setdefault(g.node_id, []).append(g)
        body = "\n\n".join(aggregate(gs) for _, gs in sorted(by_node.items()))
        blocks.append(f"[sample {k}: {task_id}]\n{body}")
    return "\n\n".join(blocks)


def _propose(params: Mapping[str, Parameter], per_param, optimizer: Backend, template: Parameter,
             config: TrainConfig, index: int, errors: List[str]) -> Dict[str, Parameter]:
    """One candidate parameter set; proposals after the first are numbered in the feedback."""
    candidate = dict(params)
    for pid in sorted(per_param):
        grads = [g for _, _, gs in per_param[pid] for g in gs]
        feedback = _merge_feedback(per_param[pid])
        if config.candidates > 1:
            feedback += f"\n\n(Proposal {index + 1} of {config.candidates}.)"
        try:
            candidate[pid] = optimizer_step(params[pid], grads, optimizer, template, feedback,
                                            config.max_tokens)
        except (BackendError, NodeCallError) as exc:
            errors.append(f"optimizer for '{pid}' failed: {exc}")
    return candidate


def train(tasks: Sequence[TaskSpec], prompts0: Mapping[str, Parameter], config: TrainConfig,
          backends: Union[Backend, Mapping[str, Backend]]) -> OptimizationRun:
    """Optimize the trainable prompts against the verification loss.

    Record 0 evaluates the initial prompts on a sampled batch. Each later step
    samples a batch (seeded, with replacement), back-propagates the feedback
    of failing samples only, proposes one update per trainable parameter, and
    accepts it according to ``config.accept_rule``. Validation defaults to the
    training pool when no validation tasks are given.
    """
    if not tasks:
        raise ValueError("no training tasks")
    for pid in config.strategy.parameters:
        if pid not in prompts0:
            raise KeyError(f"strategy '{config.strategy.kind}' needs prompt parameter '{pid}'")
    roles = _roles(backends)
    rng = random.Random(config.seed)
    verifier = Verifier(config.compile)
    validation = tuple(config.validation_tasks) or tuple(tasks)
    back_t, opt_t = meta_template("backward"), meta_template("optimizer")

    def run(params, batch):
        return [run_sample(t, params, config.strategy, roles, verifier, config.max_repairs,
                           config.include_traces, config.max_tokens) for t in batch]

    params = dict(prompts0)
    val_score, _ = evaluate(params, validation, config.strategy, roles, config, verifier)
    checkpoints = [(dict(params), val_score)]
    records: List[StepRecord] = []
    for step in range(config.steps + 1):
        batch = [tasks[rng.randrange(len(tasks))] for _ in range(config.batch_size)]
        samples = run(params, batch)
        rec = StepRecord(step, [t.id for t in batch], samples, _mean([s.loss for s in samples]),
                         {k: p.version for k, p in sorted(params.items())}, val_score,
                         checkpoint=len(checkpoints) - 1,
                         forward_llm_calls=sum(s.plan.llm_calls for s in samples if s.plan))
        rec.errors = [f"sample {k}: {s.error}" for k, s in enumerate(samples) if s.error]
        rec.batch_versions = dict(rec.versions)
        records.append(rec)
        if step == 0:
            continue
        per_param: Dict[str, List[Tuple[int, str, List[TextualGradient]]]] = {}
        for k, s in enumerate(samples):
            if s.loss == 0 or s.plan is None:
                continue
            rec.failing += 1
            graph = s.plan.graph
            try:
                grads = backward(graph, s.plan.session.tape, s.feedback, roles["backward"], params,
                                 template=back_t, max_tokens=config.max_tokens)
            except (BackendError, NodeCallError) as exc:
                rec.errors.append(f"sample {k}: backward failed: {exc}")
                continue
            s.gradients = grads
            mine: Dict[str, List[TextualGradient]] = {}
            for g in grads:
                node = graph.nodes[g.node_id]
                if not isinstance(node, LlmNode):
                    continue
                rec.backward_calls += 1
                if params[node.parameter_id].trainable:
                    mine.setdefault(node.parameter_id, []).append(g)
            for pid, gs in mine.items():
                per_param.setdefault(pid, []).append((k, s.task_id, gs))
        proposals: List[Tuple[Dict[str, Parameter], Fraction]] = []
        for i in range(config.candidates):
            candidate = _propose(params, per_param, roles["optimizer"], opt_t, config, i, rec.errors)
            if all(candidate[k] is params[k] for k in params):
                continue
            if any(all(c[k] == candidate[k] for k in params) for c, _ in proposals):
                continue
            cand_val, _ = evaluate(candidate, validation, config.strategy, roles, config, verifier)
            proposals.append((candidate, cand_val))
        if not proposals:
            continue
        rec.proposed = True
        candidate, cand_val = max(proposals, key=lambda cv: cv[1])
        rec.candidate_validation = cand_val
        if config.accept_rule == ALWAYS or cand_val >= val_score:
            rec.accepted = True
            params, val_score = candidate, cand_val
            checkpoints.append((dict(params), val_score))
            rec.versions = {k: p.version for k, p in sorted(params.items())}
            rec.validation_score = val_score
            rec.checkpoint = len(checkpoints) - 1
    best = max(range(len(checkpoints)), key=lambda i: (checkpoints[i][1], i))
    result = OptimizationRun(config, records, checkpoints, best)
    if config.test_tasks:
        result.test_score, result.test_samples = evaluate(
            result.best_params, config.test_tasks, config.strategy, roles, config, verifier)
    return result


# -- serialization -------------------------------------------------------------


def frac(x: Optional[Fraction]) -> Optional[str]:
    return None if x is None else f"{x.numerator}/{x.denominator}"


def dec(x: Optional[Fraction]) -> str:
    return "" if x is None else f"{float(x):.6f}"


def sample_row(step: int, k: int, s: SampleResult, versions: Mapping[str, int]) -> dict:
    return {"kind": "sample", "step": step, "sample": k, "task": s.task_id,
            "loss": frac(s.loss), "score": frac(s.score), "versions": dict(versions),
            "violated": s.report.violated, "diagnostic": s.report.diagnostic, "error": s.error,
            "calls": [{"node": c.node_id, "t": c.t, "input": c.input_text, "output": c.output_text}
                      for c in (s.plan.call_records if s.plan else [])],
            "gradients": [{"node": g.node_id, "t": g.t, "source": g.source, "feedback": g.feedback}
                          for g in s.gradients]}


def summary_rows(run: OptimizationRun) -> List[dict]:
    return [{"step": r.step, "mean_loss": dec(r.mean_loss), "mean_safety_score": dec(r.mean_safety_score),
             "validation_score": dec(r.validation_score), "proposed": int(r.proposed),
             "accepted": int(r.accepted), "checkpoint": r.checkpoint} for r in run.records]


def write_run(run: OptimizationRun, out_dir: Union[str, Path]) -> Path:
    """run.jsonl, summary.csv, run.json and one checkpoint per accepted parameter set.

    Every file is a pure function of the run, so repeated runs under a fixed
    seed and deterministic backends produce identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for r in run.records:
        for k, s in enumerate(r.samples):
            lines.append(sample_row(r.step, k, s, r.batch_versions))
        lines.append({"kind": "step", "step": r.step, "mean_loss": frac(r.mean_loss),
                      "mean_safety_score": frac(r.mean_safety_score),
                      "validation_score": frac(r.validation_score), "versions": r.versions,
                      "proposed": r.proposed, "accepted": r.accepted,
                      "candidate_validation": frac(r.candidate_validation),
                      "checkpoint": r.checkpoint, "failing": r.failing,
                      "backward_calls": r.backward_calls, "forward_llm_calls": r.forward_llm_calls,
                      "errors": r.errors})
    (out / "run.jsonl").write_text("".join(json.dumps(l, sort_keys=True) + "\n" for l in lines),
                                   encoding="utf-8")
    rows = summary_rows(run)
    header = list(rows[0])
    csv = [",".join(header)] + [",".join(str(row[h]) for h in header) for row in rows]
    (out / "summary.csv").write_text("\n".join(csv) + "\n", encoding="utf-8")
    store = PromptStore(out / "checkpoints")
    for i, (params, _) in enumerate(run.checkpoints):
        store.save(params, i)
    meta = {"config": run.config.snapshot(),
            "checkpoints": [{"version": i, "validation_score": frac(v)}
                            for i, (_, v) in enumerate(run.checkpoints)],
            "best_checkpoint": run.best_checkpoint, "best_validation": frac(run.best_validation),
            "test_score": frac(run.test_score),
            "test_tasks": [{"task": s.task_id, "score": frac(s.score), "flagged": s.flagged}
                           for s in run.test_samples]}
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


# -- in-context demonstrations ---------------------------------------------------

DEMO_HEADER = "Examples of tasks with plans that satisfy every specification:"
PLAN_PARAMS = ("plan", "convert")


@dataclass(frozen=True)
class Demonstration:
    task: str
    plan: str


def render_demos(demos: Sequence[Demonstration]) -> str:
    parts = [DEMO_HEADER]
    for i, d in enumerate(demos, 1):
        parts.append(f"Example {i}\nTask: {d.task}\nPlan:\n```\n{d.plan.strip()}\n```")
    return "\n\n".join(parts) + "\n\n"


def icl_mode(prompts: Mapping[str, Parameter], demonstrations: Sequence[Demonstration],
             targets: Sequence[str] = PLAN_PARAMS) -> Dict[str, Parameter]:
    """Prepend a demo block to the plan-producing templates; versions and flags are kept."""
    out = dict(prompts)
    if not demonstrations:
        return out
    block = render_demos(demonstrations)
    for pid in targets:
        if pid in out:
            out[pid] = replace(out[pid], text=block + out[pid].text)
    return out


def load_demos(path: Union[str, Path]) -> List[Demonstration]:
    """YAML list of ``{task, plan}`` or ``{task, plan_file}`` (relative to the list)."""
    path = Path(path)
    items = yaml.safe_load(path.read_text(encoding="utf-8")) or []
    demos = []
    for item in items:
        plan = item.get("plan")
        if plan is None:
            plan = (path.parent / item["plan_file"]).read_text(encoding="utf-8")
        demos.append(Demonstration(str(item["task"]), plan))
    return demos
