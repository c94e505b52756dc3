"""Plan generation: prompting strategies, SMV extraction, and parse repair."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from ltlprompt.autodiff import Graph, Parameter, Session, Tape, load_parameter
from ltlprompt.backends import Backend
from ltlprompt.lang import NamedSpec, SmvError, SmvModel, VarDecl, parse_model, parse_specs
from ltlprompt.lang.printer import pretty_print

DEFAULT_SENTINEL = r"steps\s+(?:are|were)\s+(?:already\s+)?complete"
DATA_DIR = Path(__file__).parent / "data"

SINGLE, TWO, MULTI = "single", "two", "multi"
# trainable prompt parameters each strategy needs, in call order
STRATEGY_PARAMS = {SINGLE: ("plan",), TWO: ("steps", "convert"), MULTI: ("step", "convert")}


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str = MULTI
    max_steps: int = 10
    done_sentinel: str = DEFAULT_SENTINEL

    def __post_init__(self):
        if self.kind not in STRATEGY_PARAMS:
            raise ValueError(f"unknown strategy '{self.kind}'")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    def done(self, text: str) -> bool:
        return re.search(self.done_sentinel, text, re.IGNORECASE) is not None

    @property
    def parameters(self) -> Tuple[str, ...]:
        return STRATEGY_PARAMS[self.kind]


@dataclass(frozen=True)
class TaskSpec:
    id: str
    description: str
    proposition_env: Tuple[VarDecl, ...]
    spec_file: Path
    specs: Tuple[NamedSpec, ...] = ()
    module_name: str = "main"

    def skeleton(self) -> str:
        """Model header offered to the LLM: module name and variable declarations."""
        return pretty_print(SmvModel(self.module_name, self.proposition_env, ()))

    def subset(self, names: Optional[Sequence[str]]) -> "TaskSpec":
        if not names:
            return self
        known = {s.name: s for s in self.specs}
        missing = [n for n in names if n not in known]
        if missing:
            raise KeyError(f"unknown specification(s): {', '.join(missing)}")
        return TaskSpec(self.id, self.description, self.proposition_env, self.spec_file,
                        tuple(known[n] for n in names), self.module_name)


def load_task(path: Union[str, Path], props_subset: Optional[Sequence[str]] = None,
              specs_subset: Optional[Sequence[str]] = None) -> TaskSpec:
    """Task file (YAML): ``id``, ``description``, ``decls`` and ``specs`` paths, optional subsets.

    Paths are resolved relative to the task file. ``props_subset`` keeps only
    the named declarations; specs over dropped propositions are then rejected.
    """
    path = Path(path)
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    unknown = set(doc) - {"id", "description", "decls", "specs", "specs_subset", "props_subset"}
    if unknown:
        raise ValueError(f"{path}: unknown task keys {sorted(unknown)}")
    decls_path = (path.parent / doc["decls"]).resolve()
    spec_path = (path.parent / doc["specs"]).resolve()
    return make_task(doc["id"], doc["description"], decls_path, spec_path,
                     props_subset or doc.get("props_subset"), specs_subset or doc.get("specs_subset"))


def make_task(task_id: str, description: str, decls_path: Union[str, Path], spec_path: Union[str, Path],
              props_subset: Optional[Sequence[str]] = None,
              specs_subset: Optional[Sequence[str]] = None) -> TaskSpec:
    decls_model = parse_model(Path(decls_path).read_text(encoding="utf-8"))
    decls = decls_model.variables
    if props_subset:
        keep = set(props_subset)
        missing = keep - {d.name for d in decls}
        if missing:
            raise KeyError(f"unknown proposition(s): {', '.join(sorted(missing))}")
        decls = tuple(d for d in decls if d.name in keep)
    specs = parse_specs(Path(spec_path).read_text(encoding="utf-8"), decls)
    task = TaskSpec(task_id, description, tuple(decls), Path(spec_path), tuple(specs),
                    decls_model.module_name)
    return task.subset(specs_subset)


# -- extraction ----------------------------------------------------------------

_FENCE = re.compile(r"```[^\n`]*\n(.*?)(?:```|\Z)", re.DOTALL)
_MODULE = re.compile(r"^\s*MODULE\b", re.MULTILINE)


def extract_smv(raw: str) -> str:
    """First fenced code block, else everything from the first ``MODULE`` line."""
    m = _FENCE.search(raw)
    if m:
        return m.group(1).rstrip() + "\n"
    m = _MODULE.search(raw)
    if m:
        return raw[m.start():].strip() + "\n"
    raise ExtractionError("no SMV model found in the response (expected a code block or a MODULE line)")


# -- results -------------------------------------------------------------------


@dataclass
class PlanResult:
    model_text: str
    parsed: Optional[SmvModel]
    diagnostics: List[str]
    strategy_used: str
    graph: Graph
    session: Session
    raw_text: str = ""
    steps_text: str = ""
    repairs: int = 0

    @property
    def ok(self) -> bool:
        return self.parsed is not None

    @property
    def call_records(self):
        return list(self.session.tape.records)

    @property
    def llm_calls(self) -> int:
        return sum(1 for r in self.session.tape.records if r.node_id not in ("extract", "verify"))


def build_graph(strategy: Strategy, repaired: bool = False) -> Graph:
    """Static graph for one sample: LLM calls, then extraction."""
    g = Graph()
    if strategy.kind == SINGLE:
        g.llm("plan", "plan")
        last = "plan"
    else:
        first = "steps" if strategy.kind == TWO else "step"
        g.llm(first, first)
        g.llm("convert", "convert")
        g.connect(first, "convert")
        last = "convert"
    if repaired:
        g.llm("repair", "repair")
        g.connect(last, "repair")
        last = "repair"
    g.functional("extract", _extract_or_empty)
    g.connect(last, "extract")
    return g


def _extract_or_empty(raw: str) -> str:
    try:
        return extract_smv(raw)
    except ExtractionError:
        return ""


def _as_backends(backend: Union[Backend, Mapping[str, Backend]]) -> Mapping[str, Backend]:
    return backend if isinstance(backend, Mapping) else {"forward": backend}


def _parse(raw: str, int_range=None) -> Tuple[str, Optional[SmvModel], List[str]]:
    try:
        text = extract_smv(raw)
    except ExtractionError as exc:
        return "", None, [str(exc)]
    try:
        model = parse_model(text) if int_range is None else parse_model(text, int_range)
    except SmvError as exc:
        return text, None, [exc.render()]
    return text, model, []


def plan_gen(task: TaskSpec, prompts: Mapping[str, Parameter], strategy: Strategy,
             backend: Union[Backend, Mapping[str, Backend]], max_repairs: int = 1,
             int_range=None, max_tokens: int = 2048) -> PlanResult:
    """Drive the strategy's prompts, extract the model, and repair parse failures."""
    for pid in strategy.parameters:
        if pid not in prompts:
            raise KeyError(f"strategy '{strategy.kind}' needs prompt parameter '{pid}'")
    backends = _as_backends(backend)
    graph = build_graph(strategy)
    session = Session(graph, prompts, backends, Tape(), max_tokens=max_tokens)
    values: Dict[str, str] = {"task": task.description, "nusmv_file": task.skeleton()}
    steps_text = ""
    if strategy.kind == SINGLE:
        raw = session.call("plan", values)
    elif strategy.kind == TWO:
        steps_text = session.call("steps", values)
        raw = session.call("convert", {**values, "steps": steps_text})
    else:
        # each reply is one new step; the reply carrying the sentinel is not appended
        for _ in range(strategy.max_steps):
            out = session.call("step", {**values, "previous_steps": steps_text})
            if strategy.done(out):
                break
            steps_text = f"{steps_text}\n{out.strip()}" if steps_text else out.strip()
        raw = session.call("convert", {**values, "steps": steps_text})
    text, model, diags = _parse(raw, int_range)
    session.apply("extract", raw)
    result = PlanResult(text, model, diags, strategy.kind, graph, session, raw, steps_text)
    if model is None and max_repairs > 0:
        result = repair_loop(task, prompts, backends, result, max_repairs, int_range, max_tokens)
    return result


def default_repair_template() -> Parameter:
    return load_parameter(DATA_DIR / "meta" / "repair.txt")


def repair_loop(task: TaskSpec, prompts: Mapping[str, Parameter],
                backend: Union[Backend, Mapping[str, Backend]], first_attempt: PlanResult,
                max_repairs: int = 1, int_range=None, max_tokens: int = 2048) -> PlanResult:
    """Re-prompt with the parser diagnostic until the model parses or repairs run out.

    The repair prompt is the non-trainable ``repair`` parameter (from ``prompts``
    when present, else the bundled template).
    """
    if max_repairs <= 0 or first_attempt.ok:
        return first_attempt
    backends = _as_backends(backend)
    template = prompts.get("repair") or default_repair_template()
    params = {**first_attempt.session.params, "repair": template}
    strategy = Strategy(first_attempt.strategy_used)
    graph = build_graph(strategy, repaired=True)
    # carry the recorded calls over to the graph that includes the repair node
    session = Session(graph, params, backends, first_attempt.session.tape, max_tokens=max_tokens)
    result = first_attempt
    raw = first_attempt.raw_text
    for n in range(1, max_repairs + 1):
        raw = session.call("repair", {"task": task.description, "nusmv_file": task.skeleton(),
                                      "previous": raw, "diagnostic": "\n".join(result.diagnostics)})
        text, model, diags = _parse(raw, int_range)
        session.apply("extract", raw)
        result = PlanResult(text, model, diags, strategy.kind, graph, session, raw,
                            first_attempt.steps_text, n)
        if model is not None:
            break
    return result
