"""Computation graphs over prompts with textual back-propagation.

A graph is a static DAG of LLM nodes (each bound to a prompt parameter) and
functional nodes. Calls made while running it are recorded on a ``Tape`` with
per-node timestamps, so a node driven repeatedly by a controller loop keeps one
record per invocation.

Backward propagation walks the graph in reverse topological order. Sinks
receive the loss feedback. Functional nodes hand their incoming feedback to
their predecessors unchanged. LLM nodes get one critique per (call, incoming
feedback) from the backward backend, newest call first, and pass the combined
critique upstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from ltlprompt.backends import Backend, BackendError, GenRequest

PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")
LOSS = "loss"


class GraphError(ValueError):
    pass


class UnresolvedPlaceholder(KeyError):
    def __init__(self, parameter_id: str, names: Sequence[str]):
        self.parameter_id, self.names = parameter_id, list(names)
        super().__init__(f"parameter '{parameter_id}' has unresolved placeholder(s): "
                         + ", ".join("{{" + n + "}}" for n in names))

    def __str__(self) -> str:
        return self.args[0]


class NotTrainable(ValueError):
    pass


class NodeCallError(RuntimeError):
    def __init__(self, node_id: str, t: int, cause: Exception):
        self.node_id, self.t, self.cause = node_id, t, cause
        super().__init__(f"node '{node_id}' call t={t} failed: {cause}")


# -- parameters ----------------------------------------------------------------


@dataclass(frozen=True)
class Parameter:
    id: str
    text: str
    role_description: str = ""
    trainable: bool = True
    version: int = 0

    def placeholders(self) -> List[str]:
        return list(dict.fromkeys(PLACEHOLDER.findall(self.text)))

    def render(self, values: Mapping[str, str]) -> str:
        missing = [n for n in self.placeholders() if n not in values]
        if missing:
            raise UnresolvedPlaceholder(self.id, missing)
        return PLACEHOLDER.sub(lambda m: values[m.group(1)], self.text)

    def updated(self, text: str) -> "Parameter":
        if not self.trainable:
            raise NotTrainable(f"parameter '{self.id}' is not trainable")
        return replace(self, text=text, version=self.version + 1)


ParameterSet = Dict[str, Parameter]


# -- graph -------------------------------------------------------------------


@dataclass(frozen=True)
class LlmNode:
    id: str
    parameter_id: str
    backend: str = "forward"
    system: str = ""


@dataclass(frozen=True)
class FunctionalNode:
    id: str
    fn: Callable[[str], str] = field(compare=False)
    tag: str = ""


Node = Union[LlmNode, FunctionalNode]


class Graph:
    def __init__(self):
        self.nodes: Dict[str, Node] = {}
        self._succ: Dict[str, List[str]] = {}
        self._pred: Dict[str, List[str]] = {}

    def add(self, node: Node) -> Node:
        if node.id in self.nodes or node.id == LOSS:
            raise GraphError(f"duplicate node id '{node.id}'")
        self.nodes[node.id] = node
        self._succ[node.id] = []
        self._pred[node.id] = []
        return node

    def llm(self, node_id: str, parameter_id: str, backend: str = "forward", system: str = "") -> LlmNode:
        return self.add(LlmNode(node_id, parameter_id, backend, system))

    def functional(self, node_id: str, fn: Callable[[str], str], tag: str = "") -> FunctionalNode:
        return self.add(FunctionalNode(node_id, fn, tag or node_id))

    def connect(self, a: str, b: str) -> None:
        for n in (a, b):
            if n not in self.nodes:
                raise GraphError(f"unknown node '{n}'")
        if b not in self._succ[a]:
            self._succ[a].append(b)
            self._pred[b].append(a)
        self.topo_order()  # rejects cycles eagerly

    def chain(self, *ids: str) -> None:
        for a, b in zip(ids, ids[1:]):
            self.connect(a, b)

    def successors(self, n: str) -> List[str]:
        return sorted(self._succ[n])

    def predecessors(self, n: str) -> List[str]:
        return list(self._pred[n])

    def sinks(self) -> List[str]:
        return [n for n in self.nodes if not self._succ[n]]

    def topo_order(self) -> List[str]:
        """Kahn's algorithm; ties broken by insertion order."""
        indeg = {n: len(self._pred[n]) for n in self.nodes}
        ready = [n for n in self.nodes if indeg[n] == 0]
        out = []
        while ready:
            n = ready.pop(0)
            out.append(n)
            for m in self._succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(out) != len(self.nodes):
            raise GraphError("graph has a cycle")
        return out

    def llm_nodes_for(self, parameter_id: str) -> List[str]:
        return [n.id for n in self.nodes.values()
                if isinstance(n, LlmNode) and n.parameter_id == parameter_id]


# -- forward -----------------------------------------------------------------


@dataclass(frozen=True)
class CallRecord:
    node_id: str
    t: int
    input_text: str
    output_text: str


class Tape:
    def __init__(self):
        self.records: List[CallRecord] = []
        self._count: Dict[str, int] = {}

    def next_t(self, node_id: str) -> int:
        return self._count.get(node_id, 0) + 1

    def add(self, node_id: str, input_text: str, output_text: str) -> CallRecord:
        t = self.next_t(node_id)
        self._count[node_id] = t
        rec = CallRecord(node_id, t, input_text, output_text)
        self.records.append(rec)
        return rec

    def calls(self, node_id: str) -> List[CallRecord]:
        return [r for r in self.records if r.node_id == node_id]

    def count(self, node_id: str) -> int:
        return self._count.get(node_id, 0)


class Session:
    """Runs nodes of one graph against a parameter snapshot, recording every call."""

    def __init__(self, graph: Graph, params: Mapping[str, Parameter], backends: Mapping[str, Backend],
                 tape: Optional[Tape] = None, temperature: float = 0.0, max_tokens: int = 2048):
        self.graph, self.params, self.backends = graph, params, backends
        self.tape = tape if tape is not None else Tape()
        self.temperature, self.max_tokens = temperature, max_tokens

    def call(self, node_id: str, values: Mapping[str, str]) -> str:
        node = self.graph.nodes[node_id]
        if not isinstance(node, LlmNode):
            raise GraphError(f"'{node_id}' is not an LLM node")
        param = self.params[node.parameter_id]
        prompt = param.render(values)
        t = self.tape.next_t(node_id)
        req = GenRequest(node.system, prompt, self.temperature, self.max_tokens, f"{node_id}@{t}")
        try:
            out = self.backends[node.backend].generate(req).text
        except BackendError as exc:
            raise NodeCallError(node_id, t, exc) from exc
        self.tape.add(node_id, prompt, out)
        return out

    def apply(self, node_id: str, text: str) -> str:
        node = self.graph.nodes[node_id]
        if not isinstance(node, FunctionalNode):
            raise GraphError(f"'{node_id}' is not a functional node")
        out = node.fn(text)
        self.tape.add(node_id, text, out)
        return out


def forward(graph: Graph, inputs: Mapping[str, str], params: Mapping[str, Parameter],
            backends: Mapping[str, Backend]) -> Tuple[str, Tape]:
    """Run every node once in topological order.

    An LLM node's template sees ``inputs`` plus each predecessor's output under
    the predecessor id. A functional node receives its predecessors' outputs
    joined by newlines, or ``inputs["input"]`` when it has none.
    """
    session = Session(graph, params, backends)
    outputs: Dict[str, str] = {}
    last = ""
    for n in graph.topo_order():
        node = graph.nodes[n]
        preds = graph.predecessors(n)
        if isinstance(node, LlmNode):
            values = dict(inputs)
            values.update({p: outputs[p] for p in preds})
            outputs[n] = session.call(n, values)
        else:
            text = "\n".join(outputs[p] for p in preds) if preds else inputs.get("input", "")
            outputs[n] = session.apply(n, text)
        if not graph.successors(n):
            last = outputs[n]
    return last, session.tape


# -- backward ----------------------------------------------------------------


@dataclass(frozen=True)
class TextualGradient:
    node_id: str
    t: int
    feedback: str
    source: str
    context: CallRecord
    role_description: str = ""


def aggregate(gradients: Sequence[TextualGradient]) -> str:
    """Concatenate gradients of one node by source id, newest call first, with headers."""
    if not gradients:
        return ""
    targets = {g.node_id for g in gradients}
    if len(targets) != 1:
        raise GraphError(f"aggregate expects gradients of one node, got {sorted(targets)}")
    blocks = [f"[from {g.source} @ t={g.t}]\n{g.feedback.rstrip()}"
              for g in sorted(gradients, key=lambda g: (g.source, -g.t))]
    return "\n\n".join(blocks)


_DEFAULT_BACKWARD = (
    "You critique one step of an LLM pipeline.\n"
    "Role of the prompt: {{role_description}}\n"
    "<INPUT>\n{{input}}\n</INPUT>\n"
    "<OUTPUT>\n{{output}}\n</OUTPUT>\n"
    "<FEEDBACK>\n{{feedback}}\n</FEEDBACK>\n"
    "Explain how the prompt should change so the output avoids the problems above."
)


def backward(graph: Graph, tape: Tape, loss_feedback, backend: Backend,
             params: Optional[Mapping[str, Parameter]] = None, loss_is_zero: bool = False,
             template: Optional[Parameter] = None, max_tokens: int = 2048) -> List[TextualGradient]:
    """Textual gradients for every recorded call, returned in computation order.

    ``loss_feedback`` may be a string or anything with ``render()``. With
    ``loss_is_zero`` nothing is propagated.
    """
    if loss_is_zero:
        return []
    text = loss_feedback.render() if hasattr(loss_feedback, "render") else str(loss_feedback)
    for rec in tape.records:
        if rec.node_id not in graph.nodes:
            raise GraphError(f"tape records unknown node '{rec.node_id}'")
    template = template or Parameter("backward", _DEFAULT_BACKWARD, trainable=False)
    params = params or {}
    emitted: Dict[str, List[Tuple[str, str]]] = {}  # what each node passes upstream
    out: List[TextualGradient] = []
    for n in reversed(graph.topo_order()):
        succ = graph.successors(n)
        if succ:
            incoming = [sig for w in succ for sig in emitted.get(w, [])]
        else:
            incoming = [(LOSS, text)]
        calls = sorted(tape.calls(n), key=lambda r: -r.t)
        node = graph.nodes[n]
        if not calls or not incoming:
            emitted[n] = incoming if isinstance(node, FunctionalNode) else []
            continue
        if isinstance(node, FunctionalNode):
            for rec in calls:
                for src, fb in incoming:
                    out.append(TextualGradient(n, rec.t, fb, src, rec))
            emitted[n] = incoming
            continue
        role = params[node.parameter_id].role_description if node.parameter_id in params else ""
        mine = []
        for rec in calls:
            for src, fb in incoming:
                prompt = template.render({"role_description": role, "input": rec.input_text,
                                          "output": rec.output_text, "feedback": fb,
                                          "source": src, "node": n, "t": str(rec.t)})
                req = GenRequest("", prompt, 0.0, max_tokens, f"backward:{n}@{rec.t}<-{src}")
                try:
                    critique = backend.generate(req).text
                except BackendError as exc:
                    raise NodeCallError(n, rec.t, exc) from exc
                mine.append(TextualGradient(n, rec.t, critique, src, rec, role))
        out.extend(mine)
        emitted[n] = [(n, aggregate(mine))]
    return out


# -- optimizer ---------------------------------------------------------------

_DEFAULT_OPTIMIZER = (
    "You improve a prompt for an LLM pipeline.\n"
    "Role of the prompt: {{role_description}}\n"
    "<PROMPT>\n{{prompt}}\n</PROMPT>\n"
    "<CONTEXT>\n{{context}}\n</CONTEXT>\n"
    "<FEEDBACK>\n{{feedback}}\n</FEEDBACK>\n"
    "Reply with the complete improved prompt between <PROMPT> and </PROMPT>."
)
_PROMPT_TAG = re.compile(r"<PROMPT>\n?(.*?)\n?</PROMPT>", re.DOTALL)


def gradient_context(gradients: Sequence[TextualGradient]) -> str:
    """Distinct call records the gradients critique, newest first."""
    seen: Dict[Tuple[str, int], CallRecord] = {}
    for g in sorted(gradients, key=lambda g: (g.node_id, -g.t)):
        seen.setdefault((g.node_id, g.t), g.context)
    blocks = [f"[{r.node_id} @ t={r.t}]\ninput:\n{r.input_text.rstrip()}\noutput:\n{r.output_text.rstrip()}"
              for r in seen.values()]
    return "\n\n".join(blocks)


def extract_prompt(reply: str) -> str:
    m = _PROMPT_TAG.search(reply)
    return (m.group(1) if m else reply).strip("\n")


def optimizer_step(param: Parameter, gradients: Sequence[TextualGradient], backend: Backend,
                   template: Optional[Parameter] = None, feedback: Optional[str] = None,
                   max_tokens: int = 2048) -> Parameter:
    """Ask the optimizer backend for a replacement prompt.

    ``feedback`` overrides the aggregated gradient text (the trainer merges
    several samples). An unchanged reply leaves the version as it is.
    """
    if not param.trainable:
        raise NotTrainable(f"parameter '{param.id}' is not trainable")
    if not gradients:
        return param
    if feedback is None:
        by_node: Dict[str, List[TextualGradient]] = {}
        for g in gradients:
            by_node.setdefault(g.node_id, []).append(g)
        feedback = "\n\n".join(aggregate(gs) for _, gs in sorted(by_node.items()))
    template = template or Parameter("optimizer", _DEFAULT_OPTIMIZER, trainable=False)
    prompt = template.render({"role_description": param.role_description, "prompt": param.text,
                              "context": gradient_context(gradients), "feedback": feedback,
                              "parameter": param.id})
    reply = backend.generate(GenRequest("", prompt, 0.0, max_tokens, f"optimizer:{param.id}")).text
    new_text = extract_prompt(reply)
    if new_text == param.text:
        return param
    return param.updated(new_text)


# -- prompt files --------------------------------------------------------------


def parse_parameter_file(text: str, default_id: str = "") -> Parameter:
    """Front-matter header between ``---`` lines (YAML) followed by the prompt text."""
    meta: dict = {}
    body = text
    if text.startswith("---\n"):
        end = text.find("\n---\n", 4)
        if end < 0:
            raise ValueError("unterminated front-matter header")
        meta = yaml.safe_load(text[4:end]) or {}
        body = text[end + 5:]
    unknown = set(meta) - {"id", "role_description", "trainable", "version"}
    if unknown:
        raise ValueError(f"unknown front-matter keys: {sorted(unknown)}")
    return Parameter(str(meta.get("id", default_id)), body,
                     str(meta.get("role_description", "")), bool(meta.get("trainable", True)),
                     int(meta.get("version", 0)))


def format_parameter_file(p: Parameter) -> str:
    header = yaml.safe_dump({"id": p.id, "role_description": p.role_description,
                             "trainable": p.trainable, "version": p.version},
                            sort_keys=False, allow_unicode=True, width=10_000)
    return f"---\n{header}---\n{p.text}"


def load_parameter(path: Union[str, Path]) -> Parameter:
    path = Path(path)
    return parse_parameter_file(path.read_text(encoding="utf-8"), path.stem)
