import pytest
from hypothesis import given, strategies as st

from ltlprompt.autodiff import (
    LOSS, CallRecord, Graph, GraphError, NodeCallError, NotTrainable, Parameter, Session, TextualGradient,
    UnresolvedPlaceholder, aggregate, backward, extract_prompt, format_parameter_file, forward,
    optimizer_step, parse_parameter_file,
)
from ltlprompt.backends import ScriptedBackend


def echo_backward():
    """Critique = the feedback it was handed, tagged with the critiqued output."""
    return ScriptedBackend.from_dicts([{
        "pattern": r"<OUTPUT>\n(?P<o>.*?)\n</OUTPUT>\n<FEEDBACK>\n(?P<f>.*?)\n</FEEDBACK>",
        "expand": r"critique of \g<o>: \g<f>"}])


def chain(with_f=True):
    g = Graph()
    g.llm("A", "pa")
    if with_f:
        g.functional("F", str.upper)
        g.connect("A", "F")
    return g


PARAMS = {"pa": Parameter("pa", "{{x}}", "turns x into a plan")}


def test_forward_chain_composition():
    fwd = ScriptedBackend.from_dicts([{"contains": "x", "respond": "plan"}])
    out, tape = forward(chain(), {"x": "x"}, PARAMS, {"forward": fwd})
    assert out == "PLAN"
    assert [(r.node_id, r.t) for r in tape.records] == [("A", 1), ("F", 1)]


def test_unresolved_placeholder_names_parameter():
    with pytest.raises(UnresolvedPlaceholder) as exc:
        forward(chain(), {}, {"pa": Parameter("pa", "do {{task}}")}, {"forward": echo_backward()})
    assert "pa" in str(exc.value) and "{{task}}" in str(exc.value)


def test_backend_failure_carries_node_and_timestamp():
    empty = ScriptedBackend([])
    with pytest.raises(NodeCallError) as exc:
        forward(chain(), {"x": "x"}, PARAMS, {"forward": empty})
    assert (exc.value.node_id, exc.value.t) == ("A", 1)


def test_graph_rejects_cycles_and_duplicates():
    g = Graph()
    g.llm("a", "p")
    g.llm("b", "p")
    g.connect("a", "b")
    with pytest.raises(GraphError):
        g.connect("b", "a")
    with pytest.raises(GraphError):
        g.llm("a", "p")
    with pytest.raises(GraphError):
        g.llm(LOSS, "p")


def repeated_session(n=3):
    g = Graph()
    g.llm("A", "pa")
    fwd = ScriptedBackend.from_dicts([{"pattern": r"(?P<x>.+)", "expand": r"out \g<x>"}])
    s = Session(g, PARAMS, {"forward": fwd})
    for i in range(1, n + 1):
        s.call("A", {"x": str(i)})
    return g, s.tape


def test_repeated_calls_are_timestamped():
    _, tape = repeated_session()
    assert [r.t for r in tape.records] == [1, 2, 3]


def test_backward_time_sequential_order():
    g, tape = repeated_session()
    grads = backward(g, tape, "loss text", echo_backward(), PARAMS)
    assert [gr.t for gr in grads] == [3, 2, 1]
    for gr in grads:
        assert gr.context == tape.calls("A")[gr.t - 1]
        assert gr.feedback == f"critique of out {gr.t}: loss text"


def test_pass_through_functional_node():
    fwd = ScriptedBackend.from_dicts([{"contains": "x", "respond": "plan"}])
    _, tape = forward(chain(), {"x": "x"}, PARAMS, {"forward": fwd})
    grads = backward(chain(), tape, "3 specs violated", echo_backward(), PARAMS)
    by_node = {g.node_id: g for g in grads}
    assert by_node["F"].feedback == "3 specs violated" and by_node["F"].source == LOSS
    assert by_node["A"].source == LOSS  # functional nodes keep the provenance of what they pass on
    assert by_node["A"].feedback == "critique of plan: 3 specs violated"


def test_identity_functional_node_is_transparent():
    fwd = ScriptedBackend.from_dicts([{"contains": "x", "respond": "plan"}])
    with_f = Graph()
    with_f.llm("A", "pa")
    with_f.functional("F", lambda s: s)
    with_f.connect("A", "F")
    _, t1 = forward(with_f, {"x": "x"}, PARAMS, {"forward": fwd})
    _, t2 = forward(chain(False), {"x": "x"}, PARAMS, {"forward": fwd})
    g1 = [g for g in backward(with_f, t1, "fb", echo_backward(), PARAMS) if g.node_id == "A"]
    g2 = backward(chain(False), t2, "fb", echo_backward(), PARAMS)
    assert [g.feedback for g in g1] == [g.feedback for g in g2]


def test_zero_loss_emits_nothing():
    g, tape = repeated_session()
    b = echo_backward()
    assert backward(g, tape, "fine", b, PARAMS, loss_is_zero=True) == []
    assert b.calls == []


def test_reverse_topological_discipline():
    g = Graph()
    g.llm("A", "pa")
    g.llm("B", "pb")
    g.functional("F", str.strip)
    g.chain("A", "B", "F")
    params = {"pa": Parameter("pa", "{{x}}"), "pb": Parameter("pb", "use {{A}}")}
    fwd = ScriptedBackend.from_dicts([{"contains": "use", "respond": "b-out"}, {"contains": "x", "respond": "a-out"}])
    _, tape = forward(g, {"x": "x"}, params, {"forward": fwd})
    grads = backward(g, tape, "fb", echo_backward(), params)
    assert [gr.node_id for gr in grads] == ["F", "B", "A"]
    assert grads[2].source == "B" and "b-out" in grads[1].feedback


def test_gradient_count_matches_calls_times_successors():
    g = Graph()
    g.llm("A", "pa")
    g.functional("F1", str.upper)
    g.functional("F2", str.lower)
    g.connect("A", "F1")
    g.connect("A", "F2")
    s = Session(g, PARAMS, {"forward": ScriptedBackend.from_dicts([{"pattern": ".", "respond": "o"}])})
    for i in range(2):
        out = s.call("A", {"x": str(i)})
        s.apply("F1", out)
        s.apply("F2", out)
    grads = backward(g, s.tape, "fb", echo_backward(), PARAMS)
    at_a = [gr for gr in grads if gr.node_id == "A"]
    assert len(at_a) == 2 * 2
    assert {(gr.node_id, gr.t) for gr in grads} <= {(r.node_id, r.t) for r in s.tape.records}


def test_backward_rejects_foreign_tape():
    _, tape = repeated_session()
    g = Graph()
    g.llm("B", "pa")
    with pytest.raises(GraphError):
        backward(g, tape, "fb", echo_backward(), PARAMS)


def grad(t, source, text="x"):
    return TextualGradient("A", t, text, source, CallRecord("A", t, "i", "o"))


def test_aggregate_single():
    assert aggregate([grad(1, "F", "hello")]) == "[from F @ t=1]\nhello"


def test_aggregate_orders_by_source_then_reverse_time():
    text = aggregate([grad(1, "w2"), grad(1, "w1"), grad(2, "w1")])
    assert [line for line in text.splitlines() if line.startswith("[")] == [
        "[from w1 @ t=2]", "[from w1 @ t=1]", "[from w2 @ t=1]"]


def test_aggregate_rejects_mixed_targets():
    other = TextualGradient("B", 1, "x", "F", CallRecord("B", 1, "i", "o"))
    with pytest.raises(GraphError):
        aggregate([grad(1, "F"), other])


def appender():
    return ScriptedBackend.from_dicts([{
        "pattern": r"<PROMPT>\n(?P<p>.*?)\n</PROMPT>.*<FEEDBACK>.*spec1",
        "expand": "<PROMPT>\n\\g<p> Check for pedestrians before moving.\n</PROMPT>"},
        {"pattern": r"<PROMPT>\n(?P<p>.*?)\n</PROMPT>", "expand": "<PROMPT>\n\\g<p>\n</PROMPT>"}])


def test_optimizer_appends_on_spec1_feedback():
    p = Parameter("plan", "Write a plan.", version=4)
    new = optimizer_step(p, [grad(1, LOSS, "[spec1] violated")], appender())
    assert new.text == "Write a plan. Check for pedestrians before moving."
    assert new.version == 5


def test_optimizer_unchanged_reply_keeps_version():
    p = Parameter("plan", "Write a plan.", version=4)
    assert optimizer_step(p, [grad(1, LOSS, "[spec2] violated")], appender()) is p


def test_optimizer_empty_gradients_is_noop():
    p = Parameter("plan", "Write a plan.")
    b = appender()
    assert optimizer_step(p, [], b) is p and b.calls == []


def test_optimizer_rejects_frozen_parameter():
    with pytest.raises(NotTrainable):
        optimizer_step(Parameter("plan", "x", trainable=False), [grad(1, LOSS)], appender())
    with pytest.raises(NotTrainable):
        Parameter("plan", "x", trainable=False).updated("y")


def test_optimizer_sees_context_and_role():
    b = appender()
    optimizer_step(Parameter("plan", "P", "writes plans"), [grad(1, LOSS, "spec1")], b)
    sent = b.calls[0].user_text
    assert "input:\ni\noutput:\no" in sent


def test_extract_prompt_falls_back_to_whole_reply():
    assert extract_prompt("no tags here\n") == "no tags here"
    assert extract_prompt("noise <PROMPT>\nnew\n</PROMPT> noise") == "new"


names = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True)


@given(st.dictionaries(names, st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=10),
                       max_size=4))
def test_render_fills_every_placeholder(values):
    text = " ".join("{{" + k + "}}" for k in values)
    assert Parameter("p", text).render(values) == " ".join(values.values())


@given(st.text(max_size=40), st.booleans(), st.integers(0, 99))
def test_parameter_file_round_trip(text, trainable, version):
    p = Parameter("plan", text, "writes: plans", trainable, version)
    assert parse_parameter_file(format_parameter_file(p)) == p
