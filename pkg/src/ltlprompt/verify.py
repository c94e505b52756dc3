"""Specification-suite verification, the formal-feedback loss, and feedback text."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from ltlprompt.lang import NamedSpec, SmvError, parse_model
from ltlprompt.ltl.check import check
from ltlprompt.ltl.lasso import Lasso, Verdict
from ltlprompt.ltl.trace import format_trace
from ltlprompt.ts import CompileConfig, IncompleteCase, ResourceError, TransitionSystem, compile_model

TRACE_STEM_LIMIT = 10
TRACE_LOOP_LIMIT = 10


class SpecCheckError(RuntimeError):
    def __init__(self, spec: str, cause: Exception):
        self.spec, self.cause = spec, cause
        super().__init__(f"checking {spec} failed: {cause}")


@dataclass(frozen=True)
class SpecResult:
    name: str
    formula: str
    status: str
    lasso: Optional[Lasso] = None
    trace: str = ""
    trace_short: str = ""

    @property
    def violated(self) -> bool:
        return self.status == "Violated"


@dataclass(frozen=True)
class VerificationReport:
    """Per-spec verdicts in suite order.

    ``diagnostic`` is set when the plan could not be parsed or compiled; every
    spec then counts as violated.
    """

    results: Tuple[SpecResult, ...]
    diagnostic: Optional[str] = None

    def __post_init__(self):
        if not self.results:
            raise ValueError("a report needs at least one specification")

    @property
    def n_total(self) -> int:
        return len(self.results)

    @property
    def n_f(self) -> int:
        return sum(r.violated for r in self.results)

    @property
    def loss(self) -> Fraction:
        return Fraction(self.n_f, self.n_total)

    @property
    def safety_score(self) -> Fraction:
        return 1 - self.loss

    @property
    def violated(self) -> List[str]:
        return [r.name for r in self.results if r.violated]

    def verdicts(self) -> Dict[str, str]:
        return {r.name: r.status for r in self.results}

    def without(self, name: str) -> "VerificationReport":
        return VerificationReport(tuple(r for r in self.results if r.name != name), self.diagnostic)


def loss_of(report: VerificationReport) -> Fraction:
    return report.loss


def _result(ts: TransitionSystem, spec: NamedSpec, verdict: Verdict) -> SpecResult:
    if verdict.holds:
        return SpecResult(spec.name, spec.source, "Holds")
    lasso = verdict.counterexample
    return SpecResult(spec.name, spec.source, "Violated", lasso, format_trace(ts, lasso),
                      format_trace(ts, lasso, TRACE_STEM_LIMIT, TRACE_LOOP_LIMIT))


def verify_all(ts: TransitionSystem, specs: Sequence[NamedSpec]) -> VerificationReport:
    if not specs:
        raise ValueError("empty specification suite")
    results = []
    for spec in specs:
        try:
            verdict = check(ts, spec.formula)
        except (ResourceError, SmvError) as exc:
            raise SpecCheckError(spec.name, exc) from exc
        results.append(_result(ts, spec, verdict))
    return VerificationReport(tuple(results))


def failed_report(specs: Sequence[NamedSpec], diagnostic: str) -> VerificationReport:
    """Loss-one report for a plan that never reached the checker."""
    if not specs:
        raise ValueError("empty specification suite")
    return VerificationReport(tuple(SpecResult(s.name, s.source, "Violated") for s in specs),
                              diagnostic)


def verify_text(model_text: str, specs: Sequence[NamedSpec], env=None,
                config: CompileConfig = CompileConfig()) -> Tuple[VerificationReport, Optional[TransitionSystem]]:
    """Parse, compile and verify; malformed plans yield a diagnostic report, not an exception."""
    try:
        model = parse_model(model_text, config.int_range)
    except SmvError as exc:
        return failed_report(specs, f"parse error: {exc.render()}"), None
    try:
        ts = compile_model(model, config, env)
    except SmvError as exc:
        return failed_report(specs, f"compile error: {exc.render()}"), None
    except (IncompleteCase, ResourceError) as exc:
        return failed_report(specs, f"compile error: {exc}"), None
    return verify_all(ts, specs), ts


# -- feedback ----------------------------------------------------------------


@dataclass(frozen=True)
class FeedbackText:
    summary: str
    violations: Tuple[Tuple[str, str, str], ...] = ()
    advice_slot: Optional[str] = None
    diagnostic: Optional[str] = None

    def render(self) -> str:
        parts = [self.summary]
        if self.diagnostic:
            parts.append("The plan could not be checked:\n" + self.diagnostic)
        if self.violations:
            lines = ["Violated specifications:"]
            for name, formula, trace in self.violations:
                lines.append(f"[{name}] {formula}")
                if trace:
                    lines.append("Counterexample:")
                    lines.append(trace.rstrip("\n"))
            parts.append("\n".join(lines))
        if self.advice_slot:
            parts.append(self.advice_slot)
        return "\n\n".join(parts) + "\n"

    def __str__(self) -> str:
        return self.render()


def fmt3(x: Fraction) -> str:
    return f"{float(x):.3f}"


def render_feedback(report: VerificationReport, plan_text: str = "", include_traces: bool = True,
                    advice: Optional[str] = None) -> FeedbackText:
    summary = (f"{report.n_f}/{report.n_total} specifications violated "
               f"(loss {fmt3(report.loss)}, safety score {fmt3(report.safety_score)}).")
    diagnostic = None
    if report.diagnostic:
        diagnostic = report.diagnostic
        excerpt = _excerpt(plan_text, report.diagnostic)
        if excerpt:
            diagnostic += "\n" + excerpt
    violations = tuple((r.name, r.formula, r.trace_short if include_traces else "")
                       for r in report.results if r.violated)
    if report.diagnostic:
        violations = ()  # nothing was checked; the diagnostic is the signal
    return FeedbackText(summary, violations, advice, diagnostic)


def _excerpt(plan_text: str, diagnostic: str) -> str:
    """The offending plan line, when the diagnostic starts with ``line:col``."""
    head = diagnostic.split(": ", 1)[-1]
    line_no = head.split(":", 1)[0]
    if not line_no.isdigit() or not plan_text:
        return ""
    lines = plan_text.splitlines()
    n = int(line_no)
    if not 1 <= n <= len(lines):
        return ""
    return f"  {n} | {lines[n - 1]}"


def to_record(report: VerificationReport) -> dict:
    """Machine-readable summary for the run log; the loss stays an exact ``n/d`` string."""
    return {
        "loss": f"{report.loss.numerator}/{report.loss.denominator}",
        "safety_score": f"{report.safety_score.numerator}/{report.safety_score.denominator}",
        "n_f": report.n_f,
        "n_total": report.n_total,
        "diagnostic": report.diagnostic,
        "specs": [{"name": r.name, "status": r.status, "trace": r.trace} for r in report.results],
    }
