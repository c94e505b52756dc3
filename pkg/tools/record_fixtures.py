"""Regenerate the bundled replay fixtures.

No live chat endpoint is reachable from the build environment, so the
fixtures are recorded from a scripted stand-in whose replies are the plan and
step texts shipped under ``data/``. Point ``--endpoint`` at a real
chat-completions server to record from a live model instead.
"""

import argparse
import glob
from pathlib import Path

from ltlprompt.backends import FixtureStore, HttpBackend, RecordingBackend, Rule, ScriptedBackend
from ltlprompt.planner import Strategy, load_task, plan_gen
from ltlprompt.store import PromptStore
from ltlprompt.trainer import icl_mode, load_demos

DATA = Path(__file__).resolve().parents[1] / "src" / "ltlprompt" / "data"

JACKAL_STEPS = """1.\tIf Distance < 5 and no pedestrian, then move forward.
If there is a pedestrian, then stop.
2.\tOnce Distance >= 5, check again:
    - If there is a pedestrian, then stop.
    - If no pedestrians, then turn left."""


def fenced(path: Path) -> str:
    return "```smv\n" + path.read_text(encoding="utf-8") + "```\n"


def driving_standin() -> ScriptedBackend:
    plans = DATA / "plans"
    return ScriptedBackend([
        # step prompts: one step, then the completion sentinel
        Rule(pattern=r"1\. Stop whenever.*0\. Check if previous steps exist", name="final-done",
             respond="The steps are already complete."),
        Rule(contains="0. Check if previous steps exist", name="final-step",
             respond="1. Stop whenever there is a stop sign, a red light, a pedestrian or crossing traffic; "
                     "otherwise move forward."),
        Rule(pattern=r"1\. Keep moving.*Please add one step only", name="init-done",
             respond="The steps are already complete."),
        Rule(contains="Please add one step only", name="init-step",
             respond="1. Keep moving toward the goal and turn when the road allows it."),
        # conversion prompts
        Rule(contains="Complete the actions in the NuSMV file follow the steps", name="final-convert",
             respond=fenced(plans / "stepwise_plan.smv")),
        Rule(contains="Convert the following steps", name="init-convert",
             respond=fenced(plans / "unsafe_plan.smv")),
    ], "standin:driving")


def jackal_standin() -> ScriptedBackend:
    return ScriptedBackend([
        Rule(contains="Define the steps for", respond=JACKAL_STEPS, name="jackal-steps"),
        Rule(contains="Complete the actions in the NuSMV file", respond=fenced(DATA / "plans" / "jackal_plan.smv"),
             name="jackal-convert"),
    ], "standin:jackal")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DATA / "fixtures")
    ap.add_argument("--endpoint")
    ap.add_argument("--model", help="model name sent to --endpoint")
    args = ap.parse_args()
    if args.endpoint and not args.model:
        ap.error("--endpoint needs --model")
    live = HttpBackend(args.endpoint, args.model) if args.endpoint else None

    store = FixtureStore(args.out / "driving.jsonl")
    backend = RecordingBackend(live or driving_standin(), store)
    prompts = PromptStore(DATA / "prompts" / "driving")
    demos = load_demos(DATA / "demos.yaml")
    for path in sorted(glob.glob(str(DATA / "tasks" / "driving_*.yaml"))):
        task = load_task(path)
        for version in prompts.versions():
            params = prompts.load(version)
            plan_gen(task, params, Strategy("multi"), backend)
            plan_gen(task, icl_mode(params, demos), Strategy("multi"), backend)

    store = FixtureStore(args.out / "jackal.jsonl")
    backend = RecordingBackend(live or jackal_standin(), store)
    plan_gen(load_task(DATA / "tasks" / "jackal.yaml"), PromptStore(DATA / "prompts" / "jackal").load(0),
             Strategy("two"), backend)
    print(f"fixtures written to {args.out}")


if __name__ == "__main__":
    main()
