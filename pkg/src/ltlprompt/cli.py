"""Command-line entry point.

Exit codes: 0 success or all specifications hold, 1 a negative domain result
(violations, oracle disagreement, exhausted backend), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import re
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple

from ltlprompt.config import Config, ConfigError, load_config, make_backend
from ltlprompt.lang import SmvError, parse_model, parse_specs
from ltlprompt.ltl.check import check
from ltlprompt.ltl.differential import render_mismatch, run_differential
from ltlprompt.ltl.oracle import tableau_oracle
from ltlprompt.planner import TaskSpec, load_task
from ltlprompt.reports import plot_evaluation, plot_safety_scores, write_evaluation_csv
from ltlprompt.store import PromptStore, StoreError
from ltlprompt.trainer import TrainConfig, evaluate, icl_mode, load_demos, train, write_run
from ltlprompt.ts import CompileConfig, compile_model
from ltlprompt.verify import SpecCheckError, fmt3, verify_all

OK, NEGATIVE, USAGE = 0, 1, 2

_CLAIM = re.compile(r"^--\s*@claim:\s*(.+?)\s*$", re.MULTILINE)

SEMANTICS_NOTE = (
    "Checked semantics: variables without a next() assignment are unconstrained inputs "
    "that may change at every step, so environment behaviour a plan leaves unassigned is "
    "treated as arbitrary.")


def _split(s: Optional[str]) -> Optional[List[str]]:
    if not s:
        return None
    return [x.strip() for x in s.split(",") if x.strip()]


def _read(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return p.read_text(encoding="utf-8")


def plan_claims(text: str) -> Optional[Tuple[str, List[str]]]:
    """``-- @claim: holds`` or ``-- @claim: violates a, b`` from a plan header."""
    m = _CLAIM.search(text)
    if not m:
        return None
    body = m.group(1)
    if body == "holds":
        return "holds", []
    if body.startswith("violates"):
        return "violates", [x for x in re.split(r"[,\s]+", body[len("violates"):]) if x]
    return None


def claim_notice(claim: Optional[Tuple[str, List[str]]], verdicts: Dict[str, str]) -> Optional[str]:
    if claim is None:
        return None
    kind, names = claim
    if kind == "holds":
        off = [n for n, v in verdicts.items() if v != "Holds"]
        if not off:
            return None
        return (f"notice: the plan header claims every specification holds; the checker finds "
                f"{len(off)} violated ({', '.join(off)}). {SEMANTICS_NOTE}")
    off = [n for n in names if verdicts.get(n) != "Violated"]
    if not off:
        return None
    return (f"notice: the plan header claims {', '.join(off)} violated; the checker finds "
            f"{'it' if len(off) == 1 else 'them'} holding. {SEMANTICS_NOTE}")


# -- verify --------------------------------------------------------------------


def cmd_verify(args, out: TextIO) -> int:
    try:
        model_text = _read(args.model, "model file")
        spec_text = _read(args.specs, "specification file")
        env = None
        if args.decls:
            env = parse_model(_read(args.decls, "declarations file")).variables
            keep = _split(args.props_subset)
            if keep:
                env = tuple(d for d in env if d.name in set(keep))
        config = CompileConfig(int_range=tuple(args.int_range) if args.int_range else CompileConfig().int_range)
        model = parse_model(model_text, config.int_range)
        ts = compile_model(model, config, env)
        specs = parse_specs(spec_text, ts.variables)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except SmvError as exc:
        print(f"error: {exc.render()}", file=sys.stderr)
        return USAGE
    except Exception as exc:  # compile failures (incomplete case, state cap)
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    subset = _split(args.specs_subset)
    if subset:
        known = {s.name for s in specs}
        missing = [n for n in subset if n not in known]
        if missing:
            print(f"error: unknown specification(s): {', '.join(missing)}", file=sys.stderr)
            return USAGE
        specs = [s for s in specs if s.name in set(subset)]
    t0 = time.perf_counter()
    try:
        report = verify_all(ts, specs)
    except SpecCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    elapsed = time.perf_counter() - t0
    print(f"model: {args.model} ({len(ts)} reachable states)", file=out)
    for r in report.results:
        print(f"{r.name:<10} {r.status:<9} {r.formula}", file=out)
    if not args.no_traces:
        for r in report.results:
            if r.violated:
                print(f"\n-- counterexample for {r.name}", file=out)
                print(r.trace.rstrip("\n"), file=out)
    print(f"\nviolated {report.n_f}/{report.n_total}  loss {report.loss} ({fmt3(report.loss)})  "
          f"safety score {report.safety_score} ({fmt3(report.safety_score)})  [{elapsed:.2f}s]", file=out)
    if args.cross_check:
        oracle = {s.name: tableau_oracle(ts, s.formula).status for s in specs}
        diff = [n for n, v in report.verdicts().items() if oracle[n] != v]
        print("oracle cross-check: " + ("agree" if not diff else "DISAGREE on " + ", ".join(diff)), file=out)
        if diff:
            return NEGATIVE
    notice = claim_notice(plan_claims(model_text), report.verdicts())
    if notice:
        print("\n" + notice, file=out)
    return OK if report.n_f == 0 else NEGATIVE


# -- config-driven commands ------------------------------------------------------


def _load(args) -> Config:
    cfg = load_config(args.config)
    if getattr(args, "backend", None):
        cfg = cfg.model_copy(update={"backend": cfg.backend.model_copy(update={"kind": args.backend})})
    if getattr(args, "strategy", None):
        cfg = cfg.model_copy(update={"planner": cfg.planner.model_copy(update={"strategy": args.strategy})})
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"trainer": cfg.trainer.model_copy(update={"seed": args.seed})})
    if getattr(args, "steps", None) is not None:
        cfg = cfg.model_copy(update={"trainer": cfg.trainer.model_copy(update={"steps": args.steps})})
    return cfg


def _tasks(paths: Sequence[Path], args) -> List[TaskSpec]:
    return [load_task(p, _split(args.props_subset), _split(args.specs_subset)) for p in paths]


def _train_config(cfg: Config, validation, test) -> TrainConfig:
    return TrainConfig(cfg.trainer.steps, cfg.trainer.batch_size, cfg.strategy(), tuple(validation),
                       tuple(test), cfg.trainer.accept_rule, cfg.trainer.seed, cfg.planner.max_repairs,
                       cfg.feedback.include_traces, cfg.compile_config(), cfg.planner.max_tokens,
                       cfg.optimizer.candidates)


def fresh_dir(root: Path, prefix: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    d = root / f"{prefix}-{stamp}"
    n = 1
    while d.exists():
        n += 1
        d = root / f"{prefix}-{stamp}-{n}"
    return d


def cmd_optimize(args, out: TextIO) -> int:
    try:
        cfg = _load(args)
        backend = make_backend(cfg.backend)
        p = cfg.paths
        prompts = PromptStore(p.prompts).load(p.prompt_version)
        tasks = _tasks(p.tasks, args)
        tc = _train_config(cfg, _tasks(p.validation_tasks, args), _tasks(p.test_tasks, args))
    except (ConfigError, StoreError, KeyError, ValueError, FileNotFoundError, SmvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    run = train(tasks, prompts, tc, backend)
    out_dir = Path(args.out) if args.out else fresh_dir(p.run_dir, "optimize")
    write_run(run, out_dir)
    plot_safety_scores(run, out_dir / "safety_score.png")
    print(f"{'step':>4} {'batch':>7} {'valid':>7}  accepted", file=out)
    for r in run.records:
        print(f"{r.step:>4} {fmt3(r.mean_safety_score):>7} {fmt3(r.validation_score):>7}  "
              f"{'yes' if r.accepted else '-'}", file=out)
    print(f"best checkpoint v{run.best_checkpoint:04d} (validation {fmt3(run.best_validation)})", file=out)
    if run.test_score is not None:
        print(f"test score {fmt3(run.test_score)}", file=out)
    print(f"artifacts: {out_dir}", file=out)
    samples = [s for r in run.records for s in r.samples]
    if samples and all(s.error for s in samples):
        print("error: every sample failed in the backend", file=sys.stderr)
        return NEGATIVE
    return OK


def cmd_evaluate(args, out: TextIO) -> int:
    try:
        cfg = _load(args)
        backend = make_backend(cfg.backend)
        p = cfg.paths
        store = PromptStore(args.prompts or p.prompts)
        versions = args.prompt_version or [p.prompt_version if p.prompt_version is not None else store.latest()]
        prompt_sets = {f"v{v:04d}": store.load(v) for v in versions}
        demos = load_demos(args.icl) if args.icl else []
        tasks = _tasks(p.test_tasks or p.tasks, args)
        tc = _train_config(cfg, (), ())
    except (ConfigError, StoreError, KeyError, ValueError, FileNotFoundError, SmvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    results = {}
    for label, prompts in prompt_sets.items():
        if demos:
            prompts, label = icl_mode(prompts, demos), label + "+icl"
        results[label] = evaluate(prompts, tasks, tc.strategy, backend, tc)
    for label, (mean, samples) in results.items():
        print(f"[{label}] mean safety score {fmt3(mean)} ({mean})", file=out)
        for s in samples:
            flag = "  FLAGGED: " + (s.error or s.report.diagnostic or "") if s.flagged else ""
            print(f"  {s.task_id:<24} {fmt3(s.score)}{flag}", file=out)
    out_dir = Path(args.out) if args.out else fresh_dir(p.run_dir, "evaluate")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_evaluation_csv(results, out_dir / "evaluation.csv")
    plot_evaluation([(k, v[0]) for k, v in results.items()], out_dir / "evaluation.png")
    print(f"artifacts: {out_dir}", file=out)
    if any(isinstance(s.error, str) and "no recorded response" in s.error
           for _, samples in results.values() for s in samples):
        print("warning: some requests had no recorded response (replay miss)", file=sys.stderr)
    return OK


def oracle_check(n: int, seed: int, lasso_bound: int, out: TextIO, checker: Callable = check) -> int:
    res = run_differential(n, seed, lasso_bound, checker=checker)
    print(f"instances {res.instances}  agreements {res.agreements}  violated {res.violated}  "
          f"lasso-checked {res.lasso_checked}  mismatches {len(res.mismatches)}  [{res.seconds:.1f}s]",
          file=out)
    for m in res.mismatches:
        print("\n" + render_mismatch(m), file=out)
    return OK if res.ok else NEGATIVE


def cmd_oracle_check(args, out: TextIO) -> int:
    n, seed, bound = 1000, 7, 3
    if args.config:
        try:
            o = load_config(args.config, require_paths=False).oracle
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return USAGE
        n, seed, bound = o.n, o.seed, o.lasso_bound
    if args.n is not None:
        n = args.n
    if args.seed is not None:
        seed = args.seed
    return oracle_check(n, seed, bound, out)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltlprompt", description="Verified prompt optimization for LTL-checked plans.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def subsets(p):
        p.add_argument("--specs-subset", help="comma-separated specification names to keep")
        p.add_argument("--props-subset", help="comma-separated proposition names to keep")

    v = sub.add_parser("verify", help="check a plan against a specification file")
    v.add_argument("model")
    v.add_argument("--specs", required=True)
    v.add_argument("--decls", help="proposition declarations merged into the model as free inputs")
    v.add_argument("--int-range", type=int, nargs=2, metavar=("LO", "HI"))
    v.add_argument("--no-traces", action="store_true")
    v.add_argument("--cross-check", action="store_true", help="also run the tableau oracle")
    subsets(v)
    v.set_defaults(fn=cmd_verify)

    def common(p):
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", choices=["scripted", "replay", "http"])
        p.add_argument("--strategy", choices=["single", "two", "multi"])
        p.add_argument("--out", help="artifact directory (default: a fresh timestamped one)")
        subsets(p)

    o = sub.add_parser("optimize", help="run the prompt optimization loop")
    common(o)
    o.add_argument("--steps", type=int)
    o.set_defaults(fn=cmd_optimize)

    e = sub.add_parser("evaluate", help="score prompt versions on the evaluation tasks")
    common(e)
    e.add_argument("--prompt-version", type=int, action="append")
    e.add_argument("--prompts", help="prompt store to read instead of paths.prompts")
    e.add_argument("--icl", help="YAML demonstrations prepended to the plan prompts")
    e.set_defaults(fn=cmd_evaluate)

    c = sub.add_parser("oracle-check", help="differential test of the checker against the oracles")
    c.add_argument("config", nargs="?")
    c.add_argument("--n", type=int)
    c.add_argument("--seed", type=int)
    c.set_defaults(fn=cmd_oracle_check)
    return ap


def main(argv: Optional[Sequence[str]] = None, out: TextIO = sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args, out)


if __name__ == "__main__":
    sys.exit(main())
