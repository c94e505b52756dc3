"""Seeded random systems and formulas for checker-versus-oracle testing."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from ltlprompt.lang.ast import (
    Assignment, BinOp, BooleanSort, BoolLit, Case, Not as ENot, SetLit, SmvModel, VarDecl, VarRef,
)
from ltlprompt.lang.printer import pretty_print
from ltlprompt.ltl import formula as F
from ltlprompt.ltl.check import check
from ltlprompt.ltl.lasso import eval_on_lasso, ts_holds
from ltlprompt.ltl.oracle import lasso_oracle, tableau_oracle
from ltlprompt.ts import compile_model

MAX_VARS = 6
MAX_DEPTH = 3


def _random_expr(rng: random.Random, names: Sequence[str], depth: int):
    if depth == 0 or rng.random() < 0.35:
        if rng.random() < 0.1:
            return BoolLit(rng.random() < 0.5)
        return VarRef(rng.choice(names))
    r = rng.random()
    if r < 0.25:
        return ENot(_random_expr(rng, names, depth - 1))
    op = rng.choice(["&", "|", "->"])
    return BinOp(op, _random_expr(rng, names, depth - 1), _random_expr(rng, names, depth - 1))


def random_model(rng: random.Random, max_vars: int = MAX_VARS) -> SmvModel:
    """Boolean model; most variables get a deterministic ``next``, a few stay free."""
    n = rng.randint(1, max_vars)
    names = [f"v{i}" for i in range(n)]
    decls = tuple(VarDecl(v, BooleanSort()) for v in names)
    assigns: List[Assignment] = []
    for v in names:
        if rng.random() < 0.85:
            assigns.append(Assignment("init", v, BoolLit(rng.random() < 0.5)))
        r = rng.random()
        if r < 0.1:
            continue  # free input
        if r < 0.2:
            rhs = SetLit((BoolLit(True), BoolLit(False)))
        elif r < 0.4:
            rhs = Case(((_random_expr(rng, names, 2), _random_expr(rng, names, 1)),
                        (BoolLit(True), _random_expr(rng, names, 1))))
        else:
            rhs = _random_expr(rng, names, 2)
        assigns.append(Assignment("next", v, rhs))
    return SmvModel("random", decls, tuple(assigns))


_UNARY = [F.Not, F.Next, F.Finally, F.Globally]
_BINARY = [F.And, F.Or, F.Implies, F.Until]


def random_formula(rng: random.Random, names: Sequence[str], depth: int = MAX_DEPTH) -> F.Formula:
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.05:
            return F.Const(rng.random() < 0.5)
        return F.Atom(VarRef(rng.choice(names)))
    if rng.random() < 0.45:
        return rng.choice(_UNARY)(random_formula(rng, names, depth - 1))
    cls = rng.choice(_BINARY)
    return cls(random_formula(rng, names, depth - 1), random_formula(rng, names, depth - 1))


@dataclass
class Mismatch:
    index: int
    model: SmvModel
    formula: F.Formula
    checker: str
    oracle: str
    reason: str


@dataclass
class DifferentialResult:
    instances: int = 0
    violated: int = 0
    agreements: int = 0
    lasso_checked: int = 0
    mismatches: List[Mismatch] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.mismatches and self.agreements == self.instances


def run_differential(n: int = 1000, seed: int = 7, lasso_bound: int = 3,
                     lasso_state_limit: int = 8, checker=check) -> DifferentialResult:
    """Compare ``check`` with the tableau oracle on ``n`` random instances.

    Small systems are also run through bounded lasso enumeration: any
    violation it finds must be a violation for ``check`` as well. Every
    counterexample is replayed through ``eval_on_lasso``.
    """
    rng = random.Random(seed)
    res = DifferentialResult()
    t0 = time.perf_counter()
    for i in range(n):
        model = random_model(rng)
        phi = random_formula(rng, [d.name for d in model.variables])
        ts = compile_model(model)
        got = checker(ts, phi)
        want = tableau_oracle(ts, phi)
        res.instances += 1
        reason: Optional[str] = None
        if got.status != want.status:
            reason = "verdict disagreement"
        elif got.counterexample is not None:
            res.violated += 1
            lasso = got.counterexample
            if not lasso.is_path_of(ts) or eval_on_lasso(lasso.stem, lasso.loop, phi, ts_holds(ts)):
                reason = "unsound counterexample"
        if reason is None and len(ts) <= lasso_state_limit:
            res.lasso_checked += 1
            small = lasso_oracle(ts, phi, lasso_bound)
            if not small.holds and got.holds:
                reason = "bounded lasso violation missed by check"
        if reason is None:
            res.agreements += 1
        else:
            res.mismatches.append(Mismatch(i, model, phi, got.status, want.status, reason))
    res.seconds = time.perf_counter() - t0
    return res


def render_mismatch(m: Mismatch) -> str:
    """Self-contained reproducer: the model text, the formula and both verdicts."""
    return (f"instance {m.index}: {m.reason}\n"
            f"formula: {m.formula}\n"
            f"check: {m.checker}  oracle: {m.oracle}\n"
            f"{pretty_print(m.model)}")
