"""Explicit-state semantics of plan models.

Only states reachable from the initial set are materialised. A variable with
no ``next`` assignment is an environment input and may take any value of its
domain at every step; this matches the ``{TRUE, FALSE}`` pattern LLM plans use
for sensor variables. Integer assignments saturate at the declared bounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ltlprompt.lang.ast import (
    BinOp, BooleanSort, BoolLit, Case, EnumLit, EnumSort, IntLit, IntRange, Not, SetLit,
    SmvModel, Sort, VarDecl, VarRef,
)
from ltlprompt.lang.errors import SortError
from ltlprompt.lang.parser import DEFAULT_INT_RANGE, parse_expr
from ltlprompt.lang.sorts import BOOL, sort_of

Value = Union[bool, int, str]
State = Tuple[Value, ...]

DEFAULT_STATE_CAP = 2 ** 20


class ResourceError(RuntimeError):
    """A configured size cap was exceeded."""


class StateCapExceeded(ResourceError):
    pass


class IncompleteCase(RuntimeError):
    """No branch of a ``next`` case fires in some reachable state."""

    def __init__(self, variable: str, valuation: Mapping[str, Value]):
        self.variable = variable
        self.valuation = dict(valuation)
        super().__init__(f"incomplete case in next({variable}): no branch holds in state "
                         f"{format_valuation(self.valuation)}")


@dataclass(frozen=True)
class CompileConfig:
    state_cap: int = DEFAULT_STATE_CAP
    int_range: Tuple[int, int] = DEFAULT_INT_RANGE


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)


def format_valuation(valuation: Mapping[str, Value]) -> str:
    return " ".join(f"{k}={format_value(v)}" for k, v in valuation.items())


def domain(sort: Sort) -> Tuple[Value, ...]:
    if isinstance(sort, BooleanSort):
        return (False, True)
    if isinstance(sort, EnumSort):
        return sort.values
    return tuple(range(sort.lo, sort.hi + 1))


# -- expression evaluation ---------------------------------------------------

_CMP: Dict[str, Callable[[Value, Value], bool]] = {
    "=": lambda a, b: a == b, "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


def compile_expr(e, index: Mapping[str, int]) -> Callable[[State], Value]:
    """Turn an expression into a closure over state tuples."""
    if isinstance(e, (BoolLit, IntLit)):
        v = e.value
        return lambda s: v
    if isinstance(e, EnumLit):
        name = e.name
        return lambda s: name
    if isinstance(e, VarRef):
        i = index[e.name]
        return lambda s: s[i]
    if isinstance(e, Not):
        f = compile_expr(e.operand, index)
        return lambda s: not f(s)
    if isinstance(e, BinOp):
        a, b = compile_expr(e.left, index), compile_expr(e.right, index)
        if e.op == "&":
            return lambda s: a(s) and b(s)
        if e.op == "|":
            return lambda s: a(s) or b(s)
        if e.op == "->":
            return lambda s: (not a(s)) or b(s)
        if e.op == "+":
            return lambda s: a(s) + b(s)
        if e.op == "-":
            return lambda s: a(s) - b(s)
        cmp = _CMP[e.op]
        return lambda s: cmp(a(s), b(s))
    raise TypeError(f"cannot evaluate {type(e).__name__}")


def eval_expr(e, valuation: Mapping[str, Value]) -> Value:
    names = list(valuation)
    return compile_expr(e, {n: i for i, n in enumerate(names)})(tuple(valuation[n] for n in names))


def _clamp(sort: Sort, v: Value) -> Value:
    if isinstance(sort, IntRange):
        return min(max(v, sort.lo), sort.hi)
    return v


def _compile_rhs(rhs, sort: Sort, index: Mapping[str, int]) -> Callable[[State], Optional[tuple]]:
    """Closure returning the tuple of values a right-hand side allows (None: no case fires)."""

    def values_of(v) -> Callable[[State], tuple]:
        if isinstance(v, SetLit):
            fs = [compile_expr(x, index) for x in v.values]
            return lambda s: tuple(dict.fromkeys(_clamp(sort, f(s)) for f in fs))
        f = compile_expr(v, index)
        return lambda s: (_clamp(sort, f(s)),)

    if isinstance(rhs, Case):
        branches = [(compile_expr(c, index), values_of(v)) for c, v in rhs.branches]

        def case(s):
            for cond, vals in branches:
                if cond(s):
                    return vals(s)
            return None

        return case
    return values_of(rhs)


def _references(e) -> bool:
    if isinstance(e, VarRef):
        return True
    if isinstance(e, Not):
        return _references(e.operand)
    if isinstance(e, BinOp):
        return _references(e.left) or _references(e.right)
    if isinstance(e, SetLit):
        return any(_references(v) for v in e.values)
    if isinstance(e, Case):
        return any(_references(c) or _references(v) for c, v in e.branches)
    return False


# -- the system --------------------------------------------------------------


@dataclass
class TransitionSystem:
    variables: Tuple[VarDecl, ...]
    states: List[State]
    initial: Tuple[int, ...]
    succ: List[Tuple[int, ...]]
    index: Dict[State, int] = field(repr=False)
    var_index: Dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.variables]

    @property
    def env(self) -> Dict[str, Sort]:
        return {d.name: d.sort for d in self.variables}

    def successors(self, s: int) -> Tuple[int, ...]:
        if not 0 <= s < len(self.states):
            raise KeyError(f"unknown state id {s}")
        return self.succ[s]

    def valuation(self, s: int) -> Dict[str, Value]:
        return dict(zip(self.names, self.states[s]))

    def value(self, s: int, name: str) -> Value:
        return self.states[s][self.var_index[name]]

    def atom_evaluator(self, test) -> Callable[[int], bool]:
        """Memoised truth of a boolean test over state ids."""
        if isinstance(test, str):
            test = parse_expr(test, self.env)
        if sort_of(test, self.env) != BOOL:
            raise SortError("atom must be a boolean test")
        f = compile_expr(test, self.var_index)
        cache: Dict[int, bool] = {}
        states = self.states

        def truth(s: int) -> bool:
            r = cache.get(s)
            if r is None:
                r = cache[s] = bool(f(states[s]))
            return r

        return truth

    def label(self, s: int, atom) -> bool:
        return self.atom_evaluator(atom)(s)

    def dump(self) -> str:
        """Line-oriented export: state id, var=value pairs, successor ids."""
        lines = []
        for sid, st in enumerate(self.states):
            pairs = " ".join(f"{n}={format_value(v)}" for n, v in zip(self.names, st))
            lines.append(f"{sid}\t{pairs}\t{','.join(map(str, self.succ[sid]))}")
        return "\n".join(lines) + "\n"


def merge_environment(model: SmvModel, env: Optional[Iterable[VarDecl]]) -> Tuple[VarDecl, ...]:
    """Model variables followed by environment-only declarations from ``env``."""
    decls = list(model.variables)
    if env is None:
        return tuple(decls)
    known = {d.name: d.sort for d in decls}
    for d in (env.variables if isinstance(env, SmvModel) else env):
        if d.name in known:
            if known[d.name] != d.sort:
                raise SortError(f"'{d.name}' is declared as {known[d.name]} in the plan but as "
                                f"{d.sort} in the proposition environment", token=d.name)
            continue
        decls.append(d)
        known[d.name] = d.sort
    return tuple(decls)


def compile_model(model: SmvModel, config: CompileConfig = CompileConfig(),
                  env: Optional[Iterable[VarDecl]] = None) -> TransitionSystem:
    """Build the reachable explicit-state system of ``model``.

    Declarations in ``env`` that the model does not declare are added as free
    environment inputs. Raises ``StateCapExceeded`` or ``IncompleteCase``.
    """
    decls = merge_environment(model, env)
    index = {d.name: i for i, d in enumerate(decls)}
    doms = [domain(d.sort) for d in decls]

    init_fixed: List[Tuple[Value, ...]] = []
    init_checks = []
    for i, d in enumerate(decls):
        a = model.assignment("init", d.name)
        if a is None:
            init_fixed.append(doms[i])
        elif _references(a.rhs):
            init_fixed.append(doms[i])
            init_checks.append((i, _compile_rhs(a.rhs, d.sort, index), d.name))
        else:
            vals = _compile_rhs(a.rhs, d.sort, index)(())
            if vals is None:
                raise IncompleteCase(d.name, {})
            init_fixed.append(tuple(v for v in doms[i] if v in vals))

    candidates = 1
    for vals in init_fixed:
        candidates *= len(vals)
    if candidates > config.state_cap:
        raise StateCapExceeded(f"{candidates} candidate initial states exceed state cap "
                               f"{config.state_cap}")

    next_fns = []
    for i, d in enumerate(decls):
        a = model.assignment("next", d.name)
        next_fns.append(None if a is None else _compile_rhs(a.rhs, d.sort, index))

    states: List[State] = []
    sindex: Dict[State, int] = {}

    def intern(st: State) -> int:
        sid = sindex.get(st)
        if sid is None:
            if len(states) >= config.state_cap:
                raise StateCapExceeded(f"more than {config.state_cap} reachable states")
            sid = sindex[st] = len(states)
            states.append(st)
        return sid

    initial = []
    for st in itertools.product(*init_fixed):
        ok = True
        for i, fn, name in init_checks:
            allowed = fn(st)
            if allowed is None:
                raise IncompleteCase(name, dict(zip(index, st)))
            if st[i] not in allowed:
                ok = False
                break
        if ok:
            initial.append(intern(st))
    if not initial:
        raise SortError("init assignments admit no initial state")

    succ: List[Tuple[int, ...]] = []
    by_choice: Dict[tuple, Tuple[int, ...]] = {}
    frontier = 0
    while frontier < len(states):
        st = states[frontier]
        choices = []
        for i, fn in enumerate(next_fns):
            if fn is None:
                choices.append(doms[i])
                continue
            vals = fn(st)
            if vals is None:
                raise IncompleteCase(decls[i].name, dict(zip(index, st)))
            choices.append(vals)
        key = tuple(choices)
        targets = by_choice.get(key)
        if targets is None:
            targets = tuple(sorted({intern(t) for t in itertools.product(*choices)}))
            by_choice[key] = targets
        succ.append(targets)
        frontier += 1

    return TransitionSystem(decls, states, tuple(initial), succ, sindex, index)


def successors(ts: TransitionSystem, s: int) -> Tuple[int, ...]:
    return ts.successors(s)


def label(ts: TransitionSystem, s: int, atom) -> bool:
    return ts.label(s, atom)
