"""Sort inference over plan-language expressions.

Sort descriptors are small tuples: ``("bool",)``, ``("int",)``,
``("enum", values)`` for enum-typed variables and ``("sym", name)`` for a bare
enum constant, whose owning enum is decided by the comparison it sits in.
"""

from __future__ import annotations

from typing import Mapping

from ltlprompt.lang.ast import (
    ARITH_OPS, COMPARISON_OPS, LOGICAL_OPS, BinOp, BooleanSort, BoolLit, EnumLit, EnumSort,
    Expr, IntLit, IntRange, Not, Sort, Temporal, VarRef,
)
from ltlprompt.lang.errors import SortError, UndeclaredVariable

BOOL = ("bool",)
INT = ("int",)


def _at(node) -> dict:
    pos = getattr(node, "pos", None)
    return {"line": pos[0], "col": pos[1]} if pos else {}


def describe(sort: Sort) -> tuple:
    if isinstance(sort, BooleanSort):
        return BOOL
    if isinstance(sort, IntRange):
        return INT
    return ("enum", sort.values)


def _name(d: tuple) -> str:
    if d[0] == "enum":
        return "{" + ", ".join(d[1]) + "}"
    if d[0] == "sym":
        return f"constant {d[1]}"
    return {"bool": "boolean", "int": "integer"}[d[0]]


def comparable(a: tuple, b: tuple) -> bool:
    if a[0] in ("enum", "sym") and b[0] in ("enum", "sym"):
        va = set(a[1]) if a[0] == "enum" else {a[1]}
        vb = set(b[1]) if b[0] == "enum" else {b[1]}
        return bool(va & vb)
    return a == b


def sort_of(expr: Expr, env: Mapping[str, Sort]) -> tuple:
    if isinstance(expr, BoolLit):
        return BOOL
    if isinstance(expr, IntLit):
        return INT
    if isinstance(expr, EnumLit):
        return ("sym", expr.name)
    if isinstance(expr, VarRef):
        if expr.name not in env:
            raise UndeclaredVariable(f"'{expr.name}' is not declared", token=expr.name, **_at(expr))
        return describe(env[expr.name])
    if isinstance(expr, Not):
        _expect(expr.operand, BOOL, env, "operand of '!'")
        return BOOL
    if isinstance(expr, BinOp):
        if expr.op in LOGICAL_OPS:
            _expect(expr.left, BOOL, env, f"operand of '{expr.op}'")
            _expect(expr.right, BOOL, env, f"operand of '{expr.op}'")
            return BOOL
        if expr.op in ARITH_OPS:
            _expect(expr.left, INT, env, f"operand of '{expr.op}'")
            _expect(expr.right, INT, env, f"operand of '{expr.op}'")
            return INT
        if expr.op in COMPARISON_OPS:
            left, right = sort_of(expr.left, env), sort_of(expr.right, env)
            if expr.op in ("=", "!="):
                if not comparable(left, right):
                    raise SortError(f"cannot compare {_name(left)} with {_name(right)}",
                                    token=expr.op, **_at(expr))
            elif left != INT or right != INT:
                raise SortError(f"'{expr.op}' needs integer operands, got {_name(left)} and "
                                f"{_name(right)}", token=expr.op, **_at(expr))
            return BOOL
    if isinstance(expr, Temporal) or (isinstance(expr, BinOp) and expr.op == "U"):
        raise SortError("temporal operator outside a specification", token=getattr(expr, "op", None),
                        **_at(expr))
    raise SortError(f"unexpected expression {type(expr).__name__}", **_at(expr))


def _expect(expr: Expr, want: tuple, env: Mapping[str, Sort], what: str) -> None:
    got = sort_of(expr, env)
    if got != want:
        raise SortError(f"{what} must be {_name(want)}, got {_name(got)}", **_at(expr))


def check_value(expr: Expr, target: Sort, env: Mapping[str, Sort], target_name: str) -> None:
    """Check that ``expr`` can be stored in a variable of sort ``target``."""
    got = sort_of(expr, env)
    if isinstance(target, BooleanSort):
        ok = got == BOOL
    elif isinstance(target, IntRange):
        ok = got == INT
        if ok and isinstance(expr, IntLit) and not target.lo <= expr.value <= target.hi:
            raise SortError(f"{expr.value} is outside {target} of '{target_name}'",
                            token=str(expr.value), **_at(expr))
    else:
        if got[0] == "sym":
            ok = got[1] in target.values
        elif got[0] == "enum":
            ok = set(got[1]) <= set(target.values)
        else:
            ok = False
    if not ok:
        raise SortError(f"value of sort {_name(got)} does not fit '{target_name}' "
                        f"of sort {_name(describe(target))}", **_at(expr))


def enum_values(env: Mapping[str, Sort]) -> set:
    out: set = set()
    for sort in env.values():
        if isinstance(sort, EnumSort):
            out.update(sort.values)
    return out
