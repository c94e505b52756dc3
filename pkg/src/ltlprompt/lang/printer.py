"""Canonical text for plan models; re-parses to a structurally equal tree."""

from __future__ import annotations

from ltlprompt.lang.ast import (
    Assignment, BinOp, BoolLit, Case, EnumLit, IntLit, Not, SetLit, SmvModel, Temporal, VarRef,
)

_PREC = {"->": 1, "|": 2, "&": 3, "U": 4,
         "=": 5, "!=": 5, "<": 5, "<=": 5, ">": 5, ">=": 5,
         "+": 6, "-": 6}
_UNARY = 7
_RIGHT_ASSOC = {"->", "U"}
_NON_ASSOC = {"=", "!=", "<", "<=", ">", ">="}


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, (Not, Temporal)):
        return _UNARY
    return 8


def format_expr(e) -> str:
    if isinstance(e, BoolLit):
        return "TRUE" if e.value else "FALSE"
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, (EnumLit, VarRef)):
        return e.name
    if isinstance(e, Not):
        return "!" + _child(e.operand, _UNARY, strict=False)
    if isinstance(e, Temporal):
        return f"{e.op} " + _child(e.operand, _UNARY, strict=False)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op in _NON_ASSOC:
            left, right = _child(e.left, p, True), _child(e.right, p, True)
        elif e.op in _RIGHT_ASSOC:
            left, right = _child(e.left, p, True), _child(e.right, p, False)
        else:
            left, right = _child(e.left, p, False), _child(e.right, p, True)
        return f"{left} {e.op} {right}"
    if isinstance(e, SetLit):
        return "{" + ", ".join(format_expr(v) for v in e.values) + "}"
    raise TypeError(f"cannot format {type(e).__name__}")


def _child(e, parent_prec: int, strict: bool) -> str:
    text = format_expr(e)
    p = _prec(e)
    if p < parent_prec or (strict and p == parent_prec):
        return f"({text})"
    return text


def format_assignment(a: Assignment) -> str:
    head = f"  {a.kind}({a.target}) :="
    if not isinstance(a.rhs, Case):
        return f"{head} {format_expr(a.rhs)};"
    lines = [head, "    case"]
    lines += [f"      {format_expr(c)} : {format_expr(v)};" for c, v in a.rhs.branches]
    lines.append("    esac;")
    return "\n".join(lines)


def pretty_print(model: SmvModel) -> str:
    out = [f"MODULE {model.module_name}"]
    if model.variables:
        out.append("VAR")
        out.extend(f"  {d.name} : {d.sort};" for d in model.variables)
    if model.assignments:
        out.append("ASSIGN")
        out.extend(format_assignment(a) for a in model.assignments)
    return "\n".join(out) + "\n"
