"""Syntax trees for the SMV-subset plan language.

Every node is a frozen dataclass. Source positions are carried for
diagnostics but excluded from equality, so a re-parsed tree compares equal
to the original regardless of layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

Pos = Optional[Tuple[int, int]]


def _pos() -> Pos:
    return field(default=None, compare=False, repr=False)


# -- sorts -------------------------------------------------------------------


@dataclass(frozen=True)
class BooleanSort:
    def __str__(self) -> str:
        return "boolean"


@dataclass(frozen=True)
class EnumSort:
    values: Tuple[str, ...]

    def __str__(self) -> str:
        return "{" + ", ".join(self.values) + "}"


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __str__(self) -> str:
        return f"{self.lo}..{self.hi}"


Sort = Union[BooleanSort, EnumSort, IntRange]


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class BoolLit:
    value: bool
    pos: Pos = _pos()


@dataclass(frozen=True)
class IntLit:
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class EnumLit:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class VarRef:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Temporal:
    """Unary temporal operator ``X``, ``F`` or ``G``; only legal in specs."""

    op: str
    operand: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class SetLit:
    values: Tuple["Expr", ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Case:
    branches: Tuple[Tuple["Expr", "Expr"], ...]
    pos: Pos = _pos()


Expr = Union[BoolLit, IntLit, EnumLit, VarRef, Not, BinOp, Temporal, SetLit, Case]

LOGICAL_OPS = frozenset({"&", "|", "->"})
COMPARISON_OPS = frozenset({"=", "!=", "<", "<=", ">", ">="})
ARITH_OPS = frozenset({"+", "-"})
# binary `U` shares BinOp with the propositional operators
TEMPORAL_BINARY_OPS = frozenset({"U"})


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    name: str
    sort: Sort
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assignment:
    kind: str  # "init" | "next"
    target: str
    rhs: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class SmvModel:
    module_name: str
    variables: Tuple[VarDecl, ...]
    assignments: Tuple[Assignment, ...]
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def var(self, name: str) -> VarDecl:
        for decl in self.variables:
            if decl.name == name:
                return decl
        raise KeyError(name)

    def assignment(self, kind: str, target: str) -> Optional[Assignment]:
        for a in self.assignments:
            if a.kind == kind and a.target == target:
                return a
        return None


@dataclass(frozen=True)
class NamedSpec:
    name: str
    formula: "object"  # ltlprompt.ltl.formula.Formula
    source: str = field(default="", compare=False)
    pos: Pos = _pos()
