"""LTL formula trees.

Atoms wrap a propositional test from the plan language (a bare boolean
variable, ``Var = Value``, or an integer comparison). ``Release`` never comes
out of the parser; negation normal form introduces it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from ltlprompt.lang.ast import BinOp, Expr
from ltlprompt.lang.printer import format_expr


@dataclass(frozen=True)
class Atom:
    test: Expr

    def __str__(self) -> str:
        text = format_expr(self.test)
        return f"({text})" if isinstance(self.test, BinOp) else text


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self) -> str:
        return "TRUE" if self.value else "FALSE"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Not:
    operand: "Formula"

    def __str__(self) -> str:
        return f"!{_wrap(self.operand)}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class Next:
    operand: "Formula"

    def __str__(self) -> str:
        return f"X {_wrap(self.operand)}"


@dataclass(frozen=True)
class Finally:
    operand: "Formula"

    def __str__(self) -> str:
        return f"F {_wrap(self.operand)}"


@dataclass(frozen=True)
class Globally:
    operand: "Formula"

    def __str__(self) -> str:
        return f"G {_wrap(self.operand)}"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Release:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} V {self.right})"


Formula = Union[Atom, Const, Not, And, Or, Implies, Next, Finally, Globally, Until, Release]

UNARY = (Not, Next, Finally, Globally)
BINARY = (And, Or, Implies, Until, Release)


def _wrap(f: Formula) -> str:
    text = str(f)
    if isinstance(f, (Atom, Const, Not, Next, Finally, Globally)) or text.startswith("("):
        return text
    return f"({text})"


def children(f: Formula) -> tuple:
    if isinstance(f, UNARY):
        return (f.operand,)
    if isinstance(f, BINARY):
        return (f.left, f.right)
    return ()


def subformulas(f: Formula) -> Iterator[Formula]:
    """Post-order walk; children precede parents, duplicates included."""
    for c in children(f):
        yield from subformulas(c)
    yield f


def closure(f: Formula) -> frozenset:
    return frozenset(subformulas(f))


def atoms(f: Formula) -> list:
    """Distinct atoms in first-occurrence order."""
    seen: dict = {}
    for g in subformulas(f):
        if isinstance(g, Atom):
            seen.setdefault(g, None)
    return list(seen)


def depth(f: Formula) -> int:
    cs = children(f)
    return 0 if not cs else 1 + max(depth(c) for c in cs)


def negate(f: Formula) -> Formula:
    return Not(f)
