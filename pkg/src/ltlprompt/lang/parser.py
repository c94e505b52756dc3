"""Recursive-descent parser for plan models and LTLSPEC files."""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from ltlprompt.lang import ast
from ltlprompt.lang.ast import (
    Assignment, BinOp, BooleanSort, BoolLit, Case, EnumLit, EnumSort, IntLit, IntRange,
    NamedSpec, Not, SetLit, SmvModel, Sort, Temporal, VarDecl, VarRef,
)
from ltlprompt.lang.errors import (
    DuplicateDeclaration, SmvSyntaxError, SortError, UndeclaredVariable,
)
from ltlprompt.lang.lexer import Token, tokenize
from ltlprompt.lang.sorts import BOOL, check_value, sort_of
from ltlprompt.ltl import formula as F

DEFAULT_INT_RANGE = (0, 15)

_RELOPS = ("=", "!=", "<", "<=", ">", ">=")
_EXPR_START_KW = {"TRUE", "FALSE", "X", "F", "G"}


class _Parser:
    def __init__(self, text: str, temporal: bool = False):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.temporal = temporal
        self.env: Dict[str, Sort] = {}
        self.values: set = set()

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "kw") and t.text == text

    def accept(self, text: str) -> Optional[Token]:
        return self.advance() if self.at(text) else None

    def error(self, message: str, tok: Optional[Token] = None) -> SmvSyntaxError:
        tok = tok or self.tok
        return SmvSyntaxError(message, tok.line, tok.col, tok.text or "<end of input>")

    def expect(self, text: str, context: str = "") -> Token:
        if not self.at(text):
            where = f" {context}" if context else ""
            raise self.error(f"expected '{text}'{where}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}")
        return self.advance()

    # -- expressions ---------------------------------------------------------

    def starts_expr(self) -> bool:
        t = self.tok
        if t.kind in ("ident", "int"):
            return True
        if t.kind == "kw":
            return t.text in ("TRUE", "FALSE") or (self.temporal and t.text in _EXPR_START_KW)
        return t.kind == "sym" and t.text in ("(", "!", "-")

    def expr(self):
        return self.implies()

    def implies(self):
        left = self.disjunction()
        if self.at("->"):
            t = self.advance()
            return BinOp("->", left, self.implies(), pos=(t.line, t.col))
        return left

    def disjunction(self):
        left = self.conjunction()
        while self.at("|"):
            t = self.advance()
            left = BinOp("|", left, self.conjunction(), pos=(t.line, t.col))
        return left

    def conjunction(self):
        left = self.until()
        while self.at("&"):
            t = self.advance()
            left = BinOp("&", left, self.until(), pos=(t.line, t.col))
        return left

    def until(self):
        left = self.comparison()
        if self.temporal and self.at("U"):
            t = self.advance()
            return BinOp("U", left, self.until(), pos=(t.line, t.col))
        return left

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "sym" and self.tok.text in _RELOPS:
            t = self.advance()
            right = self.additive()
            if self.tok.kind == "sym" and self.tok.text in _RELOPS:
                raise self.error("comparison operators do not chain; add parentheses")
            return BinOp(t.text, left, right, pos=(t.line, t.col))
        return left

    def additive(self):
        left = self.unary()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            t = self.advance()
            left = BinOp(t.text, left, self.unary(), pos=(t.line, t.col))
        return left

    def unary(self):
        t = self.tok
        if self.at("!"):
            self.advance()
            return Not(self.unary(), pos=(t.line, t.col))
        if self.temporal and t.kind == "kw" and t.text in ("X", "F", "G"):
            self.advance()
            if not self.starts_expr():
                raise self.error(f"temporal operator '{t.text}' needs an operand")
            return Temporal(t.text, self.unary(), pos=(t.line, t.col))
        if self.at("-"):
            self.advance()
            if self.tok.kind != "int":
                raise self.error("unary '-' applies to integer literals only")
            n = self.advance()
            return IntLit(-int(n.text), pos=(t.line, t.col))
        return self.primary()

    def primary(self):
        t = self.tok
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")", f"to close '(' opened at {t.line}:{t.col}")
            return inner
        if t.kind == "kw" and t.text in ("TRUE", "FALSE"):
            self.advance()
            return BoolLit(t.text == "TRUE", pos=(t.line, t.col))
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text), pos=(t.line, t.col))
        if t.kind == "ident":
            self.advance()
            return self.resolve(t)
        if t.kind == "kw" and t.text in ("X", "F", "G", "U"):
            raise self.error(f"temporal operator '{t.text}' is only allowed in specifications")
        raise self.error("expected an expression")

    def resolve(self, t: Token):
        if t.text in self.env:
            return VarRef(t.text, pos=(t.line, t.col))
        if t.text in self.values:
            return EnumLit(t.text, pos=(t.line, t.col))
        raise UndeclaredVariable(f"'{t.text}' is neither a declared variable nor an enum value",
                                 t.line, t.col, t.text)

    # -- model ---------------------------------------------------------------

    def model(self, int_range: Tuple[int, int]) -> SmvModel:
        self.expect("MODULE", "at start of model")
        name = self.ident("module name").text
        decls: List[VarDecl] = []
        if self.accept("VAR"):
            while self.tok.kind == "ident":
                decls.append(self.decl(int_range))
        self.declare(decls)
        assigns: List[Assignment] = []
        warnings: List[str] = []
        if self.accept("ASSIGN"):
            while self.at("init") or self.at("next"):
                assigns.append(self.assignment(warnings))
        if self.tok.kind != "eof":
            raise self.error("expected 'VAR', 'ASSIGN', 'init(...)' or 'next(...)'")
        self.check_assignments(assigns)
        return SmvModel(name, tuple(decls), tuple(assigns), tuple(warnings))

    def decl(self, int_range: Tuple[int, int]) -> VarDecl:
        name = self.ident("variable name")
        self.expect(":", f"after variable '{name.text}'")
        t = self.tok
        if self.accept("boolean"):
            sort: Sort = BooleanSort()
        elif self.accept("integer"):
            sort = IntRange(*int_range)
        elif self.accept("{"):
            values: List[str] = []
            while True:
                v = self.ident("enum value")
                if v.text in values:
                    raise DuplicateDeclaration(f"enum value '{v.text}' listed twice",
                                               v.line, v.col, v.text)
                values.append(v.text)
                if not self.accept(","):
                    break
            self.expect("}", "to close enum declaration")
            sort = EnumSort(tuple(values))
        elif self.tok.kind == "int" or self.at("-"):
            lo = self.int_literal()
            self.expect("..", "in integer range")
            hi = self.int_literal()
            if lo > hi:
                raise SortError(f"empty range {lo}..{hi}", t.line, t.col, t.text)
            sort = IntRange(lo, hi)
        else:
            raise self.error("expected 'boolean', 'integer', an enum '{...}' or a range 'lo..hi'")
        self.expect(";", f"after declaration of '{name.text}'")
        return VarDecl(name.text, sort, pos=(name.line, name.col))

    def int_literal(self) -> int:
        neg = self.accept("-") is not None
        if self.tok.kind != "int":
            raise self.error("expected integer")
        value = int(self.advance().text)
        return -value if neg else value

    def declare(self, decls: Sequence[VarDecl]) -> None:
        for d in decls:
            if d.name in self.env:
                line, col = d.pos or (None, None)
                raise DuplicateDeclaration(f"variable '{d.name}' declared twice", line, col, d.name)
            self.env[d.name] = d.sort
            if isinstance(d.sort, EnumSort):
                self.values.update(d.sort.values)
        for d in decls:
            if d.name in self.values:
                line, col = d.pos or (None, None)
                raise DuplicateDeclaration(f"'{d.name}' is both a variable and an enum value",
                                           line, col, d.name)

    def assignment(self, warnings: List[str]) -> Assignment:
        kind = self.advance()
        self.expect("(", f"after '{kind.text}'")
        target = self.ident("assignment target")
        if target.text not in self.env:
            raise UndeclaredVariable(f"assignment to undeclared variable '{target.text}'",
                                     target.line, target.col, target.text)
        self.expect(")", "after assignment target")
        self.expect(":=", f"in {kind.text}({target.text})")
        if self.at("case"):
            rhs = self.case(target.text, warnings)
        elif self.at("{"):
            rhs = self.set_literal()
        else:
            rhs = self.expr()
        self.expect(";", f"after {kind.text}({target.text}) assignment")
        return Assignment(kind.text, target.text, rhs, pos=(kind.line, kind.col))

    def case(self, target: str, warnings: List[str]) -> Case:
        opened = self.advance()
        branches = []
        saw_true = False
        while not self.at("esac"):
            if not self.starts_expr():
                raise SmvSyntaxError(
                    f"unterminated 'case' opened at {opened.line}:{opened.col}: expected 'esac'",
                    self.tok.line, self.tok.col, self.tok.text or "<end of input>")
            cond = self.expr()
            colon = self.expect(":", "after case condition")
            value = self.set_literal() if self.at("{") else self.expr()
            self.expect(";", "after case branch")
            if saw_true:
                warnings.append(f"{colon.line}:{colon.col}: unreachable case branch in "
                                f"assignment to '{target}' (follows a TRUE guard)")
            if isinstance(cond, BoolLit) and cond.value:
                saw_true = True
            branches.append((cond, value))
        if not branches:
            raise self.error("case expression needs at least one branch")
        self.advance()
        return Case(tuple(branches), pos=(opened.line, opened.col))

    def set_literal(self) -> SetLit:
        opened = self.expect("{")
        values = []
        while True:
            v = self.expr()
            if not isinstance(v, (BoolLit, IntLit, EnumLit)):
                line, col = getattr(v, "pos", None) or (opened.line, opened.col)
                raise SortError("set literal elements must be constants", line, col)
            if v in values:
                line, col = v.pos or (opened.line, opened.col)
                raise SortError("duplicate value in set literal", line, col)
            values.append(v)
            if not self.accept(","):
                break
        self.expect("}", "to close set literal")
        return SetLit(tuple(values), pos=(opened.line, opened.col))

    def check_assignments(self, assigns: Sequence[Assignment]) -> None:
        seen = set()
        for a in assigns:
            key = (a.kind, a.target)
            if key in seen:
                line, col = a.pos or (None, None)
                raise DuplicateDeclaration(f"second {a.kind}() assignment for '{a.target}'",
                                           line, col, a.target)
            seen.add(key)
            check_rhs(a.rhs, self.env[a.target], self.env, a.target)


def check_rhs(rhs, target: Sort, env: Mapping[str, Sort], target_name: str) -> None:
    if isinstance(rhs, Case):
        for cond, value in rhs.branches:
            if sort_of(cond, env) != BOOL:
                line, col = getattr(cond, "pos", None) or (None, None)
                raise SortError("case condition must be boolean", line, col)
            check_rhs(value, target, env, target_name)
    elif isinstance(rhs, SetLit):
        for v in rhs.values:
            check_value(v, target, env, target_name)
    else:
        check_value(rhs, target, env, target_name)


def parse_model(text: str, int_range: Tuple[int, int] = DEFAULT_INT_RANGE) -> SmvModel:
    """Parse and sort-check one plan model.

    Plain ``integer`` declarations become ``IntRange(*int_range)``.
    Raises a subclass of ``SmvError`` carrying line/column on any failure.
    """
    return _Parser(text).model(int_range)


# -- specifications ----------------------------------------------------------

Env = Union[SmvModel, Iterable[VarDecl], Mapping[str, Sort]]


def environment(env: Env) -> Dict[str, Sort]:
    if isinstance(env, SmvModel):
        return {d.name: d.sort for d in env.variables}
    if isinstance(env, Mapping):
        return dict(env)
    return {d.name: d.sort for d in env}


def parse_expr(text: str, env: Env):
    """Parse a non-temporal expression and sort-check it against ``env``."""
    p = _Parser(text)
    p.env = environment(env)
    p.values = {v for s in p.env.values() if isinstance(s, EnumSort) for v in s.values}
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("unexpected token after expression")
    sort_of(e, p.env)
    return e


def parse_formula(text: str, env: Env):
    p = _Parser(text, temporal=True)
    p.env = environment(env)
    p.values = {v for s in p.env.values() if isinstance(s, EnumSort) for v in s.values}
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("unexpected token after formula")
    return to_formula(e, p.env)


def parse_specs(text: str, env: Env) -> List[NamedSpec]:
    """Parse ``LTLSPEC NAME <id> := <formula>`` entries, sort-checked against ``env``."""
    p = _Parser(text, temporal=True)
    p.env = environment(env)
    p.values = {v for s in p.env.values() if isinstance(s, EnumSort) for v in s.values}
    specs: List[NamedSpec] = []
    names = set()
    while p.tok.kind != "eof":
        head = p.expect("LTLSPEC", "to start a specification")
        p.expect("NAME", "after LTLSPEC (specifications must be named)")
        name = p.ident("specification name")
        if name.text in names:
            raise DuplicateDeclaration(f"specification '{name.text}' defined twice",
                                       name.line, name.col, name.text)
        names.add(name.text)
        p.expect(":=", f"after specification name '{name.text}'")
        start = p.tok
        e = p.expr()
        end = p.toks[p.i - 1]
        source = p.text[start.offset:end.offset + len(end.text)]
        p.accept(";")
        if not (p.at("LTLSPEC") or p.tok.kind == "eof"):
            raise p.error(f"unexpected token after specification '{name.text}'")
        specs.append(NamedSpec(name.text, to_formula(e, p.env), source=source,
                               pos=(head.line, head.col)))
    return specs


def to_formula(e, env: Mapping[str, Sort]):
    """Lift a parsed expression into an LTL formula, sort-checking atoms."""
    if isinstance(e, BoolLit):
        return F.Const(e.value)
    if isinstance(e, VarRef):
        if sort_of(e, env) != BOOL:
            raise SortError(f"'{e.name}' is not boolean; compare it with a value",
                            *(e.pos or (None, None)), e.name)
        return F.Atom(e)
    if isinstance(e, Not):
        return F.Not(to_formula(e.operand, env))
    if isinstance(e, Temporal):
        return {"X": F.Next, "F": F.Finally, "G": F.Globally}[e.op](to_formula(e.operand, env))
    if isinstance(e, BinOp):
        if e.op in ("&", "|", "->", "U"):
            cls = {"&": F.And, "|": F.Or, "->": F.Implies, "U": F.Until}[e.op]
            return cls(to_formula(e.left, env), to_formula(e.right, env))
        if e.op in _RELOPS:
            sort_of(e, env)
            return F.Atom(e)
    line, col = getattr(e, "pos", None) or (None, None)
    raise SortError("expected a boolean formula", line, col)


__all__ = ["parse_model", "parse_specs", "parse_formula", "parse_expr", "to_formula", "environment",
           "DEFAULT_INT_RANGE", "ast"]
