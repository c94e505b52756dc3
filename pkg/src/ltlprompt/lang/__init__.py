"""The SMV-subset plan language and LTLSPEC files."""

from ltlprompt.lang.ast import (
    Assignment, BinOp, BooleanSort, BoolLit, Case, EnumLit, EnumSort, IntLit, IntRange,
    NamedSpec, Not, SetLit, SmvModel, Temporal, VarDecl, VarRef,
)
from ltlprompt.lang.errors import (
    DuplicateDeclaration, LexError, SmvError, SmvSyntaxError, SortError, UndeclaredVariable,
)
from ltlprompt.lang.parser import (
    DEFAULT_INT_RANGE, environment, parse_formula, parse_model, parse_specs,
)
from ltlprompt.lang.printer import format_expr, pretty_print

__all__ = [
    "Assignment", "BinOp", "BooleanSort", "BoolLit", "Case", "EnumLit", "EnumSort", "IntLit",
    "IntRange", "NamedSpec", "Not", "SetLit", "SmvModel", "Temporal", "VarDecl", "VarRef",
    "DuplicateDeclaration", "LexError", "SmvError", "SmvSyntaxError", "SortError",
    "UndeclaredVariable", "DEFAULT_INT_RANGE", "environment", "parse_formula", "parse_model",
    "parse_specs", "format_expr", "pretty_print",
]
