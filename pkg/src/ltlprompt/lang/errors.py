from __future__ import annotations

from typing import Optional


class SmvError(Exception):
    """A diagnostic against plan or spec text, with a 1-based position."""

    kind = "error"

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None,
                 token: Optional[str] = None):
        self.message = message
        self.line = line
        self.col = col
        self.token = token
        super().__init__(self.render())

    def render(self) -> str:
        where = f"{self.line}:{self.col}: " if self.line is not None else ""
        near = f" (at {self.token!r})" if self.token else ""
        return f"{where}{self.kind}: {self.message}{near}"


class LexError(SmvError):
    kind = "lexical error"


class SmvSyntaxError(SmvError):
    kind = "syntax error"


class SortError(SmvError):
    kind = "sort error"


class DuplicateDeclaration(SmvError):
    kind = "duplicate declaration"


class UndeclaredVariable(SmvError):
    kind = "undeclared variable"
