from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from ltlprompt.lang.errors import LexError

KEYWORDS = frozenset({
    "MODULE", "VAR", "ASSIGN", "init", "next", "case", "esac", "TRUE", "FALSE",
    "boolean", "integer", "LTLSPEC", "NAME", "X", "F", "G", "U",
})

# longest symbols first
SYMBOLS = (":=", "->", "!=", "<=", ">=", "..", ":", ";", ",", "(", ")", "{", "}",
           "<", ">", "=", "!", "&", "|", "+", "-")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", "kw", "sym", "eof"
    text: str
    line: int
    col: int
    offset: int = 0


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r\f":
            i, col = i + 1, col + 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        m = _IDENT.match(text, i)
        if m:
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col, i))
            i, col = m.end(), col + len(word)
            continue
        m = _INT.match(text, i)
        if m:
            tokens.append(Token("int", m.group(), line, col, i))
            i, col = m.end(), col + len(m.group())
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("sym", sym, line, col, i))
                i, col = i + len(sym), col + len(sym)
                break
        else:
            raise LexError(f"unexpected character {ch!r}", line, col, ch)
    tokens.append(Token("eof", "", line, col, n))
    return tokens
