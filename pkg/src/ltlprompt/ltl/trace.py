"""Text rendering of lasso counterexamples.

One state per line as ``var=value`` pairs. The stem comes first, then the
marker line, then the loop::

    state 1: Action=Stop Stop_Sign=FALSE
    -- loop starts here --
    state 2: Action=Turn_left Stop_Sign=TRUE

Truncated sections end with a ``-- N more ... states omitted --`` line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ltlprompt.ltl.lasso import Lasso
from ltlprompt.ts import TransitionSystem, Value, format_value

LOOP_MARKER = "-- loop starts here --"
_OMITTED = re.compile(r"^-- (\d+) more (stem|loop) states omitted --$")
_STATE = re.compile(r"^state (\d+): ?(.*)$")


def _line(ts: TransitionSystem, n: int, s: int) -> str:
    pairs = " ".join(f"{k}={format_value(v)}" for k, v in ts.valuation(s).items())
    return f"state {n}: {pairs}"


def format_trace(ts: TransitionSystem, lasso: Lasso, max_stem: Optional[int] = None,
                 max_loop: Optional[int] = None) -> str:
    lines: List[str] = []
    n = 1
    stem, loop = lasso.stem, lasso.loop
    for s in stem[:max_stem]:
        lines.append(_line(ts, n, s))
        n += 1
    if max_stem is not None and len(stem) > max_stem:
        lines.append(f"-- {len(stem) - max_stem} more stem states omitted --")
        n += len(stem) - max_stem
    lines.append(LOOP_MARKER)
    for s in loop[:max_loop]:
        lines.append(_line(ts, n, s))
        n += 1
    if max_loop is not None and len(loop) > max_loop:
        lines.append(f"-- {len(loop) - max_loop} more loop states omitted --")
    return "\n".join(lines) + "\n"


@dataclass
class ParsedTrace:
    stem: List[Dict[str, str]]
    loop: List[Dict[str, str]]
    omitted_stem: int = 0
    omitted_loop: int = 0


def _pairs(text: str) -> Dict[str, str]:
    out = {}
    for item in text.split():
        name, _, value = item.partition("=")
        out[name] = value
    return out


def parse_trace(text: str) -> ParsedTrace:
    """Inverse of ``format_trace``; values stay as their printed strings."""
    stem: List[Dict[str, str]] = []
    loop: List[Dict[str, str]] = []
    omitted = {"stem": 0, "loop": 0}
    cur = stem
    seen_marker = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == LOOP_MARKER:
            if seen_marker:
                raise ValueError("duplicate loop marker")
            seen_marker, cur = True, loop
            continue
        m = _OMITTED.match(line)
        if m:
            omitted[m.group(2)] = int(m.group(1))
            continue
        m = _STATE.match(line)
        if not m:
            raise ValueError(f"unrecognised trace line: {line!r}")
        cur.append(_pairs(m.group(2)))
    if not seen_marker:
        raise ValueError("trace has no loop marker")
    return ParsedTrace(stem, loop, omitted["stem"], omitted["loop"])


def trace_values(ts: TransitionSystem, lasso: Lasso) -> Tuple[List[Dict[str, Value]], List[Dict[str, Value]]]:
    return [ts.valuation(s) for s in lasso.stem], [ts.valuation(s) for s in lasso.loop]
