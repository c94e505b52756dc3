"""Ultimately periodic words and exact LTL evaluation on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from ltlprompt.ltl.formula import (
    And, Atom, Const, Finally, Formula, Globally, Implies, Next, Not, Or, Release, Until,
    subformulas,
)

Holds = Callable[[Any, Atom], bool]


@dataclass(frozen=True)
class Lasso:
    """``stem · loop^ω`` over transition-system state ids."""

    stem: Tuple[int, ...]
    loop: Tuple[int, ...]

    def __post_init__(self):
        if not self.loop:
            raise ValueError("lasso loop must be non-empty")

    def __len__(self) -> int:
        return len(self.stem) + len(self.loop)

    def states(self) -> Tuple[int, ...]:
        return self.stem + self.loop

    def is_path_of(self, ts) -> bool:
        seq = self.states()
        if seq[0] not in ts.initial:
            return False
        pairs = list(zip(seq, seq[1:])) + [(self.loop[-1], self.loop[0])]
        return all(b in ts.successors(a) for a, b in pairs)


@dataclass(frozen=True)
class Verdict:
    status: str  # "Holds" or "Violated"
    counterexample: Optional[Lasso] = None

    def __post_init__(self):
        if self.status not in ("Holds", "Violated"):
            raise ValueError(f"bad verdict status {self.status!r}")
        if (self.status == "Violated") != (self.counterexample is not None):
            raise ValueError("exactly the Violated verdict carries a counterexample")

    @property
    def holds(self) -> bool:
        return self.status == "Holds"

    @classmethod
    def ok(cls) -> "Verdict":
        return cls("Holds")

    @classmethod
    def violated(cls, lasso: Lasso) -> "Verdict":
        return cls("Violated", lasso)


def valuation_holds(letter: Mapping[str, Any], atom: Atom) -> bool:
    """Default atom semantics for letters given as ``{variable: value}`` maps."""
    from ltlprompt.ts import eval_expr

    return bool(eval_expr(atom.test, letter))


def ts_holds(ts) -> Holds:
    """Atom semantics for letters that are state ids of ``ts``."""
    cache: Dict[Atom, Callable[[int], bool]] = {}

    def holds(s: int, atom: Atom) -> bool:
        f = cache.get(atom)
        if f is None:
            f = cache[atom] = ts.atom_evaluator(atom.test)
        return f(s)

    return holds


def eval_on_lasso(stem: Sequence, loop: Sequence, phi: Formula,
                  holds: Holds = valuation_holds) -> bool:
    """Truth of ``phi`` at position 0 of ``stem · loop^ω``.

    Every subformula gets one truth value per lasso position; the position
    after the last one is the loop start. Until is the least and Release the
    greatest fixpoint of its one-step unfolding.
    """
    if not loop:
        raise ValueError("loop must be non-empty")
    word = list(stem) + list(loop)
    n, k = len(word), len(stem)
    nxt = [i + 1 for i in range(n - 1)] + [k]
    val: Dict[Formula, List[bool]] = {}
    for f in subformulas(phi):
        if f in val:
            continue
        if isinstance(f, Atom):
            v = [bool(holds(x, f)) for x in word]
        elif isinstance(f, Const):
            v = [f.value] * n
        elif isinstance(f, Not):
            v = [not x for x in val[f.operand]]
        elif isinstance(f, And):
            v = [a and b for a, b in zip(val[f.left], val[f.right])]
        elif isinstance(f, Or):
            v = [a or b for a, b in zip(val[f.left], val[f.right])]
        elif isinstance(f, Implies):
            v = [(not a) or b for a, b in zip(val[f.left], val[f.right])]
        elif isinstance(f, Next):
            sub = val[f.operand]
            v = [sub[nxt[i]] for i in range(n)]
        elif isinstance(f, (Until, Finally)):
            left = val[f.left] if isinstance(f, Until) else [True] * n
            right = val[f.right] if isinstance(f, Until) else val[f.operand]
            v = _fixpoint(left, right, nxt, least=True)
        elif isinstance(f, (Release, Globally)):
            left = val[f.left] if isinstance(f, Release) else [False] * n
            right = val[f.right] if isinstance(f, Release) else val[f.operand]
            v = _fixpoint(left, right, nxt, least=False)
        else:
            raise TypeError(type(f).__name__)
        val[f] = v
    return val[phi][0]


def _fixpoint(left: List[bool], right: List[bool], nxt: List[int], least: bool) -> List[bool]:
    n = len(left)
    v = [not least] * n
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            if least:
                new = right[i] or (left[i] and v[nxt[i]])
            else:
                new = right[i] and (left[i] or v[nxt[i]])
            if new != v[i]:
                v[i] = new
                changed = True
    return v
