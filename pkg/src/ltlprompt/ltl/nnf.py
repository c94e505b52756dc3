from __future__ import annotations

from ltlprompt.ltl.formula import (
    FALSE, TRUE, And, Atom, Const, Finally, Formula, Globally, Implies, Next, Not, Or, Release,
    Until,
)


def nnf(f: Formula) -> Formula:
    """Negation normal form: negation only on atoms, no implication.

    ``Release`` is the dual of ``Until`` and only appears here.
    """
    return _pos(f)


def _pos(f: Formula) -> Formula:
    if isinstance(f, (Atom, Const)):
        return f
    if isinstance(f, Not):
        return _neg(f.operand)
    if isinstance(f, And):
        return And(_pos(f.left), _pos(f.right))
    if isinstance(f, Or):
        return Or(_pos(f.left), _pos(f.right))
    if isinstance(f, Implies):
        return Or(_neg(f.left), _pos(f.right))
    if isinstance(f, Next):
        return Next(_pos(f.operand))
    if isinstance(f, Finally):
        return Finally(_pos(f.operand))
    if isinstance(f, Globally):
        return Globally(_pos(f.operand))
    if isinstance(f, Until):
        return Until(_pos(f.left), _pos(f.right))
    if isinstance(f, Release):
        return Release(_pos(f.left), _pos(f.right))
    raise TypeError(type(f).__name__)


def _neg(f: Formula) -> Formula:
    if isinstance(f, Atom):
        return Not(f)
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return _pos(f.operand)
    if isinstance(f, And):
        return Or(_neg(f.left), _neg(f.right))
    if isinstance(f, Or):
        return And(_neg(f.left), _neg(f.right))
    if isinstance(f, Implies):
        return And(_pos(f.left), _neg(f.right))
    if isinstance(f, Next):
        return Next(_neg(f.operand))
    if isinstance(f, Finally):
        return Globally(_neg(f.operand))
    if isinstance(f, Globally):
        return Finally(_neg(f.operand))
    if isinstance(f, Until):
        return Release(_neg(f.left), _neg(f.right))
    if isinstance(f, Release):
        return Until(_neg(f.left), _neg(f.right))
    raise TypeError(type(f).__name__)


def is_nnf(f: Formula) -> bool:
    if isinstance(f, (Atom, Const)):
        return True
    if isinstance(f, Not):
        return isinstance(f.operand, Atom)
    if isinstance(f, Implies):
        return False
    if isinstance(f, (Next, Finally, Globally)):
        return is_nnf(f.operand)
    return is_nnf(f.left) and is_nnf(f.right)
