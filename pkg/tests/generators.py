"""Seeded generators of well-sorted plan models for round-trip tests."""

import random

from ltlprompt.lang import (
    Assignment, BinOp, BooleanSort, BoolLit, Case, EnumLit, EnumSort, IntLit, IntRange, Not,
    SetLit, SmvModel, VarDecl, VarRef,
)

ENUM_POOL = ["Stop", "Go", "Left", "Right", "Wait", "Grab", "Idle"]


def _decls(rng):
    out = []
    for i in range(rng.randint(1, 6)):
        k = rng.random()
        if k < 0.5:
            sort = BooleanSort()
        elif k < 0.8:
            sort = EnumSort(tuple(rng.sample(ENUM_POOL, rng.randint(2, 4))))
        else:
            lo = rng.randint(0, 3)
            sort = IntRange(lo, lo + rng.randint(1, 6))
        out.append(VarDecl(f"x{i}", sort))
    return out


class _Exprs:
    def __init__(self, rng, decls):
        self.rng = rng
        self.decls = decls

    def of(self, kind, d):
        return [v for v in self.decls if isinstance(v.sort, kind)]

    def boolean(self, depth):
        rng = self.rng
        if depth <= 0 or rng.random() < 0.3:
            bools = self.of(BooleanSort, 0)
            if bools and rng.random() < 0.7:
                return VarRef(rng.choice(bools).name)
            return BoolLit(rng.random() < 0.5)
        r = rng.random()
        if r < 0.2:
            return Not(self.boolean(depth - 1))
        if r < 0.6:
            return BinOp(rng.choice(["&", "|", "->"]), self.boolean(depth - 1), self.boolean(depth - 1))
        enums, ints = self.of(EnumSort, 0), self.of(IntRange, 0)
        if enums and r < 0.8:
            v = rng.choice(enums)
            return BinOp(rng.choice(["=", "!="]), VarRef(v.name), EnumLit(rng.choice(v.sort.values)))
        if ints:
            return BinOp(rng.choice(["=", "!=", "<", "<=", ">", ">="]), self.integer(depth - 1),
                         self.integer(depth - 1))
        return self.boolean(depth - 1)

    def integer(self, depth):
        rng = self.rng
        ints = self.of(IntRange, 0)
        if depth <= 0 or rng.random() < 0.5:
            if ints and rng.random() < 0.6:
                return VarRef(rng.choice(ints).name)
            return IntLit(rng.randint(0, 9))
        return BinOp(rng.choice(["+", "-"]), self.integer(depth - 1), self.integer(depth - 1))

    def value(self, decl, depth):
        s = decl.sort
        if isinstance(s, BooleanSort):
            return self.boolean(depth)
        if isinstance(s, IntRange):
            e = self.integer(depth)
            # bare literals must lie in the declared range; compound arithmetic saturates
            return IntLit(self.rng.randint(s.lo, s.hi)) if isinstance(e, IntLit) else e
        same = [v for v in self.of(EnumSort, 0) if v.sort == s]
        if self.rng.random() < 0.3 and same:
            return VarRef(self.rng.choice(same).name)
        return EnumLit(self.rng.choice(s.values))

    def literal_set(self, decl):
        s = decl.sort
        if isinstance(s, BooleanSort):
            return SetLit((BoolLit(True), BoolLit(False)))
        if isinstance(s, IntRange):
            return SetLit(tuple(IntLit(v) for v in range(s.lo, min(s.hi, s.lo + 2) + 1)))
        return SetLit(tuple(EnumLit(v) for v in s.values[:2]))


def gen_model(rng: random.Random) -> SmvModel:
    decls = _decls(rng)
    ex = _Exprs(rng, decls)
    assigns = []
    for d in decls:
        if rng.random() < 0.7:
            assigns.append(Assignment("init", d.name, ex.value(d, 1)))
        r = rng.random()
        if r < 0.15:
            continue
        if r < 0.3:
            rhs = ex.literal_set(d)
        elif r < 0.7:
            branches = [(ex.boolean(2), ex.value(d, 1)) for _ in range(rng.randint(1, 3))]
            branches.append((BoolLit(True), ex.value(d, 1)))
            rhs = Case(tuple(branches))
        else:
            rhs = ex.value(d, 2)
        assigns.append(Assignment("next", d.name, rhs))
    return SmvModel(rng.choice(["main", "plan", "driving_task"]), tuple(decls), tuple(assigns))
