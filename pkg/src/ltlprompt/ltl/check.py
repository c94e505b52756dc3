"""Explicit-state LTL model checking.

The product of the transition system with the automaton for the negated
property is explored on the fly. Emptiness uses the nested depth-first search
of Courcoubetis, Vardi, Wolper and Yannakakis; the accepting cycle it finds
becomes a lasso counterexample.

Before the nested search, a breadth-first sweep of the product looks for an
accepting state with a self-loop; such a state yields a one-state loop reached
by a shortest stem. Otherwise the cycle found by the nested search is replaced
by a shortest cycle through the same accepting state, and the stem by a
shortest path into that cycle. Lassos are short but not globally minimal.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, List, Optional, Tuple

from ltlprompt.ltl.buchi import BuchiAutomaton, to_buchi
from ltlprompt.ltl.formula import Formula, Not, atoms
from ltlprompt.ltl.lasso import Lasso, Verdict, eval_on_lasso, ts_holds
from ltlprompt.ltl.nnf import nnf
from ltlprompt.ts import ResourceError, TransitionSystem

DEFAULT_PRODUCT_CAP = 2 ** 22


class ProductCapExceeded(ResourceError):
    pass


class UnsoundCounterexample(AssertionError):
    """A produced lasso does not violate the property; signals a checker bug."""


class _Product:
    def __init__(self, ts: TransitionSystem, ba: BuchiAutomaton, cap: int):
        self.ts, self.ba, self.cap = ts, ba, cap
        self.nq = ba.n_states
        props = atoms_of(ba)
        bit = {a: 1 << i for i, a in enumerate(props)}
        evals = [(bit[a], ts.atom_evaluator(a.test)) for a in props]
        self._evals = evals
        self._masks: Dict[int, int] = {}
        # labels as (required mask, forbidden mask)
        self.trans = [
            [(sum(bit[a] for a in pos), sum(bit[a] for a in neg), t) for (pos, neg), t in edges]
            for edges in ba.transitions
        ]
        self._succ: Dict[int, Tuple[int, ...]] = {}

    def mask(self, s: int) -> int:
        m = self._masks.get(s)
        if m is None:
            m = 0
            for b, f in self._evals:
                if f(s):
                    m |= b
            self._masks[s] = m
        return m

    def _step(self, sources, q: int, s_from: Optional[int]) -> Tuple[int, ...]:
        out = []
        ordered = list(sources)
        if s_from is not None and s_from in ordered:
            ordered.remove(s_from)
            ordered.insert(0, s_from)  # stuttering first favours short loops
        for s2 in ordered:
            m = self.mask(s2)
            for req, forb, q2 in self.trans[q]:
                if m & req == req and not m & forb:
                    out.append(s2 * self.nq + q2)
        return tuple(out)

    def initial(self) -> Tuple[int, ...]:
        out: List[int] = []
        for q in self.ba.initial:
            out.extend(self._step(self.ts.initial, q, None))
        return tuple(dict.fromkeys(out))

    def succ(self, p: int) -> Tuple[int, ...]:
        r = self._succ.get(p)
        if r is None:
            if len(self._succ) >= self.cap:
                raise ProductCapExceeded(f"product exceeds {self.cap} states")
            s, q = divmod(p, self.nq)
            r = self._succ[p] = self._step(self.ts.succ[s], q, s)
        return r

    def accepting(self, p: int) -> bool:
        return p % self.nq in self.ba.accepting

    def state(self, p: int) -> int:
        return p // self.nq


def atoms_of(ba: BuchiAutomaton) -> list:
    seen: dict = {}
    for edges in ba.transitions:
        for (pos, neg), _ in edges:
            for a in sorted(pos, key=str) + sorted(neg, key=str):
                seen.setdefault(a, None)
    return list(seen)


def _nested_dfs(prod: _Product) -> Optional[Tuple[List[int], List[int]]]:
    """Return (stem path ending in the seed, cycle from the seed) or None."""
    visited1: set = set()
    flagged: set = set()
    for root in prod.initial():
        if root in visited1:
            continue
        visited1.add(root)
        stack = [(root, iter(prod.succ(root)))]
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is not None:
                if child not in visited1:
                    visited1.add(child)
                    stack.append((child, iter(prod.succ(child))))
                continue
            stack.pop()
            if prod.accepting(node):
                cycle = _second_dfs(prod, node, flagged)
                if cycle is not None:
                    return [n for n, _ in stack] + [node], cycle
    return None


def _second_dfs(prod: _Product, seed: int, flagged: set) -> Optional[List[int]]:
    stack = [(seed, iter(prod.succ(seed)))]
    while stack:
        node, it = stack[-1]
        child = next(it, None)
        if child is None:
            stack.pop()
            continue
        if child == seed:
            return [n for n, _ in stack]
        if child not in flagged:
            flagged.add(child)
            stack.append((child, iter(prod.succ(child))))
    return None


def _self_loop_lasso(prod: _Product) -> Optional[Tuple[List[int], List[int]]]:
    parent: Dict[int, Optional[int]] = {}
    queue = deque()
    for r in prod.initial():
        if r not in parent:
            parent[r] = None
            queue.append(r)
    while queue:
        p = queue.popleft()
        succ = prod.succ(p)
        if prod.accepting(p) and p in succ:
            return _path_to(parent, p)[:-1], [p]
        for c in succ:
            if c not in parent:
                parent[c] = p
                queue.append(c)
    return None


def _path_to(parent: Dict[int, Optional[int]], p: int) -> List[int]:
    path = []
    x: Optional[int] = p
    while x is not None:
        path.append(x)
        x = parent[x]
    path.reverse()
    return path


def _shortest_cycle(prod: _Product, seed: int) -> List[int]:
    parent: Dict[int, Optional[int]] = {seed: None}
    queue = deque([seed])
    while queue:
        p = queue.popleft()
        for c in prod.succ(p):
            if c == seed:
                return _path_to(parent, p)
            if c not in parent:
                parent[c] = p
                queue.append(c)
    raise AssertionError("seed is not on a cycle")


def _shorten(prod: _Product, cycle: List[int]) -> Tuple[List[int], List[int]]:
    """Shortest product path from an initial state into ``cycle``; rotate the cycle to match."""
    on_cycle = {p: i for i, p in enumerate(cycle)}
    parent: Dict[int, Optional[int]] = {}
    queue = deque()
    for r in prod.initial():
        if r not in parent:
            parent[r] = None
            queue.append(r)
    while queue:
        p = queue.popleft()
        if p in on_cycle:
            path = _path_to(parent, p)
            i = on_cycle[p]
            return path[:-1], cycle[i:] + cycle[:i]
        for c in prod.succ(p):
            if c not in parent:
                parent[c] = p
                queue.append(c)
    raise AssertionError("cycle unreachable from initial states")


def check(ts: TransitionSystem, phi: Formula, product_cap: int = DEFAULT_PRODUCT_CAP) -> Verdict:
    """Decide whether every path of ``ts`` satisfies ``phi``."""
    for a in atoms(phi):
        ts.atom_evaluator(a.test)  # sort-checks the atom against the system
    ba = to_buchi(nnf(Not(phi)))
    prod = _Product(ts, ba, product_cap)
    found = _self_loop_lasso(prod)
    if found is None:
        nested = _nested_dfs(prod)
        if nested is None:
            return Verdict.ok()
        stem_path, _ = nested
        found = _shorten(prod, _shortest_cycle(prod, stem_path[-1]))
    stem_p, loop_p = found
    lasso = Lasso(tuple(prod.state(p) for p in stem_p), tuple(prod.state(p) for p in loop_p))
    if not lasso.is_path_of(ts) or eval_on_lasso(lasso.stem, lasso.loop, phi, ts_holds(ts)):
        raise UnsoundCounterexample(f"lasso {lasso} does not refute {phi}")
    return Verdict.violated(lasso)
