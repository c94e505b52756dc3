"""Independent decision procedures used to cross-check ``check``.

``lasso_oracle`` enumerates lassos of bounded size and evaluates the formula
on each one. Its exactness threshold grows as ``|states| * 2^|closure|``, far
beyond what enumeration can reach, so ``tableau_oracle`` supplies exact
verdicts by a different route: a closure-labelled tableau over the system's
states searched for a reachable self-fulfilling strongly connected component.
Neither shares code with the automaton construction or the nested search.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx

from ltlprompt.ltl.formula import (
    And, Atom, Const, Finally, Formula, Globally, Implies, Next, Not, Or, Release, Until, closure,
    subformulas,
)
from ltlprompt.ltl.lasso import Lasso, Verdict, eval_on_lasso, ts_holds
from ltlprompt.ts import ResourceError, TransitionSystem

DEFAULT_BUDGET = 2_000_000


class OracleBudgetExceeded(ResourceError):
    pass


def exact_bound(ts: TransitionSystem, phi: Formula) -> int:
    """Lasso size beyond which bounded enumeration is complete."""
    return len(ts) * 2 ** len(closure(phi))


def _paths(ts: TransitionSystem, length: int) -> Iterator[Tuple[int, ...]]:
    """Paths with ``length`` states from an initial state, in lexicographic order."""
    stack: List[Tuple[int, ...]] = [(s,) for s in sorted(ts.initial, reverse=True)]
    while stack:
        path = stack.pop()
        if len(path) == length:
            yield path
            continue
        for t in sorted(ts.succ[path[-1]], reverse=True):
            stack.append(path + (t,))


def lasso_oracle(ts: TransitionSystem, phi: Formula, bound: int,
                 budget: int = DEFAULT_BUDGET) -> Verdict:
    """First violating lasso with stem and loop of at most ``bound`` states.

    Lassos are ordered by total length, then by state sequence, then by stem
    length. Raises ``OracleBudgetExceeded`` once ``budget`` lassos were tried.
    """
    if bound < 1:
        raise ValueError("bound must be positive")
    holds = ts_holds(ts)
    tried = 0
    for total in range(1, 2 * bound + 1):
        for path in _paths(ts, total):
            last = path[-1]
            for k in range(max(0, total - bound), min(bound, total - 1) + 1):
                if path[k] not in ts.succ[last]:
                    continue
                tried += 1
                if tried > budget:
                    raise OracleBudgetExceeded(f"more than {budget} lassos enumerated")
                if not eval_on_lasso(path[:k], path[k:], phi, holds):
                    return Verdict.violated(Lasso(path[:k], path[k:]))
    return Verdict.ok()


# -- tableau oracle ------------------------------------------------------------


def to_core(f: Formula) -> Formula:
    """Rewrite into atoms, TRUE, !, &, X and U only."""
    if isinstance(f, Atom):
        return f
    if isinstance(f, Const):
        return Const(True) if f.value else Not(Const(True))
    if isinstance(f, Not):
        return Not(to_core(f.operand))
    if isinstance(f, And):
        return And(to_core(f.left), to_core(f.right))
    if isinstance(f, Or):
        return Not(And(Not(to_core(f.left)), Not(to_core(f.right))))
    if isinstance(f, Implies):
        return Not(And(to_core(f.left), Not(to_core(f.right))))
    if isinstance(f, Next):
        return Next(to_core(f.operand))
    if isinstance(f, Until):
        return Until(to_core(f.left), to_core(f.right))
    if isinstance(f, Finally):
        return Until(Const(True), to_core(f.operand))
    if isinstance(f, Globally):
        return Not(Until(Const(True), Not(to_core(f.operand))))
    if isinstance(f, Release):
        return Not(Until(Not(to_core(f.left)), Not(to_core(f.right))))
    raise TypeError(type(f).__name__)


class _Tableau:
    """Nodes are ints ``s << m | bits``; ``bits`` fixes every X and U subformula."""

    def __init__(self, ts: TransitionSystem, psi: Formula, node_cap: int):
        self.ts, self.node_cap = ts, node_cap
        self.order = list(dict.fromkeys(subformulas(psi)))
        self.temps = [f for f in self.order if isinstance(f, (Next, Until))]
        self.m = len(self.temps)
        self.tix = {f: i for i, f in enumerate(self.temps)}
        self.untils = [f for f in self.temps if isinstance(f, Until)]
        self.psi = psi
        self.evals = {f: ts.atom_evaluator(f.test) for f in self.order if isinstance(f, Atom)}
        self.next_mask = sum(1 << self.tix[f] for f in self.temps if isinstance(f, Next))
        self._valid: Dict[int, Dict[int, List[int]]] = {}
        self._req: Dict[int, Tuple[int, int]] = {}
        self._succ_cache: Dict[tuple, List[int]] = {}

    def values(self, s: int, bits: int) -> Optional[Dict[Formula, bool]]:
        """Truth of every closure formula at (s, bits), or None if locally inconsistent."""
        val: Dict[Formula, bool] = {}
        for f in self.order:
            if isinstance(f, Atom):
                val[f] = self.evals[f](s)
            elif isinstance(f, Const):
                val[f] = f.value
            elif isinstance(f, Not):
                val[f] = not val[f.operand]
            elif isinstance(f, And):
                val[f] = val[f.left] and val[f.right]
            else:
                v = bool(bits >> self.tix[f] & 1)
                if isinstance(f, Until):
                    if val[f.right] and not v:
                        return None
                    if not val[f.left] and not val[f.right] and v:
                        return None
                val[f] = v
        return val

    def valid_at(self, s: int) -> Dict[int, List[int]]:
        """Consistent bit vectors at ``s`` grouped by what a predecessor observes.

        The signature holds, at each X position, the operand's truth here and,
        at each U position, the U's own bit.
        """
        got = self._valid.get(s)
        if got is None:
            got = {}
            for bits in range(2 ** self.m):
                val = self.values(s, bits)
                if val is None:
                    continue
                sig = bits & ~self.next_mask
                for f in self.temps:
                    if isinstance(f, Next) and val[f.operand]:
                        sig |= 1 << self.tix[f]
                got.setdefault(sig, []).append(bits)
                node = s << self.m | bits
                care = self.next_mask
                for u in self.untils:
                    if val[u.left] and not val[u.right]:
                        care |= 1 << self.tix[u]
                self._req[node] = (care, bits & care)
            self._valid[s] = got
        return got

    def successors(self, node: int) -> List[int]:
        s = node >> self.m
        self.valid_at(s)
        care, want = self._req[node]
        targets = self.ts.succ[s]
        key = (id(targets), care, want)
        out = self._succ_cache.get(key)
        if out is None:
            out = []
            for t in targets:
                for sig, group in self.valid_at(t).items():
                    if sig & care == want:
                        out.extend(t << self.m | b for b in group)
            self._succ_cache[key] = out
        return out

    def initial(self) -> List[int]:
        init = []
        for s in self.ts.initial:
            for group in self.valid_at(s).values():
                for bits in group:
                    if self.values(s, bits)[self.psi]:
                        init.append(s << self.m | bits)
        return sorted(init)

    def fulfils(self, node: int, u: Until) -> bool:
        s, bits = node >> self.m, node & ((1 << self.m) - 1)
        return not (bits >> self.tix[u] & 1) or self.values(s, bits)[u.right]


def _reachable(tab: _Tableau, init: List[int]) -> Dict[int, List[int]]:
    adj: Dict[int, List[int]] = {n: [] for n in init}
    queue = deque(init)
    while queue:
        n = queue.popleft()
        succ = adj[n] = tab.successors(n)
        for c in succ:
            if c not in adj:
                if len(adj) >= tab.node_cap:
                    raise OracleBudgetExceeded(f"tableau exceeds {tab.node_cap} nodes")
                adj[c] = []
                queue.append(c)
    return adj


def _bfs_path(adj: Dict[int, List[int]], sources: Sequence[int], targets: set,
              within: Optional[set] = None, min_len: int = 0) -> List[int]:
    """Shortest path from any source to any target using at least ``min_len`` edges."""
    parent: Dict = {}
    queue = deque()
    for src in sources:
        parent[(src, 0)] = None
        queue.append((src, 0))
    while queue:
        node, d = queue.popleft()
        if node in targets and d >= min_len:
            path = []
            key = (node, d)
            while key is not None:
                path.append(key[0])
                key = parent[key]
            return path[::-1]
        for nxt in adj[node]:
            if within is not None and nxt not in within:
                continue
            key = (nxt, min(d + 1, min_len))
            if key not in parent:
                parent[key] = (node, d)
                queue.append(key)
    raise AssertionError("no path")


def tableau_oracle(ts: TransitionSystem, phi: Formula, node_cap: int = 2_000_000) -> Verdict:
    """Exact verdict by searching the tableau of ``!phi`` for a fulfilling cycle."""
    tab = _Tableau(ts, to_core(Not(phi)), node_cap)
    init = tab.initial()
    adj = _reachable(tab, init)
    g = nx.DiGraph()
    g.add_nodes_from(adj)
    g.add_edges_from((a, b) for a, succ in adj.items() for b in succ)
    for comp in sorted(nx.strongly_connected_components(g), key=min):
        first = min(comp)
        if len(comp) == 1 and first not in adj[first]:
            continue
        goals = []
        for u in tab.untils:
            hit = sorted(n for n in comp if tab.fulfils(n, u))
            if not hit:
                break
            goals.append(hit[0])
        else:
            stem = _bfs_path(adj, init, set(comp))
            entry = stem[-1]
            cycle = [entry]
            for goal in goals:
                cycle += _bfs_path(adj, [cycle[-1]], {goal}, comp)[1:]
            cycle += _bfs_path(adj, [cycle[-1]], {entry}, comp, min_len=1)[1:]
            lasso = Lasso(tuple(n >> tab.m for n in stem[:-1]),
                          tuple(n >> tab.m for n in cycle[:-1]))
            if eval_on_lasso(lasso.stem, lasso.loop, phi, ts_holds(ts)):
                raise AssertionError(f"tableau lasso {lasso} does not refute {phi}")
            return Verdict.violated(lasso)
    return Verdict.ok()
