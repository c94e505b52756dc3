"""LTL to Büchi automata by tableau expansion (Gerth-Peled-Vardi-Wolper).

The tableau yields a generalized automaton with one acceptance set per
eventuality (``U`` or ``F`` subformula). It is degeneralized with a round-robin
counter and then shrunk by merging bisimilar states.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Sequence, Tuple

from ltlprompt.ltl.formula import (
    And, Atom, Const, Finally, Formula, Globally, Next, Not, Or, Release, Until, subformulas,
)
from ltlprompt.ltl.nnf import is_nnf

Label = Tuple[FrozenSet[Atom], FrozenSet[Atom]]  # (must hold, must not hold)
TRUE_LABEL: Label = (frozenset(), frozenset())


@dataclass(frozen=True)
class BuchiAutomaton:
    """State ids are dense; transitions[q] lists (label, target) in a fixed order.

    A transition's label constrains the letter read while taking it.
    """

    n_states: int
    initial: Tuple[int, ...]
    transitions: Tuple[Tuple[Tuple[Label, int], ...], ...]
    accepting: FrozenSet[int]

    def accepts_lasso(self, stem: Sequence, loop: Sequence, holds) -> bool:
        """Language membership of ``stem·loop^ω``; ``holds(letter, atom)`` evaluates atoms.

        Used only by tests: searches the finite product of the automaton with
        the lasso positions for a reachable accepting cycle.
        """
        word = list(stem) + list(loop)
        n, k = len(word), len(stem)

        def ok(label: Label, letter) -> bool:
            pos, neg = label
            return all(holds(letter, a) for a in pos) and not any(holds(letter, a) for a in neg)

        # product node (i, q): position i is the next letter to read
        start = [(0, q) for q in self.initial]
        edges: Dict[tuple, List[tuple]] = {}
        seen = set(start)
        queue = deque(start)
        while queue:
            i, q = queue.popleft()
            nxt = i + 1 if i + 1 < n else k
            out = [(nxt, t) for lab, t in self.transitions[q] if ok(lab, word[i])]
            edges[(i, q)] = out
            for node in out:
                if node not in seen:
                    seen.add(node)
                    queue.append(node)
        # an accepting state must sit on a cycle of the product graph
        for node in seen:
            if node[1] not in self.accepting:
                continue
            stack, visited = list(edges[node]), set()
            while stack:
                m = stack.pop()
                if m == node:
                    return True
                if m in visited:
                    continue
                visited.add(m)
                stack.extend(edges[m])
        return False


class _Node:
    __slots__ = ("id", "incoming", "old", "next")

    def __init__(self, nid: int, incoming: set, old: frozenset, nxt: frozenset):
        self.id, self.incoming, self.old, self.next = nid, incoming, old, nxt


_INIT = -1


def _is_literal(f: Formula) -> bool:
    return isinstance(f, (Atom, Const)) or (isinstance(f, Not) and isinstance(f.operand, Atom))


def _complement(f: Formula) -> Formula:
    return f.operand if isinstance(f, Not) else Not(f)


def _tableau(phi: Formula) -> List[_Node]:
    nodes: List[_Node] = []

    def add(new: tuple, *items) -> tuple:
        return new + tuple(x for x in items if x not in new)

    # explicit work stack of pending expansions keeps Python recursion shallow
    work = [({_INIT}, (phi,), frozenset(), frozenset())]
    while work:
        incoming, new, old, nxt = work.pop()
        if not new:
            for nd in nodes:
                if nd.old == old and nd.next == nxt:
                    nd.incoming |= incoming
                    break
            else:
                nd = _Node(len(nodes), set(incoming), old, nxt)
                nodes.append(nd)
                work.append(({nd.id}, tuple(nxt), frozenset(), frozenset()))
            continue
        eta, rest = new[0], new[1:]
        if eta in old:
            work.append((incoming, rest, old, nxt))
            continue
        old_e = old | {eta}
        if _is_literal(eta):
            if eta == Const(False) or _complement(eta) in old:
                continue
            work.append((incoming, rest, old_e, nxt))
        elif isinstance(eta, And):
            work.append((incoming, add(rest, eta.left, eta.right), old_e, nxt))
        elif isinstance(eta, Or):
            work.append((incoming, add(rest, eta.right), old_e, nxt))
            work.append((incoming, add(rest, eta.left), old_e, nxt))
        elif isinstance(eta, Until):
            work.append((incoming, add(rest, eta.right), old_e, nxt))
            work.append((incoming, add(rest, eta.left), old_e, nxt | {eta}))
        elif isinstance(eta, Release):
            work.append((incoming, add(rest, eta.left, eta.right), old_e, nxt))
            work.append((incoming, add(rest, eta.right), old_e, nxt | {eta}))
        elif isinstance(eta, Finally):
            work.append((incoming, add(rest, eta.operand), old_e, nxt))
            work.append((incoming, rest, old_e, nxt | {eta}))
        elif isinstance(eta, Globally):
            work.append((incoming, add(rest, eta.operand), old_e, nxt | {eta}))
        elif isinstance(eta, Next):
            work.append((incoming, rest, old_e, nxt | {eta.operand}))
        else:
            raise ValueError(f"formula is not in negation normal form: {eta}")
    return nodes


def _label(old: frozenset) -> Label:
    pos = frozenset(f for f in old if isinstance(f, Atom))
    neg = frozenset(f.operand for f in old if isinstance(f, Not) and isinstance(f.operand, Atom))
    return pos, neg


def to_buchi(phi: Formula) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the words satisfying ``phi`` (in NNF)."""
    if not is_nnf(phi):
        raise ValueError("to_buchi expects a formula in negation normal form")
    nodes = _tableau(phi)
    eventualities = [f for f in dict.fromkeys(subformulas(phi)) if isinstance(f, (Until, Finally))]
    acc_sets = []
    for ev in eventualities:
        goal = ev.right if isinstance(ev, Until) else ev.operand
        acc_sets.append({nd.id for nd in nodes if ev not in nd.old or goal in nd.old})
    k = len(acc_sets)

    succ_of: Dict[int, List[int]] = {_INIT: []}
    for nd in nodes:
        succ_of.setdefault(nd.id, [])
    for nd in nodes:
        for src in sorted(nd.incoming):
            succ_of[src].append(nd.id)
    labels = {nd.id: _label(nd.old) for nd in nodes}

    # degeneralize: state (node, counter); counter i waits for acceptance set i
    def bump(n: int, i: int) -> int:
        if k == 0:
            return 0
        return (i + 1) % k if n in acc_sets[i] else i

    def accepting(n: int, i: int) -> bool:
        if n == _INIT:
            return False
        return True if k == 0 else (i == 0 and n in acc_sets[0])

    start = (_INIT, 0)
    ids = {start: 0}
    order = [start]
    trans: List[List[Tuple[Label, int]]] = []
    pos = 0
    while pos < len(order):
        n, i = order[pos]
        j = bump(n, i)
        out = []
        for m in succ_of[n]:
            tgt = (m, j)
            if tgt not in ids:
                ids[tgt] = len(order)
                order.append(tgt)
            out.append((labels[m], ids[tgt]))
        trans.append(out)
        pos += 1
    acc = {ids[s] for s in order if accepting(*s)}
    return _reduce(len(order), 0, trans, acc)


def _reduce(n: int, init: int, trans: List[List[Tuple[Label, int]]], acc: set) -> BuchiAutomaton:
    """Drop dead states, merge bisimilar states, then fold the initial state if possible."""
    alive = set(range(n))
    changed = True
    while changed:
        changed = False
        for q in list(alive):
            if not any(t in alive for _, t in trans[q]):
                alive.discard(q)
                changed = True
    if init not in alive:
        return BuchiAutomaton(1, (0,), ((),), frozenset())

    block = {q: (q in acc, q == init) for q in alive}
    while True:
        sig = {q: (block[q], frozenset((lab, block[t]) for lab, t in trans[q] if t in alive))
               for q in alive}
        names: Dict[tuple, int] = {}
        for q in sorted(alive):
            names.setdefault(sig[q], len(names))
        refined = {q: names[sig[q]] for q in alive}
        if len(set(refined.values())) == len(set(block.values())):
            block = refined
            break
        block = refined

    out_sig = {q: frozenset((lab, block[t]) for lab, t in trans[q] if t in alive) for q in alive}
    start_block = block[init]
    for q in sorted(alive):
        if q != init and out_sig[q] == out_sig[init]:
            start_block = block[q]
            break

    # renumber blocks breadth-first from the start block
    rep: Dict[int, int] = {}
    for q in sorted(alive):
        rep.setdefault(block[q], q)
    new_id = {start_block: 0}
    order = [start_block]
    new_trans = []
    pos = 0
    while pos < len(order):
        b = order[pos]
        q = rep[b]
        edges = []
        for lab, t in sorted(out_sig[q], key=lambda e: (_label_key(e[0]), e[1])):
            if t not in new_id:
                new_id[t] = len(order)
                order.append(t)
            edges.append((lab, new_id[t]))
        new_trans.append(tuple(edges))
        pos += 1
    accepting = frozenset(new_id[b] for b in order if rep[b] in acc)
    return BuchiAutomaton(len(order), (0,), tuple(new_trans), accepting)


def _label_key(label: Label) -> tuple:
    pos, neg = label
    return (sorted(map(str, pos)), sorted(map(str, neg)))
