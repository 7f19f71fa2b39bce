"""Exact inference by world enumeration with rational arithmetic.

Worlds are not visited one by one.  Every ground atom gets a bit mask over
all 2^n assignments of the relevant probabilistic atoms (bit w of the mask
is the atom's truth in world w, binary-counter order), and the stratified
fixpoint runs once on these masks.  Probabilities of masks are summed by a
memoised Shannon split, which collapses whenever a variable is irrelevant.
"""

from __future__ import annotations

import os
from collections import defaultdict
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx

from .core import CoreProgram
from .errors import NegativeCycle, TooManyWorlds, ZeroEvidence
from .grounding import GroundingResult, GroundRule, relaxed_ground
from .syntax import Atom

DEFAULT_WORLD_LIMIT = 24


def world_limit() -> int:
    return int(os.environ.get("ANGERONA_WORLD_LIMIT", DEFAULT_WORLD_LIMIT))


def atom_key(a: Atom):
    return (a.pred, a.values())


def _pattern(i: int, n: int) -> int:
    width = 1 << i
    m = ((1 << width) - 1) << width
    length = width << 1
    total = 1 << n
    while length < total:
        m |= m << length
        length <<= 1
    return m


Literals = Sequence[tuple[Atom, bool]]


class Oracle:
    def __init__(self, core: CoreProgram, grounding: GroundingResult | None = None,
                 limit: int | None = None):
        self.core = core
        self.g = grounding or relaxed_ground(core)
        self.limit = world_limit() if limit is None else limit
        self.probs = self.g.prob_atoms(core)
        self.rules_for: dict[Atom, list[GroundRule]] = defaultdict(list)
        dg = nx.DiGraph()
        dg.add_nodes_from(self.g.atoms)
        neg_edges = []
        for gr in self.g.all_instances():
            self.rules_for[gr.head].append(gr)
            for lit in gr.body:
                if lit.atom in self.g.atoms:
                    dg.add_edge(lit.atom, gr.head)
                    if not lit.positive:
                        neg_edges.append((lit.atom, gr.head))
        self.graph = dg
        cond = nx.condensation(dg)
        comp = cond.graph["mapping"]
        for u, v in neg_edges:
            if comp[u] == comp[v]:
                cyc = nx.shortest_path(dg, v, u)
                raise NegativeCycle(cyc + [v])
        order = list(nx.topological_sort(cond))
        self.rank = {c: i for i, c in enumerate(order)}
        self.comp = comp
        self.members = {c: sorted(cond.nodes[c]["members"], key=atom_key) for c in cond}

    # ------------------------------------------------------------ evaluation

    def _ancestors(self, atoms: Iterable[Atom]) -> set[Atom]:
        out: set[Atom] = set()
        stack = [a for a in atoms if a in self.g.atoms]
        while stack:
            a = stack.pop()
            if a in out:
                continue
            out.add(a)
            stack.extend(p for p in self.graph.predecessors(a) if p not in out)
        return out

    def _variables(self, needed: set[Atom]) -> list[Atom]:
        vs = sorted((a for a in needed if a in self.probs and 0 < self.probs[a] < 1), key=atom_key)
        if len(vs) > self.limit:
            raise TooManyWorlds(len(vs), self.limit)
        return vs

    def _evaluate(self, needed: set[Atom], base: dict[Atom, int], full: int) -> dict[Atom, int]:
        val: dict[Atom, int] = {}
        comps = sorted({self.comp[a] for a in needed}, key=self.rank.__getitem__)

        def body_mask(gr: GroundRule) -> int:
            m = full
            for lit in gr.body:
                v = val.get(lit.atom, 0)
                m &= v if lit.positive else full & ~v
                if not m:
                    break
            return m

        for c in comps:
            scc = self.members[c]
            for a in scc:
                val[a] = base.get(a, 0)
            recursive = len(scc) > 1 or any(
                lit.atom == scc[0] for gr in self.rules_for[scc[0]] for lit in gr.body)
            while True:
                changed = False
                for a in scc:
                    m = val[a]
                    for gr in self.rules_for[a]:
                        m |= body_mask(gr)
                        if m == full:
                            break
                    if m != val[a]:
                        val[a] = m
                        changed = True
                if not (changed and recursive):
                    break
        return val

    def _setup(self, atoms: Iterable[Atom]):
        needed = self._ancestors(atoms)
        vs = self._variables(needed)
        n = len(vs)
        full = (1 << (1 << n)) - 1
        base = {}
        for a in needed:
            p = self.probs.get(a)
            if p == 1:
                base[a] = full
        for i, a in enumerate(vs):
            base[a] = _pattern(i, n)
        val = self._evaluate(needed, base, full)
        return vs, val, full

    @staticmethod
    def _mass(mask: int, probs: list[Fraction]) -> Fraction:
        n = len(probs)
        fulls = [(1 << (1 << k)) - 1 for k in range(n + 1)]
        memo: dict[tuple[int, int], Fraction] = {}

        def rec(m: int, k: int) -> Fraction:
            if m == 0:
                return Fraction(0)
            if m == fulls[k]:
                return Fraction(1)
            key = (m, k)
            r = memo.get(key)
            if r is not None:
                return r
            half = 1 << (k - 1)
            lo = m & fulls[k - 1]
            hi = m >> half
            p = probs[k - 1]
            if lo == hi:
                r = rec(lo, k - 1)
            else:
                r = (1 - p) * rec(lo, k - 1) + p * rec(hi, k - 1)
            memo[key] = r
            return r

        return rec(mask, n)

    @staticmethod
    def _lits_mask(val: dict[Atom, int], lits: Literals, full: int) -> int:
        m = full
        for a, v in lits:
            x = val.get(a, 0)
            m &= x if v else full & ~x
        return m

    # ------------------------------------------------------------ public API

    def query_prob(self, target: Atom | Literals, evidence: Literals = ()) -> Fraction:
        lits = [(target, True)] if isinstance(target, Atom) else list(target)
        ev = list(self.core.evidence) + list(evidence)
        vs, val, full = self._setup([a for a, _ in lits + ev])
        probs = [self.probs[a] for a in vs]
        em = self._lits_mask(val, ev, full)
        pe = self._mass(em, probs)
        if pe == 0:
            raise ZeroEvidence()
        tm = self._lits_mask(val, lits, full) & em
        return self._mass(tm, probs) / pe

    def distribution(self, preds: Iterable[str] | None = None) -> dict[frozenset[Atom], Fraction]:
        preds = set(self.core.user_preds if preds is None else preds)
        targets = sorted((a for a in self.g.atoms if a.pred in preds), key=atom_key)
        ev = list(self.core.evidence)
        vs, val, full = self._setup(targets + [a for a, _ in ev])
        probs = [self.probs[a] for a in vs]
        em = self._lits_mask(val, ev, full)
        pe = self._mass(em, probs)
        if pe == 0:
            raise ZeroEvidence()
        cells: list[tuple[frozenset, int]] = [(frozenset(), em)]
        for a in targets:
            x = val.get(a, 0)
            nxt = []
            for s, m in cells:
                if m & x:
                    nxt.append((s | {a}, m & x))
                if m & ~x & full:
                    nxt.append((s, m & ~x & full))
            cells = nxt
        return {s: self._mass(m, probs) / pe for s, m in cells}

    def wfm(self, assignment: dict[Atom, bool]) -> set[Atom]:
        base = {a: 1 for a, p in self.probs.items() if p == 1}
        for a, v in assignment.items():
            base[a] = 1 if v else 0
        val = self._evaluate(set(self.g.atoms), base, 1)
        return {a for a, m in val.items() if m}

    def prob_atoms(self) -> list[Atom]:
        return sorted(self.probs, key=atom_key)


def wfm(p: CoreProgram, f: dict[Atom, bool]) -> set[Atom]:
    return Oracle(p).wfm(f)


def distribution(p: CoreProgram, preds: Iterable[str] | None = None,
                 limit: int | None = None) -> dict[frozenset[Atom], Fraction]:
    return Oracle(p, limit=limit).distribution(preds)


def query_prob(p: CoreProgram, target: Atom | Literals, evidence: Literals = (),
               limit: int | None = None) -> Fraction:
    return Oracle(p, limit=limit).query_prob(target, evidence)
