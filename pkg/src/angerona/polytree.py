"""Exact belief propagation on forests of poly-trees.

Each connected component is handled as a factor tree (one factor per CPT).
Messages flow in two passes, collect towards the lexicographically smallest
node id and distribute back, and every message is normalised.  Beliefs of a
whole component are cached per evidence restricted to that component.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Mapping

import numpy as np

from .bn import BayesianNetwork
from .errors import NotPolytree, ZeroEvidence

ZERO_EVIDENCE = 1e-300
Evidence = Mapping[str, object]  # node id -> allowed value set (or a single value)


def validate_polytree(bn: BayesianNetwork) -> bool:
    parent = {n: n for n in bn.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in bn.edges():
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def _allowed(bn: BayesianNetwork, ev: Evidence) -> dict[str, frozenset]:
    out = {}
    for nid, v in ev.items():
        if nid not in bn.nodes:
            raise KeyError(f"unknown node {nid}")
        # tuples are values of CPT-like nodes; other collections are value sets
        vs = frozenset(v) if isinstance(v, (set, frozenset, list)) else frozenset([v])
        bad = vs - set(bn.nodes[nid].domain)
        if bad:
            raise ValueError(f"values {sorted(map(str, bad))} not in the domain of {nid}")
        out[nid] = vs
    return out


class PolytreeEngine:
    def __init__(self, bn: BayesianNetwork, exact: bool = False):
        if not validate_polytree(bn):
            raise NotPolytree("network has an undirected cycle")
        self.bn, self.exact = bn, exact
        self.children = bn.children()
        self.comp: dict[str, str] = {}
        self.members: dict[str, list[str]] = {}
        for nid in sorted(bn.nodes):
            if nid in self.comp:
                continue
            stack, seen = [nid], {nid}
            while stack:
                x = stack.pop()
                for y in bn.nodes[x].parents + self.children[x]:
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            root = min(seen)
            for x in seen:
                self.comp[x] = root
            self.members[root] = sorted(seen)
        self.tables = {nid: (n.table if exact else n.table.astype(float)) for nid, n in bn.nodes.items()}
        self.cache: dict[tuple, tuple[dict[str, np.ndarray], float]] = {}

    # ------------------------------------------------------------ messages

    def _vec(self, n: int, fill=1):
        return np.full(n, Fraction(fill), dtype=object) if self.exact else np.full(n, float(fill))

    def _norm(self, m):
        s = m.sum()
        if s == 0:
            raise ZeroEvidence()
        return m / s, s

    def _factor_msg(self, f: str, target: str, incoming: dict[str, np.ndarray]):
        node = self.bn.nodes[f]
        scope = node.parents + [f]
        t = self.tables[f]
        for ax, v in enumerate(scope):
            if v == target:
                continue
            shape = [1] * len(scope)
            shape[ax] = -1
            t = t * incoming[v].reshape(shape)
        axes = tuple(i for i, v in enumerate(scope) if v != target)
        # a variable may appear once per factor; the target axis is unique
        return t.sum(axis=axes) if axes else t

    def component_beliefs(self, root: str, ev: dict[str, frozenset]):
        key = (root, tuple(sorted((k, tuple(sorted(v, key=str))) for k, v in ev.items())))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        bn = self.bn
        lam = {}
        for v in self.members[root]:
            dom = bn.nodes[v].domain
            if v in ev:
                lam[v] = np.array([Fraction(int(x in ev[v])) if self.exact else float(x in ev[v]) for x in dom],
                                  dtype=object if self.exact else float)
            else:
                lam[v] = self._vec(len(dom))
        # factor tree traversal from the root variable
        order: list[tuple[tuple[str, str], tuple[str, str] | None]] = []
        stack = [(("v", root), None)]
        seen = {("v", root)}
        while stack:
            x, par = stack.pop()
            order.append((x, par))
            kind, nid = x
            if kind == "v":
                nbrs = [("f", nid)] + [("f", c) for c in self.children[nid]]
            else:
                nbrs = [("v", p) for p in bn.nodes[nid].parents] + [("v", nid)]
            for y in nbrs:
                if y not in seen:
                    seen.add(y)
                    stack.append((y, x))
        msgs: dict[tuple, np.ndarray] = {}  # (from, to) -> message
        nbr: dict[tuple, list[tuple]] = {}
        for x, par in order:
            nbr.setdefault(x, [])
            if par is not None:
                nbr[x].append(par)
                nbr.setdefault(par, []).append(x)
        logz = 0.0
        scale = Fraction(1)

        def send(x, y):
            kind, nid = x
            if kind == "v":
                m = lam[nid].copy()
                for z in nbr[x]:
                    if z != y:
                        m = m * msgs[(z, x)]
            else:
                inc = {z[1]: msgs[(z, x)] for z in nbr[x] if z != y}
                m = self._factor_msg(nid, y[1], inc)
            return self._norm(m)

        for x, par in reversed(order):
            if par is None:
                continue
            m, s = send(x, par)
            msgs[(x, par)] = m
            if self.exact:
                scale *= s
            else:
                logz += math.log(s)
        for x, par in order:
            for y in nbr[x]:
                if y != par:
                    msgs[(x, y)], _ = send(x, y)
        beliefs = {}
        for v in self.members[root]:
            b = lam[v].copy()
            for z in nbr[("v", v)]:
                b = b * msgs[(z, ("v", v))]
            s = b.sum()
            if v == root:
                if self.exact:
                    pe = scale * s
                    if pe == 0:
                        raise ZeroEvidence()
                elif s <= 0 or logz + math.log(s) < math.log(ZERO_EVIDENCE):
                    raise ZeroEvidence()
                else:
                    pe = math.exp(logz + math.log(s))
            if s == 0:
                raise ZeroEvidence()
            beliefs[v] = b / s
        res = (beliefs, pe)
        self.cache[key] = res
        return res

    # ------------------------------------------------------------ queries

    def marginal(self, node: str, evidence: Evidence | None = None) -> dict:
        ev = _allowed(self.bn, evidence or {})
        root = self.comp[node]
        local = {k: v for k, v in ev.items() if self.comp[k] == root}
        beliefs, _ = self.component_beliefs(root, local)
        return dict(zip(self.bn.nodes[node].domain, beliefs[node].tolist()))

    def evidence_prob(self, evidence: Evidence) -> float | Fraction:
        ev = _allowed(self.bn, evidence)
        out = Fraction(1) if self.exact else 1.0
        for root in sorted({self.comp[k] for k in ev}):
            local = {k: v for k, v in ev.items() if self.comp[k] == root}
            out *= self.component_beliefs(root, local)[1]
        return out


def engine_for(bn: BayesianNetwork, exact: bool = False) -> PolytreeEngine:
    attr = "_exact_engine" if exact else "_float_engine"
    eng = getattr(bn, attr, None)
    if eng is None or len(eng.tables) != len(bn.nodes):
        eng = PolytreeEngine(bn, exact)
        setattr(bn, attr, eng)
    return eng


def marginal(bn: BayesianNetwork, node: str, evidence: Evidence | None = None, exact: bool = False) -> dict:
    return engine_for(bn, exact).marginal(node, evidence)
